"""Experiment configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

__all__ = ["PROTOCOLS", "ConfigError", "ExperimentConfig"]

PROTOCOLS = (
    "centralized",
    "zero-privacy",
    "semi-private",
    "offchain-matching",
    "bucketization",
    "rialto",
    "rialto-plus",
)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    protocol: str = "rialto"
    orders: float = 512  # Poisson mean per round
    rounds: int = 12
    brokers: int = 3
    topk: int = 16
    bucket_width: int = 4
    distribution: str = "uniform"  # or "normal"
    buy_mean: float = 255
    sell_mean: float = 245
    variance: float = 15  # read as a variance; see report metadata
    spread: float | None = None  # quoted spread as a fraction, e.g. 0.04
    spread_mean: float = 250
    max_unmatched_rounds: int = 3
    matching: str = "maximal-fair"  # or "price-time"
    seed: int = 0
    test_mode: bool = False
    settlement: str = "difference"  # bucketization only: "difference" or "mean"
    initial_balance: int = 10_000
    round_time: float = 30.0
    n_bits: int = 32
    penalty_fine: int = 0  # bucketization: fine charged to a cheating seller
    cheat_rate: float = 0.0  # bucketization: share of traders sending a false opening
    phase2_dropout: float = 0.0  # bucketization: share of orders that never disclose a bucket

    def validate(self) -> "ExperimentConfig":
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.orders <= 0 or self.rounds <= 0 or self.brokers <= 0:
            raise ConfigError("orders, rounds and brokers must be positive")
        if self.protocol in ("rialto", "rialto-plus") and self.brokers < 2:
            raise ConfigError("secret sharing needs at least 2 brokers")
        if self.topk < 0:
            raise ConfigError("topk must be non-negative")
        if self.bucket_width < 1:
            raise ConfigError("bucket width must be at least 1")
        if self.distribution not in ("uniform", "normal"):
            raise ConfigError(f"unknown distribution {self.distribution!r}")
        if self.variance <= 0:
            raise ConfigError("variance must be positive")
        if self.spread is not None and not 0 < self.spread < 1:
            raise ConfigError("spread must lie in (0, 1)")
        if self.max_unmatched_rounds < 0:
            raise ConfigError("max_unmatched_rounds must be non-negative")
        if self.matching not in ("maximal-fair", "price-time"):
            raise ConfigError(f"unknown matching {self.matching!r}")
        if self.settlement not in ("difference", "mean"):
            raise ConfigError(f"unknown settlement scheme {self.settlement!r}")
        if self.initial_balance < 0 or self.initial_balance >= 2**self.n_bits:
            raise ConfigError("initial balance must fit the range-proof width")
        for name in ("cheat_rate", "phase2_dropout"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})
