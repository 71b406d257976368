"""Synthetic order flow."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig

__all__ = ["Intent", "generate_orders", "rate_bounds", "round_rng"]


@dataclass(frozen=True)
class Intent:
    seq: int  # submission sequence number inside the round (the timestamp)
    side: str
    rate: int


def round_rng(config: ExperimentConfig, round_no: int, stream: str = "orders") -> np.random.Generator:
    tag = sum(ord(c) << (8 * i) for i, c in enumerate(stream[:8]))
    return np.random.default_rng([config.seed, round_no, tag])


def rate_bounds(config: ExperimentConfig, side: str) -> tuple[int, int]:
    """Inclusive integer range of the uniform law for ``side``.

    Spread mode uses one range for both sides, ``mean +- spread*mean/2``, so the
    highest bid and the lowest ask are ``spread*mean`` apart.  Otherwise the
    half-width is ``round(sqrt(3 * variance))``, which matches the variance of
    a continuous uniform law.
    """
    if config.spread is not None:
        m = config.spread_mean
        half = config.spread * m / 2
        return math.ceil(m - half), math.floor(m + half)
    mean = config.buy_mean if side == "BUY" else config.sell_mean
    half = round(math.sqrt(3 * config.variance))
    return round(mean - half), round(mean + half)


def generate_orders(config: ExperimentConfig, round_no: int, rng: np.random.Generator | None = None) -> list[Intent]:
    rng = rng if rng is not None else round_rng(config, round_no)
    n = int(rng.poisson(config.orders))
    sides = np.where(rng.random(n) < 0.5, "BUY", "SELL")
    out = []
    for seq, side in enumerate(sides):
        side = str(side)
        if config.distribution == "uniform":
            lo, hi = rate_bounds(config, side)
            rate = int(rng.integers(lo, hi + 1))
        else:
            mean = config.spread_mean if config.spread is not None else (
                config.buy_mean if side == "BUY" else config.sell_mean
            )
            rate = max(0, int(round(rng.normal(mean, math.sqrt(config.variance)))))
        out.append(Intent(seq, side, rate))
    return out
