"""Per-round metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

__all__ = ["RoundMetrics", "CSV_FIELDS"]


@dataclass
class RoundMetrics:
    round: int
    submitted: int = 0  # new orders accepted this round
    book_size: int = 0  # orders considered by matching (carried + new)
    rejected: int = 0
    matched: int = 0  # orders matched (two per pair)
    fees: int = 0
    settled_worth: int = 0  # sum of matched buy rates
    expired: int = 0
    dropped: int = 0
    penalties: int = 0
    aborted: bool = False
    flagged_brokers: list = field(default_factory=list)
    durations: dict = field(default_factory=dict)  # seconds: wait, submit, sort, match, settle, shuffle
    privacy_gain_trader: float | None = None
    privacy_gain_broker: float | None = None
    truth: list | None = None  # [mean, std] of the book's rates, the privacy reference
    pairs: list = field(default_factory=list)

    @property
    def matched_pct(self) -> float:
        return 100.0 * self.matched / self.book_size if self.book_size else 0.0

    @property
    def fees_pct(self) -> float:
        return 100.0 * self.fees / self.settled_worth if self.settled_worth else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["matched_pct"] = self.matched_pct
        d["fees_pct"] = self.fees_pct
        return d


CSV_FIELDS = [
    "round",
    "submitted",
    "book_size",
    "rejected",
    "matched",
    "matched_pct",
    "fees",
    "fees_pct",
    "expired",
    "dropped",
    "penalties",
    "aborted",
    "wait",
    "submit",
    "sort",
    "match",
    "settle",
    "shuffle",
    "privacy_gain_trader",
    "privacy_gain_broker",
]
