"""Run a multi-round experiment and write its artefacts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..privacy import GaussianParams, LeakageView, PrivacyReport, estimate_params
from .config import ExperimentConfig
from .metrics import CSV_FIELDS, RoundMetrics
from .orders import generate_orders
from .protocols import Market, RialtoMarket, make_market

__all__ = ["ExperimentReport", "run_experiment", "privacy_reports_from_logs", "summarize"]

VARIANCE_NOTE = (
    "The 'variance' parameter is used as a variance: uniform rates get an integer "
    "half-width of round(sqrt(3 * variance)); normal rates get sd sqrt(variance)."
)


def _mean(xs):
    xs = [x for x in xs if x is not None and math.isfinite(x)]
    return float(np.mean(xs)) if xs else None


def summarize(rounds: list[RoundMetrics]) -> dict:
    matched = sum(r.matched for r in rounds)
    submitted = sum(r.submitted for r in rounds)
    fees = sum(r.fees for r in rounds)
    worth = sum(r.settled_worth for r in rounds)
    return {
        "rounds": len(rounds),
        "submitted": submitted,
        "matched": matched,
        # every order is matched at most once, so this stays within [0, 100]
        "matched_pct": 100.0 * matched / submitted if submitted else 0.0,
        "mean_round_matched_pct": _mean([r.matched_pct for r in rounds]),
        "fees": fees,
        "fees_pct": 100.0 * fees / worth if worth else 0.0,
        "expired": sum(r.expired for r in rounds),
        "rejected": sum(r.rejected for r in rounds),
        "penalties": sum(r.penalties for r in rounds),
        "aborted_rounds": sum(1 for r in rounds if r.aborted),
        "privacy_gain_broker": _mean([r.privacy_gain_broker for r in rounds]),
        "privacy_gain_trader": _mean([r.privacy_gain_trader for r in rounds]),
        "durations": {
            k: _mean([r.durations.get(k) for r in rounds])
            for k in ("wait", "submit", "validate", "sort", "match", "settle", "shuffle")
            if any(k in r.durations for r in rounds)
        },
    }


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rounds: list[RoundMetrics]
    market: Market | None = field(default=None, repr=False)

    @property
    def summary(self) -> dict:
        return summarize(self.rounds)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "metadata": {
                "variance_interpretation": VARIANCE_NOTE,
                "variance_rule": "bessel",
                "wait_time": "logical; reported as round_time / 2, never slept",
            },
            "summary": self.summary,
            "rounds": [r.to_dict() for r in self.rounds],
        }


def run_experiment(config: ExperimentConfig, out_dir: str | Path | None = None, **market_kw) -> ExperimentReport:
    """Run ``config.rounds`` rounds; write ``report.json``, ``rounds.csv``,
    ``ledger.jsonl`` and ``leakage.jsonl`` into ``out_dir`` if given."""
    config.validate()
    market = make_market(config, **market_kw)
    rounds = [market.run_round(generate_orders(config, r)) for r in range(config.rounds)]
    report = ExperimentReport(config, rounds, market)
    if out_dir is not None:
        write_outputs(report, Path(out_dir))
    return report


def write_outputs(report: ExperimentReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, default=str))
    with open(out / "rounds.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in report.rounds:
            row = r.to_dict()
            row.update(r.durations)
            w.writerow(row)
    (out / "ledger.jsonl").write_text(report.market.ledger.dump_ndjson())
    log = report.market.engine.log.to_jsonl() if isinstance(report.market, RialtoMarket) else ""
    (out / "leakage.jsonl").write_text(log)


def privacy_reports_from_logs(report: dict, leakage_lines) -> list[PrivacyReport]:
    """Rebuild broker-view PrivacyReports from a saved leakage log.

    The sorted permutation of a round gives N and the position of each
    revealed buyer; the truth comes from the per-round record in the report.
    """
    by_round: dict[int, dict] = {}
    for line in leakage_lines:
        line = line.strip()
        if not line:
            continue
        e = json.loads(line)
        by_round.setdefault(e["round"], {})[e["tag"]] = e["payload"]
    truths = {r["round"]: r.get("truth") for r in report.get("rounds", [])}
    out = []
    for rnd in sorted(by_round):
        entries = by_round[rnd]
        truth = truths.get(rnd)
        if "topK-rates" not in entries or "sorted-permutation" not in entries or not truth:
            continue
        order = entries["sorted-permutation"]["order"]
        n = len(order)
        pos = {oid: i for i, oid in enumerate(order)}
        ids, rates = entries["topK-rates"]["ids"], entries["topK-rates"]["rates"]
        view = LeakageView(tuple(rates), n, top_ranks=tuple(n - pos[i] for i in ids))
        try:
            est = estimate_params(view)
        except ValueError:
            continue
        out.append(PrivacyReport.build(rnd, "broker", view, est, GaussianParams(*truth)))
    return out
