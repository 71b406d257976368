"""Command line entry point: ``rialto simulate`` and ``rialto analyze-privacy``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PROTOCOLS, ConfigError, ExperimentConfig
from .experiment import privacy_reports_from_logs, run_experiment

log = logging.getLogger("rialto")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rialto", description="Privacy-preserving exchange simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = ExperimentConfig()
    s = sub.add_parser("simulate", help="run a multi-round experiment")
    s.add_argument("--protocol", choices=PROTOCOLS, default=d.protocol)
    s.add_argument("--orders", type=float, default=d.orders, help="mean orders per round (Poisson)")
    s.add_argument("--rounds", type=int, default=d.rounds)
    s.add_argument("--brokers", type=int, default=d.brokers)
    s.add_argument("--topk", type=int, default=d.topk)
    s.add_argument("--bucket-width", type=int, default=d.bucket_width)
    s.add_argument("--distribution", choices=("uniform", "normal"), default=d.distribution)
    s.add_argument("--variance", type=float, default=d.variance)
    s.add_argument("--spread", type=float, default=None, help="quoted spread in percent, e.g. 4")
    s.add_argument("--matching", choices=("maximal-fair", "price-time"), default=d.matching)
    s.add_argument("--settlement", choices=("difference", "mean"), default=d.settlement)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--test-mode", action="store_true", help="track and check every opening")
    s.add_argument("--out", type=Path, required=True)

    a = sub.add_parser("analyze-privacy", help="recompute privacy reports from a saved leakage log")
    a.add_argument("--report", type=Path, required=True, help="report.json written by simulate")
    a.add_argument("--leakage", type=Path, default=None, help="defaults to leakage.jsonl next to the report")
    return p


def _simulate(args) -> int:
    cfg = ExperimentConfig(
        protocol=args.protocol,
        orders=args.orders,
        rounds=args.rounds,
        brokers=args.brokers,
        topk=args.topk,
        bucket_width=args.bucket_width,
        distribution=args.distribution,
        variance=args.variance,
        spread=None if args.spread is None else args.spread / 100,
        matching=args.matching,
        settlement=args.settlement,
        seed=args.seed,
        test_mode=args.test_mode,
    )
    try:
        cfg.validate()
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(cfg, args.out)
    s = report.summary
    print(
        f"{cfg.protocol}: {s['rounds']} rounds, matched {s['matched_pct']:.1f}%, "
        f"fees {s['fees_pct']:.2f}% of settled worth -> {args.out}"
    )
    return 0


def _analyze(args) -> int:
    report = json.loads(args.report.read_text())
    leak = args.leakage or args.report.with_name("leakage.jsonl")
    with open(leak) as fh:
        reports = privacy_reports_from_logs(report, fh)
    for r in reports:
        print(json.dumps(r.to_dict(), default=float))
    if not reports:
        print("no round revealed enough to estimate", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "simulate":
        return _simulate(args)
    return _analyze(args)


if __name__ == "__main__":
    sys.exit(main())
