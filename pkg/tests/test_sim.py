import csv
import json
import math

import numpy as np
import pytest

from rialto.matching import BUY, SELL
from rialto.sim import ConfigError, ExperimentConfig, generate_orders, make_market, run_experiment
from rialto.sim.cli import main as cli_main
from rialto.sim.experiment import privacy_reports_from_logs
from rialto.sim.orders import Intent, rate_bounds


def minted(mk):
    """Everything that entered the market: one initial balance per trader."""
    return mk.config.initial_balance * len(mk.traders)


def small(**kw):
    base = dict(orders=24, rounds=2, test_mode=True, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


# -- config and order flow -----------------------------------------------------------


@pytest.mark.parametrize(
    "bad",
    [
        dict(protocol="nope"),
        dict(orders=0),
        dict(rounds=0),
        dict(brokers=0),
        dict(protocol="rialto", brokers=1),
        dict(spread=0.0),
        dict(spread=1.0),
        dict(bucket_width=0),
        dict(matching="fifo"),
        dict(distribution="cauchy"),
        dict(cheat_rate=2),
    ],
)
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad).validate()
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(**bad))


def test_config_round_trip():
    c = ExperimentConfig(spread=0.04, seed=9)
    assert ExperimentConfig.from_dict({**c.to_dict(), "unknown": 1}) == c


def test_order_stream_deterministic():
    c = ExperimentConfig(seed=5)
    assert generate_orders(c, 2) == generate_orders(c, 2)
    assert generate_orders(c, 2) != generate_orders(c, 3)


def test_uniform_rates_law_of_large_numbers():
    c = ExperimentConfig(orders=100_000)
    rng = np.random.default_rng(0)
    intents = generate_orders(c, 0, rng)
    buys = [i.rate for i in intents if i.side == BUY]
    sells = [i.rate for i in intents if i.side == SELL]
    assert abs(np.mean(buys) - 255) < 0.5 and abs(np.mean(sells) - 245) < 0.5
    # integer uniform on mean +- 7 has variance ((15)^2 - 1) / 12 = 18.67
    assert np.var(buys) == pytest.approx(((2 * 7 + 1) ** 2 - 1) / 12, rel=0.03)
    assert abs(len(buys) / len(intents) - 0.5) < 0.01


def test_spread_bounds():
    c = ExperimentConfig(spread=0.04, spread_mean=250)
    lo, hi = rate_bounds(c, BUY)
    assert (lo, hi) == rate_bounds(c, SELL) == (245, 255)
    assert hi - lo == pytest.approx(0.04 * 250)  # lowest ask vs highest bid


def test_normal_distribution_flow():
    c = ExperimentConfig(orders=20_000, distribution="normal")
    rates = [i.rate for i in generate_orders(c, 0) if i.side == BUY]
    assert abs(np.mean(rates) - 255) < 0.2
    assert np.std(rates) == pytest.approx(math.sqrt(15), rel=0.05)


# -- rounds --------------------------------------------------------------------------


@pytest.mark.parametrize("protocol", ["zero-privacy", "semi-private", "bucketization", "rialto", "rialto-plus"])
def test_zero_intents(protocol):
    mk = make_market(small(protocol=protocol))
    m = mk.run_round([])
    assert (m.submitted, m.matched, m.fees) == (0, 0, 0)
    if protocol.startswith("rialto"):
        assert mk.engine.log.entries == []


def test_two_crossing_orders_under_rialto():
    mk = make_market(small(protocol="rialto"))
    m = mk.run_round([Intent(0, BUY, 260), Intent(1, SELL, 250)])
    assert m.matched == 2 and m.fees == 10
    assert mk.conservation_total() == minted(mk)
    assert mk.ledger.accounts[0].opening[0] == 10


def test_insufficient_balance_rejected_end_to_end():
    for protocol in ("zero-privacy", "semi-private", "bucketization", "rialto"):
        mk = make_market(small(protocol=protocol, initial_balance=100))
        m = mk.run_round([Intent(0, BUY, 150), Intent(1, BUY, 90)])
        assert (m.rejected, m.submitted) == (1, 1), protocol


def _stream(seed, rounds=3, orders=30):
    c = ExperimentConfig(orders=orders, seed=seed)
    return [generate_orders(c, r) for r in range(rounds)]


def test_cross_protocol_identical_matches():
    for seed in range(2):
        stream = _stream(seed)
        results = {}
        for protocol in ("zero-privacy", "semi-private", "rialto", "rialto-plus", "centralized", "offchain-matching"):
            mk = make_market(small(protocol=protocol, seed=seed))
            results[protocol] = [(m.pairs, m.fees) for m in (mk.run_round(i) for i in stream)]
        first = results["zero-privacy"]
        assert all(r == first for r in results.values())


def test_bucket_width_one_matches_exactly_and_wider_matches_fewer():
    stream = _stream(4)
    exact = make_market(small(protocol="zero-privacy"))
    w1 = make_market(small(protocol="bucketization", bucket_width=1))
    w4 = make_market(small(protocol="bucketization", bucket_width=4))
    for intents in stream:
        a, b, c = exact.run_round(intents), w1.run_round(intents), w4.run_round(intents)
        assert b.pairs == a.pairs
        assert c.matched <= a.matched


@pytest.mark.parametrize("matching", ["maximal-fair", "price-time"])
@pytest.mark.parametrize("protocol", ["semi-private", "bucketization", "rialto", "rialto-plus"])
def test_conservation_every_round(protocol, matching):
    mk = make_market(small(protocol=protocol, matching=matching, orders=30, max_unmatched_rounds=0))
    for intents in _stream(7, rounds=3):
        mk.run_round(intents)
        assert mk.conservation_total() == minted(mk)
    assert mk.ledger.verify_chain()


def test_expiry_refunds():
    mk = make_market(small(protocol="rialto", max_unmatched_rounds=1))
    # unmatched in its first round, carried once, then gone after the second miss
    assert mk.run_round([Intent(0, BUY, 100)]).expired == 0
    assert mk.run_round([]).expired == 1
    assert not mk.ledger.orders
    assert mk.conservation_total() == minted(mk)
    assert all(t.balance == mk.config.initial_balance for t in mk.traders)


def test_shuffle_lets_every_trader_find_its_account():
    mk = make_market(small(protocol="rialto", orders=40))
    for intents in _stream(8, rounds=3, orders=40):
        mk.run_round(intents)
        for t in mk.traders:
            acc = mk.ledger.accounts[t.account_id]
            assert acc.balance == t.commitment(mk.params)
            assert acc.opening[0] == t.balance


def test_mean_settlement_conserves():
    mk = make_market(small(protocol="bucketization", settlement="mean"))
    for intents in _stream(2):
        m = mk.run_round(intents)
        assert mk.conservation_total() == minted(mk)
    assert m.fees <= m.matched  # at most one unit of parity per pair


def test_bucketization_cheaters_penalised():
    mk = make_market(small(protocol="bucketization", cheat_rate=0.5, penalty_fine=3, orders=40))
    pen = 0
    for intents in _stream(5, orders=40):
        pen += mk.run_round(intents).penalties
        assert mk.conservation_total() == minted(mk)
    assert pen > 0
    assert any(t.penalized for t in mk.traders if t.cheats)
    assert not any(t.penalized for t in mk.traders if not t.cheats)


def test_bucketization_dropouts_refunded():
    mk = make_market(small(protocol="bucketization", phase2_dropout=0.5))
    m = mk.run_round(_stream(1)[0])
    assert m.dropped > 0
    assert mk.conservation_total() == minted(mk)


def _tamper_next(mk, broker, count, component="rate"):
    start = mk.ledger._next_order
    for oid in range(start, start + count):
        mk.engine.brokers[broker].tamper[(oid, component)] = 1


def test_rialto_plus_excludes_a_flagged_broker():
    mk = make_market(small(protocol="rialto-plus", orders=20))
    ref = make_market(small(protocol="zero-privacy", orders=20))
    stream = _stream(6, orders=20)
    _tamper_next(mk, 2, 5)
    m = mk.run_round(stream[0])
    assert m.flagged_brokers == [2] and not m.aborted
    assert m.pairs == ref.run_round(stream[0]).pairs
    # the tampered shares of carried orders are checked again next round
    m2 = mk.run_round(stream[1])
    r2 = ref.run_round(stream[1])
    assert m2.pairs == r2.pairs


def test_rialto_plus_aborts_without_quorum():
    mk = make_market(small(protocol="rialto-plus", orders=20))
    stream = _stream(6, orders=20)
    _tamper_next(mk, 0, 5)
    _tamper_next(mk, 1, 5, "rho")
    m = mk.run_round(stream[0])
    assert m.aborted and m.matched == 0
    assert len(mk.ledger.orders) == m.submitted  # carried forward
    assert mk.conservation_total() == minted(mk)
    for b in mk.engine.brokers:
        b.tamper.clear()
    m2 = mk.run_round([])
    assert not m2.aborted and m2.matched > 0


def test_privacy_metrics_recorded_for_rialto():
    mk = make_market(ExperimentConfig(orders=60, distribution="normal", variance=225, seed=1))
    m = mk.run_round(generate_orders(mk.config, 0))
    assert m.truth is not None and m.privacy_gain_broker is not None and m.privacy_gain_broker >= 0


# -- experiments and the CLI -------------------------------------------------------------------


def test_run_experiment_one_round_two_orders():
    rep = run_experiment(ExperimentConfig(protocol="zero-privacy", orders=2, rounds=1))
    assert len(rep.rounds) == 1


def test_experiment_deterministic_except_durations():
    a = run_experiment(small(protocol="rialto")).to_dict()
    b = run_experiment(small(protocol="rialto")).to_dict()
    for d in (a, b):
        d["summary"].pop("durations")
        for r in d["rounds"]:
            r.pop("durations")
    assert a == b


def test_cli_simulate_and_analyze(tmp_path, capsys):
    out = tmp_path / "run"
    rc = cli_main(["simulate", "--protocol", "rialto", "--orders", "40", "--rounds", "2", "--distribution",
                   "normal", "--variance", "225", "--seed", "2", "--out", str(out)])
    assert rc == 0
    for name in ("report.json", "rounds.csv", "ledger.jsonl", "leakage.jsonl"):
        assert (out / name).exists()
    report = json.loads((out / "report.json").read_text())
    assert "variance_interpretation" in report["metadata"]
    rows = list(csv.DictReader(open(out / "rounds.csv")))
    assert len(rows) == 2 and float(rows[0]["sort"]) >= 0
    tags = {json.loads(l)["tag"] for l in open(out / "leakage.jsonl")}
    assert tags <= {"sorted-permutation", "aggregate-fees", "topK-rates", "shuffled-commitments"}
    capsys.readouterr()
    assert cli_main(["analyze-privacy", "--report", str(out / "report.json")]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    recorded = {r["round"]: r["privacy_gain_broker"] for r in report["rounds"]}
    assert lines
    for rep in lines:
        assert rep["gain"] == pytest.approx(recorded[rep["round"]])


def test_cli_rejects_bad_config(tmp_path, capsys):
    assert cli_main(["simulate", "--spread", "150", "--out", str(tmp_path)]) == 2


def test_spread_flag_is_percent(tmp_path):
    cli_main(["simulate", "--protocol", "zero-privacy", "--orders", "10", "--rounds", "1", "--spread", "4",
              "--out", str(tmp_path)])
    assert json.loads((tmp_path / "report.json").read_text())["config"]["spread"] == 0.04


def test_privacy_reports_skip_incomplete_rounds():
    assert privacy_reports_from_logs({"rounds": []}, ['{"round": 0, "tag": "aggregate-fees", "payload": {}}']) == []
