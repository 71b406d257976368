"""Run a few private trading rounds and compare them with the plaintext book.

Every order rate is split between three brokers, sorted and matched inside
the MPC engine, and settled against Pedersen-committed balances.  The same
order stream is fed to the zero-privacy baseline so the match sets can be
compared side by side.

    python demos/quickstart_round.py
"""

from rialto.sim import ExperimentConfig, generate_orders, make_market

cfg = ExperimentConfig(protocol="rialto", orders=64, rounds=3, seed=42)
private = make_market(cfg)
public = make_market(ExperimentConfig(protocol="zero-privacy", orders=64, seed=42))

for r in range(cfg.rounds):
    intents = generate_orders(cfg, r)
    m = private.run_round(intents)
    p = public.run_round(intents)
    print(f"round {r}: {m.submitted} new orders, book of {m.book_size}, {m.matched} matched, fees {m.fees}")
    print(f"  same pairs as the public book: {m.pairs == p.pairs}")
    print(f"  broker-view privacy gain {m.privacy_gain_broker:.2f}%, trader view {m.privacy_gain_trader:.2f}%")
    print(f"  leaked to brokers: {sorted(set(private.engine.log.tags(r)))}")
    print("  timings: " + ", ".join(f"{k} {v:.2f}s" for k, v in m.durations.items() if k != "wait"))
