"""Trader clients and one marketplace driver per protocol variant.

Every driver exposes ``run_round(intents) -> RoundMetrics`` and keeps the
ledger, the trader population and (for the MPC variants) the broker engine
between rounds.  Traders keep the opening of their own balance commitment,
which is what lets them build proofs and find their account after a shuffle.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

import numpy as np

from ..bucketization import (
    BucketError,
    DeviationReport,
    TraderKeys,
    assign_bucket,
    choose_buckets,
    histogram,
    judge_deviation,
    matches_commitment,
    open_sealed,
    penalize,
    prove_fee,
    prove_mean,
    seal_opening,
    settle_difference,
    settle_mean,
    verify_bucket,
)
from ..group import Commitment, GroupParams, RangeProofError, commit, default_params, prove_range
from ..ledger import Ledger, OrderRejected, PlainLedger, order_context
from ..matching import (
    BUY,
    SELL,
    BucketLabel,
    PlainOrder,
    SortedBook,
    bucket_match,
    bucket_value,
    maximal_fair_match,
    price_time_match,
    price_time_positional,
    sort_book,
)
from ..mpc import MPCEngine, OrderMeta, ShareBundle
from ..privacy import GaussianParams, InsufficientData, LeakageView, bucketization_estimate, estimate_params, privacy_gain
from ..sharing import split_additive, split_threshold
from .config import ExperimentConfig
from .metrics import RoundMetrics
from .orders import Intent, round_rng

__all__ = [
    "Trader",
    "Market",
    "PlainMarket",
    "SemiPrivateMarket",
    "BucketMarket",
    "RialtoMarket",
    "make_market",
]


@dataclass
class OpenOrder:
    order_id: int
    side: str
    rate: int
    blinding: int = 0
    rho: int = 0
    round: int = 0


@dataclass
class Trader:
    """A trader client.  ``balance``/``blinding`` open its account commitment."""

    name: int
    balance: int
    blinding: int = 0
    account_id: int | None = None
    order: OpenOrder | None = None
    keys: TraderKeys | None = None
    cheats: bool = False
    penalized: int = 0
    rng: random.Random = field(default_factory=random.Random, repr=False)

    def commitment(self, params: GroupParams) -> Commitment:
        return commit(params, self.balance, self.blinding)

    def credit(self, value: int, blinding: int, q: int) -> None:
        self.balance += value
        self.blinding = (self.blinding + blinding) % q


# ---------------------------------------------------------------------------


class Market:
    """Shared bookkeeping: trader pool, order ownership, expiry and metrics."""

    uses_commitments = False

    def __init__(self, config: ExperimentConfig, params: GroupParams | None = None):
        self.config = config
        self.params = params or default_params()
        self.round = 0
        self.traders: list[Trader] = []
        self.owner: dict[int, Trader] = {}  # open order id -> trader
        self.rates: dict[int, int] = {}  # harness-side ground truth, never given to the protocol
        self.history: list[RoundMetrics] = []

    # -- trader pool -----------------------------------------------------------

    def _new_trader(self) -> Trader:
        name = len(self.traders)
        rng = random.Random(f"{self.config.seed}/trader/{name}")
        t = Trader(name, self.config.initial_balance, rng=rng)
        if self.uses_commitments:
            t.blinding = rng.randrange(self.params.q)
        self._register(t)
        self.traders.append(t)
        return t

    def _register(self, t: Trader) -> None:
        raise NotImplementedError

    def _idle_traders(self):
        for t in self.traders:
            if t.order is None:
                yield t
        while True:
            yield self._new_trader()

    # -- round skeleton --------------------------------------------------------

    def run_round(self, intents: list[Intent]) -> RoundMetrics:
        m = RoundMetrics(self.round)
        m.durations["wait"] = self.config.round_time / 2
        t0 = time.perf_counter()
        pool = self._idle_traders()
        for intent in intents:
            t = next(pool)
            oid = self._submit(t, intent)
            if oid is None:
                m.rejected += 1
            else:
                m.submitted += 1
                self.owner[oid] = t
                self.rates[oid] = intent.rate
        m.durations["submit"] = time.perf_counter() - t0
        self._trade(m)
        self.ledger.seal_block()
        self.history.append(m)
        self.round += 1
        return m

    def _submit(self, trader: Trader, intent: Intent) -> int | None:
        raise NotImplementedError

    def _trade(self, m: RoundMetrics) -> None:
        raise NotImplementedError

    # -- helpers shared by the drivers -------------------------------------

    def _match(self, book: SortedBook, plain: list[PlainOrder] | None = None):
        if self.config.matching == "maximal-fair":
            return maximal_fair_match(book)
        if plain is not None:
            return price_time_match(plain)
        return price_time_positional(book)

    def _record_pairs(self, m: RoundMetrics, pairs) -> None:
        m.pairs = [list(p) for p in pairs]
        m.matched = 2 * len(pairs)
        m.settled_worth = sum(self.rates[b] for b, _ in pairs)

    def _finish_orders(self, ids) -> list[Trader]:
        out = []
        for oid in ids:
            t = self.owner.pop(oid)
            self.rates.pop(oid, None)
            t.order = None
            out.append(t)
        return out

    def _refund_locally(self, oid: int) -> None:
        t = self.owner[oid]
        if t.order.side == BUY:
            t.credit(t.order.rate, t.order.blinding, self.params.q)

    def _expire(self, m: RoundMetrics, unmatched) -> list[int]:
        self.ledger.mark_unmatched(unmatched)
        gone = self.ledger.expire_orders(self.config.max_unmatched_rounds)
        for oid in gone:
            self._refund_locally(oid)
        m.expired = len(gone)
        return gone

    def _truth(self, ids) -> GaussianParams | None:
        rates = np.array([self.rates[i] for i in ids], dtype=float)
        if len(rates) < 2 or rates.std() == 0:
            return None
        return GaussianParams(float(rates.mean()), float(rates.std()))

    def _privacy(self, m: RoundMetrics, sorted_ids, top_rates, hist=None, grid=None, top_ids=None) -> None:
        """Gain against a broker (top-K only) and against one trader in the book.

        ``sorted_ids`` is the book in ascending rate order; ``top_ids`` are the
        orders behind ``top_rates`` when the observer knows their positions.
        """
        truth = self._truth(sorted_ids)
        n = len(sorted_ids)
        if truth is None or n < 2 or math.log(2 * math.pi * math.e * truth.sigma**2) <= 0:
            return
        rng = round_rng(self.config, self.round, "privacy")
        k = len(top_rates)
        rank = int(rng.integers(1, n + 1))
        own_id = sorted_ids[n - rank]
        own = (rank, self.rates[own_id])
        ranks = None
        if top_ids is not None:
            pos = {oid: i for i, oid in enumerate(sorted_ids)}
            ranks = tuple(n - pos[oid] for oid in top_ids)
        views = {
            "broker": LeakageView(tuple(top_rates), n, None, hist, grid, ranks),
            "trader": LeakageView(tuple(top_rates), n, own, hist, grid, ranks),
        }
        for name, view in views.items():
            try:
                if hist is not None:
                    est = bucketization_estimate(view, rng)
                else:
                    est = estimate_params(view)
                gain = privacy_gain(est, truth) if est.sigma > 0 else None
            except (InsufficientData, ValueError):
                gain = None
            setattr(m, f"privacy_gain_{name}", gain)
        m.truth = [truth.mu, truth.sigma]

    def conservation_total(self) -> int:
        return self.ledger.conservation_total()


# ---------------------------------------------------------------------------
# public-rate baselines


class PlainMarket(Market):
    """Centralized, zero-privacy and off-chain-matching variants (public balances)."""

    def __init__(self, config, params=None):
        super().__init__(config, params)
        self.ledger = PlainLedger()

    def _register(self, t):
        t.account_id = self.ledger.register_account(t.balance)

    def _submit(self, trader, intent):
        try:
            oid = self.ledger.submit_order(trader.account_id, intent.side, intent.rate, self.round)
        except OrderRejected:
            return None
        if intent.side == BUY:
            trader.balance -= intent.rate
        trader.order = OpenOrder(oid, intent.side, intent.rate, round=self.round)
        return oid

    def _trade(self, m):
        c = self.config
        orders = [
            PlainOrder(oid, o["side"], o["rate"], o["round"], oid) for oid, o in sorted(self.ledger.orders.items())
        ]
        m.book_size = len(orders)
        t0 = time.perf_counter()
        book = sort_book(orders)
        m.durations["sort"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        pairs = self._match(book, orders)
        if c.protocol == "offchain-matching":
            self.ledger.record("matches-posted", pairs=[list(p) for p in pairs])
        m.durations["match"] = time.perf_counter() - t0
        self._record_pairs(m, pairs)
        t0 = time.perf_counter()
        m.fees = self.ledger.apply_settlement(pairs)
        for b, s in pairs:
            seller = self.owner[s]
            seller.balance += seller.order.rate
        self._finish_orders([x for p in pairs for x in p])
        m.durations["settle"] = time.perf_counter() - t0
        matched = {x for p in pairs for x in p}
        gone = self._expire(m, [o.order_id for o in orders if o.order_id not in matched])
        self._finish_orders(gone)
        m.durations["shuffle"] = 0.0

    def _refund_locally(self, oid):
        t = self.owner[oid]
        if t.order.side == BUY:
            t.balance += t.order.rate


# ---------------------------------------------------------------------------
# commitment ledgers


class _CommitMarket(Market):
    uses_commitments = True

    def __init__(self, config, params=None, scheme="additive"):
        super().__init__(config, params)
        self.ledger = Ledger(self.params, test_mode=config.test_mode, n_bits=config.n_bits, scheme=scheme)

    def _register(self, t):
        t.account_id = self.ledger.register_account(
            t.commitment(self.params), (t.balance, t.blinding) if self.config.test_mode else None
        )

    def _balance_proof(self, trader: Trader, rate: int, blinding: int):
        """Range proof that ``balance - rate`` fits; ``None`` if the trader cannot afford it."""
        try:
            return prove_range(
                self.params,
                trader.balance - rate,
                trader.blinding - blinding,
                self.config.n_bits,
                trader.rng,
                order_context(trader.account_id, self.round),
            )
        except RangeProofError:
            return None

    def _opening(self, rate, blinding):
        return (rate, blinding) if self.config.test_mode else None

    def _post_submit(self, trader, oid, side, rate, blinding, rho=0):
        if side == BUY:
            trader.credit(-rate, -blinding, self.params.q)
        trader.order = OpenOrder(oid, side, rate, blinding, rho, self.round)


class SemiPrivateMarket(_CommitMarket):
    """Hidden balances, public rates: each order commits to its rate with blinding 0."""

    def _submit(self, trader, intent):
        proof = None
        if intent.side == BUY:
            proof = self._balance_proof(trader, intent.rate, 0)
            if proof is None:
                return None
        try:
            oid = self.ledger.submit_order(
                trader.account_id,
                intent.side,
                [commit(self.params, intent.rate, 0)],
                self.round,
                proof,
                rate_opening=self._opening(intent.rate, 0),
                public_rate=intent.rate,
            )
        except OrderRejected:
            return None
        self._post_submit(trader, oid, intent.side, intent.rate, 0)
        return oid

    def _trade(self, m):
        orders = [
            PlainOrder(oid, o.side, o.public_rate, o.round, oid) for oid, o in sorted(self.ledger.orders.items())
        ]
        m.book_size = len(orders)
        t0 = time.perf_counter()
        book = sort_book(orders)
        m.durations["sort"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        pairs = self._match(book, orders)
        m.durations["match"] = time.perf_counter() - t0
        self._record_pairs(m, pairs)
        t0 = time.perf_counter()
        fees = sum(self.rates[b] - self.rates[s] for b, s in pairs)
        self.ledger.apply_settlement(pairs, fees, 0)
        m.fees = fees
        for _, s in pairs:
            seller = self.owner[s]
            seller.credit(seller.order.rate, 0, self.params.q)
        self._finish_orders([x for p in pairs for x in p])
        m.durations["settle"] = time.perf_counter() - t0
        matched = {x for p in pairs for x in p}
        gone = self._expire(m, [o.order_id for o in orders if o.order_id not in matched])
        self._finish_orders(gone)
        m.durations["shuffle"] = 0.0


# ---------------------------------------------------------------------------
# bucketization


class BucketMarket(_CommitMarket):
    def _register(self, t):
        t.keys = TraderKeys.generate(t.rng)
        t.cheats = t.rng.random() < self.config.cheat_rate
        super()._register(t)

    def _submit(self, trader, intent):
        r = trader.rng.randrange(self.params.q)
        proof = None
        if intent.side == BUY:
            proof = self._balance_proof(trader, intent.rate, r)
            if proof is None:
                return None
        try:
            oid = self.ledger.submit_order(
                trader.account_id,
                intent.side,
                [commit(self.params, intent.rate, r)],
                self.round,
                proof,
                rate_opening=self._opening(intent.rate, r),
            )
        except OrderRejected:
            return None
        self._post_submit(trader, oid, intent.side, intent.rate, r)
        return oid

    def _trade(self, m):
        c, P, L = self.config, self.params, self.ledger
        # phase 2: the grid is fixed by the hash of the block that closed phase 1
        L.seal_block()
        grid = choose_buckets(c.bucket_width, L.head_hash)
        L.record("buckets-chosen", width=grid.width, offset=grid.offset)
        t0 = time.perf_counter()
        drop_rng = round_rng(c, self.round, "dropout")
        labels, disclosed = [], []
        for oid in sorted(L.orders):
            order, t = L.orders[oid], self.owner[oid]
            if drop_rng.random() < c.phase2_dropout:
                self._refund_locally(oid)
                L.cancel_order(oid, "no bucket disclosed")
                self._finish_orders([oid])
                m.dropped += 1
                continue
            bo = assign_bucket(P, oid, t.order.rate, t.order.blinding, grid, order.rate_comm, t.rng)
            if not verify_bucket(P, order.rate_comm, bo, grid):
                raise BucketError("honest bucket proof rejected")
            disclosed.append(bo)
            labels.append(BucketLabel(oid, order.side, grid.floor(bo.index), grid.width, order.round))
        hist = histogram(disclosed)
        L.record("bucket-histogram", histogram={str(k): v for k, v in hist.items()})
        m.book_size = len(labels)
        m.durations["sort"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        if c.matching == "maximal-fair":
            pairs = bucket_match(labels)
        else:
            pairs = price_time_match(
                PlainOrder(l.order_id, l.side, bucket_value(l), l.round, l.order_id) for l in labels
            )
        m.durations["match"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        settled, unwound = [], set()
        for b, s in pairs:
            ok = self._settle_pair(m, b, s)
            if ok:
                settled.append((b, s))
            else:
                unwound.update((b, s))
        self._record_pairs(m, settled)
        m.durations["settle"] = time.perf_counter() - t0
        top = sorted((self.rates[b] for b, _ in settled), reverse=True)[: c.topk]
        if top:
            L.record("topk-rates", rates=top)
        by_rate = sorted((l.order_id for l in labels), key=self.rates.__getitem__)
        self._privacy(m, by_rate, top, hist, (grid.width, grid.offset))
        self._finish_orders([x for p in settled for x in p])
        self._finish_orders([oid for oid in unwound if oid not in L.orders])  # penalized
        gone = self._expire(m, [oid for oid in L.orders])
        self._finish_orders(gone)
        m.durations["shuffle"] = 0.0

    def _settle_pair(self, m, b, s) -> bool:
        """Exchange sealed openings, report deviations, then settle.  False if unwound."""
        P, L = self.params, self.ledger
        tb, ts = self.owner[b], self.owner[s]
        msgs = {}
        for sender, receiver, oid in ((tb, ts, b), (ts, tb, s)):
            rate = sender.order.rate + (1 if sender.cheats else 0)
            ct = seal_opening(sender.keys, receiver.keys.public_key, oid, rate, sender.order.blinding)
            L.record("settlement-message", order=oid, ciphertext=ct.hex())
            msgs[oid] = (receiver, sender, ct)
        cheaters = []
        for oid, (receiver, sender, ct) in msgs.items():
            opened = open_sealed(receiver.keys, sender.keys.verify_key, ct)
            if not matches_commitment(P, L.orders[oid].rate_comm, opened):
                report = DeviationReport(receiver.order.order_id, oid, opened.signed)
                if judge_deviation(P, L, report, sender.keys.verify_key):
                    cheaters.append((oid, sender))
        if cheaters:
            for oid, sender in cheaters:
                fine = self.config.penalty_fine if sender.order.side == SELL else 0
                penalize(L, oid, fine)
                if fine:
                    sender.balance -= fine
                sender.penalized += 1
                m.penalties += 1
            return False
        ob, os_ = tb.order, ts.order
        if self.config.settlement == "difference":
            fee, proof = prove_fee(P, b, s, ob.rate, ob.blinding, os_.rate, os_.blinding, tb.rng)
            settle_difference(L, b, s, fee, proof)
            ts.credit(os_.rate, os_.blinding, P.q)
            m.fees += fee
        else:
            parity, proof = prove_mean(
                P, b, s, ob.rate, ob.blinding, os_.rate, os_.blinding, self.config.n_bits, tb.rng
            )
            settle_mean(L, b, s, parity, proof)
            inv2 = pow(2, -1, P.q)
            set_v = (ob.rate + os_.rate - parity) // 2
            set_r = (ob.blinding + os_.blinding) * inv2 % P.q
            ts.credit(set_v, set_r, P.q)
            tb.credit(ob.rate - set_v - parity, ob.blinding - set_r, P.q)
            m.fees += parity
        return True


# ---------------------------------------------------------------------------
# Rialto


class RialtoMarket(_CommitMarket):
    """Broker-run sorting, settlement, top-K reveal and shuffle.

    ``rialto`` uses additive shares held by every broker; ``rialto-plus``
    uses threshold shares and validates every share before sorting.
    """

    def __init__(self, config, params=None, transport=None):
        self.plus = config.protocol == "rialto-plus"
        scheme = "threshold" if self.plus else "additive"
        super().__init__(config, params, scheme)
        self.engine = MPCEngine(
            self.params,
            config.brokers,
            self._lookup,
            scheme=scheme,
            n_bits=config.n_bits,
            seed=config.seed,
            transport=transport,
        )
        self.k = self.engine.k
        # after a flag or an abort, carried orders may hold bad shares: check them all again
        self._revalidate_book = False

    def _lookup(self, oid):
        o = self.ledger.orders[oid]
        return o.share_comms, o.rho_comms

    def _split(self, secret, rng):
        q, M = self.params.q, self.config.brokers
        if self.plus:
            return split_threshold(secret, self.k, M, q, rng).values()
        return split_additive(secret, M, q, rng).values()

    def _submit(self, trader, intent):
        P, rng = self.params, trader.rng
        r = rng.randrange(P.q)
        rho = rng.randrange(P.q)
        proof = None
        if intent.side == BUY:
            proof = self._balance_proof(trader, intent.rate, r)
            if proof is None:
                return None
        vs, rs, ps = self._split(intent.rate, rng), self._split(r, rng), self._split(rho, rng)
        share_comms = [commit(P, v, x) for v, x in zip(vs, rs)]
        rho_comms = [commit(P, 0, x) for x in ps]
        try:
            oid = self.ledger.submit_order(
                trader.account_id,
                intent.side,
                share_comms,
                self.round,
                proof,
                rho_comms=rho_comms,
                rate_opening=self._opening(intent.rate, r),
            )
        except OrderRejected:
            return None
        self._post_submit(trader, oid, intent.side, intent.rate, r, rho)
        bundles = [
            ShareBundle(oid, v, x, p, trader.account_id, sc, pc)
            for v, x, p, sc, pc in zip(vs, rs, ps, share_comms, rho_comms)
        ]
        self.engine.send_shares(f"trader{trader.name}", bundles)
        return oid

    def _trade(self, m):
        c, L, E = self.config, self.ledger, self.engine
        E.round = self.round
        E.reset_active()
        book_ids = sorted(L.orders)
        new_ids = [oid for oid in book_ids if L.orders[oid].round == self.round]
        m.book_size = len(book_ids)

        if self.plus:
            t0 = time.perf_counter()
            check = book_ids if self._revalidate_book else new_ids
            H = E.input_share_validation(check, ("rate", "rho"))
            m.durations["validate"] = time.perf_counter() - t0
            m.flagged_brokers = [i for i, h in enumerate(H) if not h]
            self._revalidate_book = bool(m.flagged_brokers)
            if not E.has_quorum:
                m.aborted = True
                L.record("round-aborted", flagged=m.flagged_brokers)
                L.mark_unmatched(book_ids)
                return

        t0 = time.perf_counter()
        meta = {oid: OrderMeta(oid, L.orders[oid].side, L.orders[oid].round) for oid in book_ids}
        sorted_ids = E.sorting_mpc(book_ids, meta)
        for oid in E.last_dropped:
            self._refund_locally(oid)
            L.cancel_order(oid, "rate outside the sortable domain")
            m.dropped += 1
        m.durations["sort"] = time.perf_counter() - t0
        L.record("sorted", order=sorted_ids)

        t0 = time.perf_counter()
        book = SortedBook.from_ids(sorted_ids, {oid: meta[oid].side for oid in sorted_ids})
        pairs = self._match(book)
        m.durations["match"] = time.perf_counter() - t0
        L.record("matches", pairs=[list(p) for p in pairs])
        self._record_pairs(m, pairs)

        t0 = time.perf_counter()
        fees, blinding = E.settlement_mpc(pairs)
        L.apply_settlement(pairs, fees, blinding)
        m.fees = fees
        for _, s in pairs:
            seller = self.owner[s]
            seller.credit(seller.order.rate, seller.order.blinding, self.params.q)
        top = E.topk_reveal(sorted_ids, pairs, c.topk)
        if top:
            L.record("topk-rates", rates=top)
        m.durations["settle"] = time.perf_counter() - t0
        self._privacy(m, sorted_ids, top, top_ids=E.last_topk_ids if top else None)

        matched = [x for p in pairs for x in p]
        matched_set = set(matched)
        gone = self._expire(m, [oid for oid in sorted_ids if oid not in matched_set])

        t0 = time.perf_counter()
        finished = matched + gone + list(E.last_dropped)
        self._shuffle(m, finished)
        m.durations["shuffle"] = time.perf_counter() - t0
        E.forget(finished)
        self._finish_orders(finished)

    def _shuffle(self, m, finished) -> None:
        if not finished:
            return
        P, L, E = self.params, self.ledger, self.engine
        traders = [self.owner[oid] for oid in finished]
        old_ids = [t.account_id for t in traders]
        # brokers still hold the bundles of finished orders until forget()
        new = E.shuffle_mpc(finished, [L.accounts[a].balance for a in old_ids])
        m.flagged_brokers = sorted(set(m.flagged_brokers) | set(E.last_flagged))
        index = {c: i for i, c in enumerate(new)}
        openings = [None] * len(new)
        located = []
        for t in traders:
            t.blinding = (t.blinding + t.order.rho) % P.q
            i = index.get(t.commitment(P))
            if i is None:
                raise RuntimeError(f"trader {t.name} cannot find its re-randomised account")
            openings[i] = (t.balance, t.blinding)
            located.append(i)
        new_ids = L.replace_accounts(old_ids, new, openings if self.config.test_mode else None)
        for t, i in zip(traders, located):
            t.account_id = new_ids[i]


def make_market(config: ExperimentConfig, params: GroupParams | None = None, **kw) -> Market:
    config.validate()
    p = config.protocol
    if p in ("centralized", "zero-privacy", "offchain-matching"):
        return PlainMarket(config, params)
    if p == "semi-private":
        return SemiPrivateMarket(config, params)
    if p == "bucketization":
        return BucketMarket(config, params)
    return RialtoMarket(config, params, **kw)
