"""Single-process ledger with the marketplace contract rules.

Balances and escrows are Pedersen commitments.  In *test mode* every
commitment also carries its tracked opening ``(value, blinding)`` so the
conservation and multiset invariants can be checked; the ledger asserts after
each mutation that the tracked opening still opens the commitment.

Events accumulate into blocks chained by SHA-256.  :meth:`Ledger.dump_ndjson`
writes one event per line.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .group import Commitment, GroupParams, RangeProof, commit, verify_range
from .sharing import reconstruct_commitment

__all__ = [
    "MARKETPLACE",
    "LedgerError",
    "OrderRejected",
    "SettlementRejected",
    "Account",
    "LedgerOrder",
    "Block",
    "Ledger",
    "PlainLedger",
    "order_context",
]

MARKETPLACE = 0  # account id of the marketplace fee account


class LedgerError(ValueError):
    pass


class OrderRejected(LedgerError):
    pass


class SettlementRejected(LedgerError):
    pass


@dataclass
class Account:
    account_id: int
    balance: Commitment
    opening: tuple[int, int] | None = None  # test mode only


@dataclass
class LedgerOrder:
    order_id: int
    side: str
    account_id: int
    share_comms: tuple
    rho_comms: tuple
    rate_comm: Commitment
    range_proof: RangeProof | None
    round: int
    rounds_unmatched: int = 0
    escrow: Commitment | None = None
    rate_opening: tuple[int, int] | None = None  # test mode only
    public_rate: int | None = None  # only for protocols that publish the rate


@dataclass
class Block:
    height: int
    prev_hash: str
    events: list[dict] = field(default_factory=list)
    hash: str = ""

    def compute_hash(self) -> str:
        body = json.dumps(
            {"height": self.height, "prev": self.prev_hash, "events": self.events},
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(body.encode()).hexdigest()


def order_context(account_id: int, round_no: int) -> bytes:
    """Fiat-Shamir context binding a balance proof to one account and round."""
    return f"rialto/order/{account_id}/{round_no}".encode()


GENESIS = "0" * 64


class Ledger:
    def __init__(
        self,
        params: GroupParams,
        test_mode: bool = False,
        n_bits: int = 32,
        scheme: str = "additive",
    ):
        self.params = params
        self.test_mode = test_mode
        self.n_bits = n_bits
        self.scheme = scheme
        self.accounts: dict[int, Account] = {}
        self.orders: dict[int, LedgerOrder] = {}
        self.blocks: list[Block] = []
        self._pending: list[dict] = []
        self._next_account = 1
        self._next_order = 1
        zero = (0, 0) if test_mode else None
        self.accounts[MARKETPLACE] = Account(MARKETPLACE, Commitment.identity(params), zero)

    # -- events and blocks --------------------------------------------------

    def record(self, kind: str, **fields) -> None:
        self._pending.append({"type": kind, **fields})

    def seal_block(self) -> Block:
        prev = self.blocks[-1].hash if self.blocks else GENESIS
        blk = Block(len(self.blocks), prev, self._pending)
        blk.hash = blk.compute_hash()
        self.blocks.append(blk)
        self._pending = []
        return blk

    @property
    def head_hash(self) -> str:
        return self.blocks[-1].hash if self.blocks else GENESIS

    def verify_chain(self) -> bool:
        prev = GENESIS
        for i, blk in enumerate(self.blocks):
            if blk.height != i or blk.prev_hash != prev or blk.compute_hash() != blk.hash:
                return False
            prev = blk.hash
        return True

    def dump_ndjson(self) -> str:
        lines = []
        for blk in self.blocks:
            for ev in blk.events:
                lines.append(json.dumps({"block": blk.height, "block_hash": blk.hash, **ev}, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    # -- tracked openings ------------------------------------------------------

    def _check(self, c: Commitment, opening) -> None:
        if self.test_mode and opening is not None:
            if commit(self.params, *opening) != c:
                raise AssertionError("tracked opening no longer opens its commitment")

    def _shift(self, opening, v: int, r: int):
        if opening is None:
            return None
        q = self.params.q
        return ((opening[0] + v) % q, (opening[1] + r) % q)

    def _credit(self, account_id: int, c: Commitment, delta=None) -> None:
        acc = self.accounts[account_id]
        acc.balance = acc.balance * c
        if self.test_mode:
            acc.opening = self._shift(acc.opening, *delta) if delta is not None else None
            self._check(acc.balance, acc.opening)

    def credit(self, account_id: int, c: Commitment, delta: tuple[int, int] | None = None) -> None:
        """Homomorphic credit (negative deltas debit)."""
        if account_id not in self.accounts:
            raise LedgerError(f"unknown account {account_id}")
        self._credit(account_id, c, delta)

    def signed(self, x: int) -> int:
        q = self.params.q
        x %= q
        return x - q if x > q // 2 else x

    def conservation_total(self) -> int:
        """Sum of tracked values over accounts (marketplace included) and live escrows."""
        if not self.test_mode:
            raise LedgerError("conservation is only observable in test mode")
        total = sum(self.signed(a.opening[0]) for a in self.accounts.values())
        total += sum(self.signed(o.rate_opening[0]) for o in self.orders.values() if o.escrow is not None)
        return total

    # -- accounts --------------------------------------------------------------

    def register_account(self, balance: Commitment, opening: tuple[int, int] | None = None) -> int:
        aid = self._next_account
        self._next_account += 1
        self._check(balance, opening)
        self.accounts[aid] = Account(aid, balance, opening if self.test_mode else None)
        self.record("account-registered", account=aid, balance=balance.hex())
        return aid

    def replace_accounts(
        self,
        old_ids: Sequence[int],
        new_comms: Sequence[Commitment],
        openings: Sequence[tuple[int, int]] | None = None,
    ) -> list[int]:
        """Drop ``old_ids`` and store the shuffled list under fresh account ids.

        Owners find their new entry themselves; in test mode ``openings`` holds
        the tracked opening of each new commitment, in list order.
        """
        if len(old_ids) != len(new_comms):
            raise LedgerError("shuffled list length differs from the participating-account count")
        if any(a not in self.accounts or a == MARKETPLACE for a in old_ids):
            raise LedgerError("unknown account in shuffle set")
        if self.test_mode:
            if openings is None or len(openings) != len(new_comms):
                raise LedgerError("test mode needs an opening per shuffled commitment")
            for c, op in zip(new_comms, openings):
                self._check(c, op)
        for a in old_ids:
            del self.accounts[a]
        new_ids = []
        for k, c in enumerate(new_comms):
            aid = self._next_account
            self._next_account += 1
            self.accounts[aid] = Account(aid, c, openings[k] if self.test_mode else None)
            new_ids.append(aid)
        self.record("accounts-replaced", removed=list(old_ids), added=new_ids, commitments=[c.hex() for c in new_comms])
        return new_ids

    # -- orders ------------------------------------------------------------

    def _busy_accounts(self) -> set[int]:
        return {o.account_id for o in self.orders.values()}

    def submit_order(
        self,
        account_id: int,
        side: str,
        share_comms: Sequence[Commitment],
        round_no: int,
        balance_proof: RangeProof | None = None,
        rho_comms: Sequence[Commitment] = (),
        rate_opening: tuple[int, int] | None = None,
        public_rate: int | None = None,
    ) -> int:
        """Accept an order or raise :class:`OrderRejected`.

        The rate commitment is reconstructed from the per-broker share
        commitments.  A buy must prove ``balance - rate`` lies in
        ``[0, 2**n_bits)``; its rate commitment is then moved into escrow.
        """
        if account_id not in self.accounts or account_id == MARKETPLACE:
            raise OrderRejected(f"unknown account {account_id}")
        if account_id in self._busy_accounts():
            raise OrderRejected(f"account {account_id} already has an order in the book")
        if side not in ("BUY", "SELL"):
            raise OrderRejected(f"bad side {side!r}")
        if not share_comms:
            raise OrderRejected("no share commitments")
        if len(share_comms) == 1:
            rate_comm = share_comms[0]
        else:
            rate_comm = reconstruct_commitment(self.params, dict(enumerate(share_comms, start=1)), self.scheme)
        acc = self.accounts[account_id]
        escrow = None
        if side == "BUY":
            remaining = acc.balance / rate_comm
            if balance_proof is None or not verify_range(
                self.params, remaining, balance_proof, self.n_bits, order_context(account_id, round_no)
            ):
                raise OrderRejected("balance range proof does not verify")
            escrow = rate_comm
        oid = self._next_order
        self._next_order += 1
        self._check(rate_comm, rate_opening)
        order = LedgerOrder(
            oid,
            side,
            account_id,
            tuple(share_comms),
            tuple(rho_comms),
            rate_comm,
            balance_proof,
            round_no,
            escrow=escrow,
            rate_opening=rate_opening if self.test_mode else None,
            public_rate=public_rate,
        )
        if escrow is not None:
            q = self.params.q
            neg = None if rate_opening is None else (-rate_opening[0] % q, -rate_opening[1] % q)
            self._credit(account_id, Commitment.identity(self.params) / escrow, neg)
        self.orders[oid] = order
        ev = {"order": oid, "side": side, "account": account_id, "round": round_no, "rate_comm": rate_comm.hex()}
        if public_rate is not None:
            ev["rate"] = public_rate
        self.record("order-accepted", **ev)
        return oid

    def _release(self, order: LedgerOrder, to_account: int | None) -> None:
        """Consume the escrow; refund it to ``to_account`` if given."""
        if order.escrow is None:
            return
        if to_account is not None:
            self._credit(to_account, order.escrow, order.rate_opening)
        order.escrow = None

    def cancel_order(self, order_id: int, reason: str) -> None:
        """Remove an order from the book and refund any escrow to its account."""
        order = self.orders.pop(order_id)
        self._release(order, order.account_id)
        self.record("order-cancelled", order=order_id, reason=reason)

    def close_order(self, order_id: int, escrow_to: int | None = None) -> LedgerOrder:
        """Take an order off the book; its escrow goes to ``escrow_to`` or is consumed."""
        order = self.orders.pop(order_id)
        self._release(order, escrow_to)
        return order

    # -- settlement --------------------------------------------------------

    def settlement_quotient(self, pairs: Sequence[tuple[int, int]]) -> Commitment:
        parts = [self.orders[b].rate_comm / self.orders[s].rate_comm for b, s in pairs]
        return Commitment.product(self.params, parts)

    def apply_settlement(self, pairs: Sequence[tuple[int, int]], fees: int, blinding: int) -> None:
        """Check ``commit(F, R)`` against the pairs, then move the funds.

        Sellers are credited with their own rate commitment, the buyers'
        escrows are consumed and the marketplace gets ``commit(F, R)``.
        """
        pairs = [tuple(p) for p in pairs]
        if not pairs:
            return
        for b, s in pairs:
            if self.orders.get(b) is None or self.orders[b].side != "BUY":
                raise SettlementRejected(f"order {b} is not an open buy")
            if self.orders.get(s) is None or self.orders[s].side != "SELL":
                raise SettlementRejected(f"order {s} is not an open sell")
        fee_comm = commit(self.params, fees, blinding)
        if fee_comm != self.settlement_quotient(pairs):
            raise SettlementRejected("aggregate fee commitment does not match the matched pairs")
        q = self.params.q
        for b, s in pairs:
            buy, sell = self.orders.pop(b), self.orders.pop(s)
            self._release(buy, None)
            self._credit(sell.account_id, sell.rate_comm, sell.rate_opening)
        self._credit(MARKETPLACE, fee_comm, (fees % q, blinding % q))
        self.record("settlement", pairs=[list(p) for p in pairs], fees=fees, fee_comm=fee_comm.hex())

    # -- expiry ------------------------------------------------------------

    def mark_unmatched(self, order_ids: Iterable[int]) -> None:
        for oid in order_ids:
            self.orders[oid].rounds_unmatched += 1

    def expire_orders(self, max_rounds: int) -> list[int]:
        """Expel orders unmatched for more than ``max_rounds`` rounds, refunding escrows."""
        gone = sorted(oid for oid, o in self.orders.items() if o.rounds_unmatched > max_rounds)
        for oid in gone:
            order = self.orders.pop(oid)
            self._release(order, order.account_id)
        if gone:
            self.record("orders-expired", orders=gone)
        return gone


class PlainLedger:
    """Public-balance ledger for the zero-privacy, centralized and off-chain baselines."""

    def __init__(self):
        self.balances: dict[int, int] = {MARKETPLACE: 0}
        self.orders: dict[int, dict] = {}
        self.blocks: list[Block] = []
        self._pending: list[dict] = []
        self._next_account = 1
        self._next_order = 1

    record = Ledger.record
    seal_block = Ledger.seal_block
    verify_chain = Ledger.verify_chain
    dump_ndjson = Ledger.dump_ndjson
    head_hash = Ledger.head_hash

    def register_account(self, balance: int) -> int:
        aid = self._next_account
        self._next_account += 1
        self.balances[aid] = balance
        self.record("account-registered", account=aid, balance=balance)
        return aid

    def submit_order(self, account_id: int, side: str, rate: int, round_no: int) -> int:
        if account_id not in self.balances or account_id == MARKETPLACE:
            raise OrderRejected(f"unknown account {account_id}")
        if any(o["account"] == account_id for o in self.orders.values()):
            raise OrderRejected(f"account {account_id} already has an order in the book")
        if side == "BUY":
            if not 0 <= rate <= self.balances[account_id]:
                raise OrderRejected("insufficient balance")
            self.balances[account_id] -= rate
        oid = self._next_order
        self._next_order += 1
        self.orders[oid] = {"side": side, "account": account_id, "rate": rate, "round": round_no, "unmatched": 0}
        self.record("order-accepted", order=oid, side=side, account=account_id, rate=rate, round=round_no)
        return oid

    def apply_settlement(self, pairs: Sequence[tuple[int, int]]) -> int:
        fees = 0
        for b, s in pairs:
            buy, sell = self.orders.pop(b), self.orders.pop(s)
            self.balances[sell["account"]] += sell["rate"]
            fees += buy["rate"] - sell["rate"]
        self.balances[MARKETPLACE] += fees
        if pairs:
            self.record("settlement", pairs=[list(p) for p in pairs], fees=fees)
        return fees

    def cancel_order(self, order_id: int, reason: str) -> None:
        o = self.orders.pop(order_id)
        if o["side"] == "BUY":
            self.balances[o["account"]] += o["rate"]
        self.record("order-cancelled", order=order_id, reason=reason)

    def mark_unmatched(self, order_ids: Iterable[int]) -> None:
        for oid in order_ids:
            self.orders[oid]["unmatched"] += 1

    def expire_orders(self, max_rounds: int) -> list[int]:
        gone = sorted(oid for oid, o in self.orders.items() if o["unmatched"] > max_rounds)
        for oid in gone:
            o = self.orders.pop(oid)
            if o["side"] == "BUY":
                self.balances[o["account"]] += o["rate"]
        if gone:
            self.record("orders-expired", orders=gone)
        return gone

    def conservation_total(self) -> int:
        escrow = sum(o["rate"] for o in self.orders.values() if o["side"] == "BUY")
        return sum(self.balances.values()) + escrow
