"""The bucketization baseline: randomised price buckets instead of broker MPC.

Round flow: traders commit to rates (buyers also escrow), the contract derives
a bucket grid from the block hash, traders disclose a bucket with a range
proof, orders are matched on bucket bounds, and each matched pair settles by
swapping sealed, signed openings.  Either the marketplace keeps the rate
difference or the pair settles at the mean of the two rates.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from nacl.exceptions import BadSignatureError, CryptoError
from nacl.public import PrivateKey, PublicKey, SealedBox
from nacl.signing import SigningKey, VerifyKey

from .group import (
    BlindingProof,
    Commitment,
    GroupParams,
    RangeProof,
    RangeProofError,
    commit,
    prove_blinding,
    prove_range,
    verify_blinding,
    verify_range,
)
from .ledger import MARKETPLACE, Ledger, SettlementRejected

__all__ = [
    "BucketGrid",
    "BucketProof",
    "BucketedOrder",
    "BucketError",
    "TraderKeys",
    "OpenedMessage",
    "DeviationReport",
    "choose_buckets",
    "bucket_bits",
    "assign_bucket",
    "verify_bucket",
    "histogram",
    "seal_opening",
    "open_sealed",
    "matches_commitment",
    "judge_deviation",
    "penalize",
    "prove_fee",
    "settle_difference",
    "prove_mean",
    "settle_mean",
]


class BucketError(ValueError):
    pass


@dataclass(frozen=True)
class BucketGrid:
    """Equal half-open buckets ``[offset + i*W, offset + (i+1)*W)``."""

    width: int
    offset: int

    def index_of(self, rate: int) -> int:
        return (rate - self.offset) // self.width

    def floor(self, index: int) -> int:
        return self.offset + index * self.width

    def ceiling(self, index: int) -> int:
        """Exclusive upper bound."""
        return self.floor(index) + self.width

    def bounds(self, index: int) -> tuple[int, int]:
        return self.floor(index), self.ceiling(index)


def choose_buckets(width: int, block_hash: str | bytes) -> BucketGrid:
    """Grid whose offset is a hash of the current block, reduced mod ``width``."""
    if width < 1:
        raise BucketError("bucket width must be at least 1")
    if isinstance(block_hash, str):
        block_hash = block_hash.encode()
    digest = hashlib.sha256(b"rialto/buckets" + block_hash).digest()
    return BucketGrid(width, int.from_bytes(digest, "big") % width)


def bucket_bits(width: int) -> int:
    return max(1, (width - 1).bit_length())


@dataclass(frozen=True)
class BucketProof:
    """``rate - floor`` and ``floor + W - 1 - rate`` both fit in :func:`bucket_bits` bits."""

    low: RangeProof
    high: RangeProof


@dataclass(frozen=True)
class BucketedOrder:
    order_id: int
    rate_comm: Commitment
    index: int
    proof: BucketProof


def _bucket_context(order_id: int, grid: BucketGrid) -> bytes:
    return f"rialto/bucket/{order_id}/{grid.width}/{grid.offset}".encode()


def assign_bucket(
    params: GroupParams,
    order_id: int,
    rate: int,
    blinding: int,
    grid: BucketGrid,
    rate_comm: Commitment | None = None,
    rng=None,
) -> BucketedOrder:
    """Disclose the bucket of ``rate`` with a proof against its commitment."""
    c = commit(params, rate, blinding)
    if rate_comm is not None and rate_comm != c:
        raise BucketError("rate and blinding do not open the order's commitment")
    idx = grid.index_of(rate)
    lo, top = grid.floor(idx), grid.ceiling(idx) - 1
    k = bucket_bits(grid.width)
    ctx = _bucket_context(order_id, grid)
    try:
        low = prove_range(params, rate - lo, blinding, k, rng, ctx + b"/low")
        high = prove_range(params, top - rate, -blinding, k, rng, ctx + b"/high")
    except RangeProofError as exc:  # pragma: no cover - impossible for idx computed above
        raise BucketError(str(exc)) from exc
    return BucketedOrder(order_id, c, idx, BucketProof(low, high))


def verify_bucket(params: GroupParams, rate_comm: Commitment, order: BucketedOrder, grid: BucketGrid) -> bool:
    lo, top = grid.floor(order.index), grid.ceiling(order.index) - 1
    k = bucket_bits(grid.width)
    ctx = _bucket_context(order.order_id, grid)
    low_c = rate_comm / commit(params, lo, 0)
    high_c = commit(params, top, 0) / rate_comm
    return verify_range(params, low_c, order.proof.low, k, ctx + b"/low") and verify_range(
        params, high_c, order.proof.high, k, ctx + b"/high"
    )


def histogram(orders: Iterable[BucketedOrder]) -> dict[int, int]:
    return dict(sorted(Counter(o.index for o in orders).items()))


# ---------------------------------------------------------------------------
# counterparty messages


@dataclass
class TraderKeys:
    """Static per-account keys: a signing key and a box key."""

    signing: SigningKey
    box: PrivateKey

    @classmethod
    def generate(cls, rng=None) -> "TraderKeys":
        if rng is None:
            return cls(SigningKey.generate(), PrivateKey.generate())
        seed = bytes(rng.getrandbits(8) for _ in range(64))
        return cls(SigningKey(seed[:32]), PrivateKey(seed[32:]))

    @property
    def verify_key(self) -> VerifyKey:
        return self.signing.verify_key

    @property
    def public_key(self) -> PublicKey:
        return self.box.public_key


@dataclass(frozen=True)
class OpenedMessage:
    order_id: int
    rate: int
    blinding: int
    signed: bytes  # signature || message, usable as evidence


def seal_opening(sender: TraderKeys, recipient: PublicKey, order_id: int, rate: int, blinding: int) -> bytes:
    """Sign ``(order, rate, blinding)`` and encrypt it to the counterparty."""
    msg = json.dumps({"order": order_id, "rate": rate, "blinding": blinding}, sort_keys=True).encode()
    signed = sender.signing.sign(msg)
    return SealedBox(recipient).encrypt(bytes(signed))


def _parse_signed(verify_key: VerifyKey, signed: bytes) -> OpenedMessage:
    body = json.loads(verify_key.verify(signed))
    return OpenedMessage(int(body["order"]), int(body["rate"]), int(body["blinding"]), bytes(signed))


def open_sealed(recipient: TraderKeys, sender_verify: VerifyKey, ciphertext: bytes) -> OpenedMessage:
    """Decrypt and check the signature; raises :class:`BucketError` on either failure."""
    try:
        signed = SealedBox(recipient.box).decrypt(ciphertext)
        return _parse_signed(sender_verify, signed)
    except (CryptoError, BadSignatureError, ValueError, KeyError) as exc:
        raise BucketError(f"unreadable counterparty message: {exc}") from exc


def matches_commitment(params: GroupParams, rate_comm: Commitment, msg: OpenedMessage) -> bool:
    return commit(params, msg.rate, msg.blinding) == rate_comm


@dataclass(frozen=True)
class DeviationReport:
    accuser_order: int
    accused_order: int
    evidence: bytes  # the accused party's signed message


def judge_deviation(params: GroupParams, ledger: Ledger, report: DeviationReport, accused_key: VerifyKey) -> bool:
    """Accept a report iff the evidence is signed by the accused and does not open its order."""
    try:
        msg = _parse_signed(accused_key, report.evidence)
    except (BadSignatureError, ValueError, KeyError):
        return False
    order = ledger.orders.get(report.accused_order)
    if order is None or msg.order_id != report.accused_order:
        return False
    return not matches_commitment(params, order.rate_comm, msg)


def penalize(ledger: Ledger, order_id: int, fine: int = 0, fine_opening_blinding: int = 0) -> None:
    """Remove a cheating order.

    A cheating buyer forfeits its escrow to the marketplace.  A cheating seller
    has no escrow; ``fine`` (default 0) is moved from its account instead.
    """
    order = ledger.orders[order_id]
    if order.side == "BUY":
        ledger.close_order(order_id, escrow_to=MARKETPLACE)
    else:
        ledger.close_order(order_id)
        if fine:
            c = commit(ledger.params, fine, fine_opening_blinding)
            q = ledger.params.q
            ledger.credit(order.account_id, Commitment.identity(ledger.params) / c, (-fine % q, -fine_opening_blinding % q))
            ledger.credit(MARKETPLACE, c, (fine, fine_opening_blinding))
    ledger.record("penalty", order=order_id, account=order.account_id, fine=fine)


# ---------------------------------------------------------------------------
# settlement


def _pair_context(buy: int, sell: int, scheme: str) -> bytes:
    return f"rialto/bucket-settle/{scheme}/{buy}/{sell}".encode()


def prove_fee(params: GroupParams, buy: int, sell: int, rate_b: int, r_b: int, rate_s: int, r_s: int, rng=None):
    """Fee and a proof that ``C_buy / C_sell`` opens to it."""
    fee = rate_b - rate_s
    target = commit(params, 0, r_b - r_s)
    return fee, prove_blinding(params, (r_b - r_s) % params.q, target, rng, _pair_context(buy, sell, "difference"))


def settle_difference(ledger: Ledger, buy: int, sell: int, fee: int, proof: BlindingProof) -> None:
    params = ledger.params
    b, s = ledger.orders[buy], ledger.orders[sell]
    residue = b.rate_comm / s.rate_comm / commit(params, fee, 0)
    if fee < 0 or not verify_blinding(params, residue, proof, _pair_context(buy, sell, "difference")):
        raise SettlementRejected(f"fee proof for pair ({buy}, {sell}) does not verify")
    ledger.close_order(buy)
    ledger.close_order(sell)
    ledger.credit(s.account_id, s.rate_comm, s.rate_opening)
    ledger.credit(MARKETPLACE, commit(params, fee, 0), (fee, 0))
    ledger.record("settlement", pairs=[[buy, sell]], fees=fee, scheme="difference")


def _mean_commitment(params: GroupParams, c_b: Commitment, c_s: Commitment, parity: int) -> Commitment:
    inv2 = pow(2, -1, params.q)
    return (c_b * c_s / commit(params, parity, 0)) ** inv2


def prove_mean(params: GroupParams, buy: int, sell: int, rate_b: int, r_b: int, rate_s: int, r_s: int, n_bits: int = 32, rng=None):
    """Parity bit and a range proof on the settlement-rate commitment."""
    total = rate_b + rate_s
    parity = total % 2
    r_set = (r_b + r_s) * pow(2, -1, params.q) % params.q
    proof = prove_range(params, (total - parity) // 2, r_set, n_bits, rng, _pair_context(buy, sell, "mean"))
    return parity, proof


def settle_mean(ledger: Ledger, buy: int, sell: int, parity: int, proof: RangeProof) -> int | None:
    """Settle at ``floor((buy + sell) / 2)``; an odd remainder goes to the marketplace.

    Returns the settlement rate when tracked openings are available.
    """
    params = ledger.params
    q = params.q
    b, s = ledger.orders[buy], ledger.orders[sell]
    if parity not in (0, 1):
        raise SettlementRejected("parity must be 0 or 1")
    c_set = _mean_commitment(params, b.rate_comm, s.rate_comm, parity)
    if not verify_range(params, c_set, proof, ledger.n_bits, _pair_context(buy, sell, "mean")):
        raise SettlementRejected(f"settlement-rate proof for pair ({buy}, {sell}) does not verify")
    refund = b.rate_comm / c_set / commit(params, parity, 0)
    set_open = refund_open = None
    if ledger.test_mode and b.rate_opening and s.rate_opening:
        inv2 = pow(2, -1, q)
        set_v = (b.rate_opening[0] + s.rate_opening[0] - parity) * inv2 % q
        set_r = (b.rate_opening[1] + s.rate_opening[1]) * inv2 % q
        set_open = (set_v, set_r)
        refund_open = ((b.rate_opening[0] - set_v - parity) % q, (b.rate_opening[1] - set_r) % q)
    ledger.close_order(buy)
    ledger.close_order(sell)
    ledger.credit(s.account_id, c_set, set_open)
    ledger.credit(b.account_id, refund, refund_open)
    if parity:
        ledger.credit(MARKETPLACE, commit(params, 1, 0), (1, 0))
    ledger.record("settlement", pairs=[[buy, sell]], fees=parity, scheme="mean")
    return None if set_open is None else set_open[0]
