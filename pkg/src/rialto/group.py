"""Prime-order groups, Pedersen commitments and the sigma protocols built on them.

Two backends share one interface:

* ``Ed25519Group`` - the prime-order subgroup of edwards25519, backed by
  libsodium through PyNaCl.  Used for all production-sized runs.
* ``ModpGroup`` - an order-q subgroup of ``Z_p^*``.  The instance returned by
  :func:`test_params` (p=23, q=11, g=2, h=3) is small enough to enumerate, which
  is what the brute-force oracles in the test-suite rely on.

Scalars are plain Python ints reduced mod ``q``.  Every randomised function
takes an explicit ``rng`` exposing ``randrange`` (``random.Random`` in tests,
``secrets.SystemRandom`` by default).
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Sequence

import nacl.bindings as sodium

__all__ = [
    "Group",
    "ModpGroup",
    "Ed25519Group",
    "GroupParams",
    "Commitment",
    "OpeningProof",
    "BitProof",
    "RangeProof",
    "BlindingProof",
    "RangeProofError",
    "Transcript",
    "default_params",
    "test_params",
    "commit",
    "prove_opening",
    "verify_opening",
    "prove_range",
    "verify_range",
    "prove_blinding",
    "verify_blinding",
    "random_scalar",
    "DEFAULT_RANGE_BITS",
]

DEFAULT_RANGE_BITS = 32

_SYSTEM_RNG = secrets.SystemRandom()


class RangeProofError(ValueError):
    """Raised by the prover when the value cannot be decomposed into ``n_bits`` bits."""


# ---------------------------------------------------------------------------
# group backends


class Group:
    """Abstract prime-order cyclic group written multiplicatively."""

    name: str
    order: int
    identity: Any
    scalar_bytes: int
    element_bytes: int

    def op(self, a, b):
        raise NotImplementedError

    def inv(self, a):
        raise NotImplementedError

    def exp(self, a, k: int):
        raise NotImplementedError

    def encode(self, a) -> bytes:
        raise NotImplementedError

    def decode(self, data: bytes):
        raise NotImplementedError

    def hash_to_element(self, data: bytes):
        raise NotImplementedError

    def is_element(self, a) -> bool:
        try:
            self.decode(self.encode(a))
        except (TypeError, ValueError):
            return False
        return True

    def div(self, a, b):
        return self.op(a, self.inv(b))

    def encode_scalar(self, k: int) -> bytes:
        return (k % self.order).to_bytes(self.scalar_bytes, "big")

    def decode_scalar(self, data: bytes) -> int:
        if len(data) != self.scalar_bytes:
            raise ValueError("bad scalar length")
        k = int.from_bytes(data, "big")
        if k >= self.order:
            raise ValueError("scalar not reduced")
        return k

    def descriptor(self) -> bytes:
        return self.name.encode()


class ModpGroup(Group):
    """Subgroup of order ``q`` inside ``Z_p^*`` (requires ``q | p - 1``)."""

    def __init__(self, p: int, q: int):
        if (p - 1) % q:
            raise ValueError("q must divide p - 1")
        self.p = p
        self.order = q
        self.cofactor = (p - 1) // q
        self.identity = 1
        self.name = f"modp-{p}-{q}"
        self.element_bytes = (p.bit_length() + 7) // 8
        self.scalar_bytes = (q.bit_length() + 7) // 8

    def op(self, a, b):
        return a * b % self.p

    def inv(self, a):
        return pow(a, -1, self.p)

    def exp(self, a, k):
        return pow(a, k % self.order, self.p)

    def encode(self, a) -> bytes:
        return int(a).to_bytes(self.element_bytes, "big")

    def decode(self, data: bytes) -> int:
        if len(data) != self.element_bytes:
            raise ValueError("bad element length")
        a = int.from_bytes(data, "big")
        if not 0 < a < self.p or pow(a, self.order, self.p) != 1:
            raise ValueError("not a subgroup element")
        return a

    def hash_to_element(self, data: bytes) -> int:
        ctr = 0
        while True:
            digest = hashlib.sha512(data + ctr.to_bytes(4, "big")).digest()
            a = pow(int.from_bytes(digest, "big") % self.p, self.cofactor, self.p)
            if a not in (0, 1):
                return a
            ctr += 1


# order of the edwards25519 prime subgroup
ED25519_L = 2**252 + 27742317777372353535851937790883648493
_ED_IDENTITY = b"\x01" + bytes(31)
_ED_BASE = sodium.crypto_scalarmult_ed25519_base_noclamp((1).to_bytes(32, "little"))


class Ed25519Group(Group):
    """Prime-order subgroup of edwards25519.  Elements are canonical 32-byte encodings.

    libsodium refuses the identity as an input or output of scalar
    multiplication, so those cases are handled here.
    """

    name = "ed25519"
    order = ED25519_L
    identity = _ED_IDENTITY
    base = _ED_BASE
    scalar_bytes = 32
    element_bytes = 32

    def op(self, a, b):
        return sodium.crypto_core_ed25519_add(a, b)

    def inv(self, a):
        return sodium.crypto_core_ed25519_sub(_ED_IDENTITY, a)

    def div(self, a, b):
        return sodium.crypto_core_ed25519_sub(a, b)

    def exp(self, a, k):
        k %= ED25519_L
        if k == 0 or a == _ED_IDENTITY:
            return _ED_IDENTITY
        scalar = k.to_bytes(32, "little")
        if a == _ED_BASE:
            return sodium.crypto_scalarmult_ed25519_base_noclamp(scalar)
        return sodium.crypto_scalarmult_ed25519_noclamp(scalar, a)

    def encode(self, a) -> bytes:
        return bytes(a)

    def decode(self, data: bytes) -> bytes:
        data = bytes(data)
        if len(data) != 32:
            raise ValueError("bad element length")
        if data != _ED_IDENTITY and not sodium.crypto_core_ed25519_is_valid_point(data):
            raise ValueError("not a prime-order subgroup element")
        return data

    def hash_to_element(self, data: bytes) -> bytes:
        ctr = 0
        while True:
            digest = hashlib.sha512(data + ctr.to_bytes(4, "big")).digest()
            a = sodium.crypto_core_ed25519_from_uniform(digest[:32])
            if a != _ED_IDENTITY:
                return a
            ctr += 1


@dataclass(frozen=True, eq=False)
class GroupParams:
    """Group plus the two commitment generators ``g`` (values) and ``h`` (blindings)."""

    group: Group
    g: Any
    h: Any

    @property
    def q(self) -> int:
        return self.group.order

    def encode(self) -> bytes:
        grp = self.group
        return grp.descriptor() + grp.encode(self.g) + grp.encode(self.h)


@lru_cache(maxsize=None)
def default_params() -> GroupParams:
    # h is libsodium's base point so blinding exponentiations use the fast
    # fixed-base path; g is hashed from it, so log_h(g) is unknown to everyone.
    grp = Ed25519Group()
    h = grp.base
    g = grp.hash_to_element(b"rialto/pedersen/g" + grp.encode(h))
    return GroupParams(grp, g, h)


@lru_cache(maxsize=None)
def test_params() -> GroupParams:
    """The order-11 subgroup of Z_23^* with g=2, h=3, for exhaustive tests."""
    return GroupParams(ModpGroup(23, 11), 2, 3)


def random_scalar(params: GroupParams, rng=None) -> int:
    return (rng or _SYSTEM_RNG).randrange(params.q)


# ---------------------------------------------------------------------------
# commitments


class Commitment:
    """A Pedersen commitment ``g^v h^r``.  Supports ``*``, ``/`` and ``** k``."""

    __slots__ = ("params", "element")

    def __init__(self, params: GroupParams, element):
        self.params = params
        self.element = element

    def __mul__(self, other: "Commitment") -> "Commitment":
        return Commitment(self.params, self.params.group.op(self.element, other.element))

    def __truediv__(self, other: "Commitment") -> "Commitment":
        return Commitment(self.params, self.params.group.div(self.element, other.element))

    def __pow__(self, k: int) -> "Commitment":
        return Commitment(self.params, self.params.group.exp(self.element, k))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Commitment):
            return NotImplemented
        return self.params.group.encode(self.element) == other.params.group.encode(other.element)

    def __hash__(self) -> int:
        return hash(self.to_bytes())

    def __repr__(self) -> str:
        return f"Commitment({self.hex()[:16]}...)"

    def to_bytes(self) -> bytes:
        return self.params.group.encode(self.element)

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_bytes(cls, params: GroupParams, data: bytes) -> "Commitment":
        return cls(params, params.group.decode(data))

    @classmethod
    def identity(cls, params: GroupParams) -> "Commitment":
        return cls(params, params.group.identity)

    @classmethod
    def product(cls, params: GroupParams, items: Sequence["Commitment"]) -> "Commitment":
        acc = cls.identity(params)
        for c in items:
            acc = acc * c
        return acc


def commit(params: GroupParams, v: int, r: int) -> Commitment:
    """Return ``g^v h^r``."""
    grp = params.group
    return Commitment(params, grp.op(grp.exp(params.g, v), grp.exp(params.h, r)))


# ---------------------------------------------------------------------------
# Fiat-Shamir


class Transcript:
    """Domain-separated SHA-512 transcript producing challenges in Z_q."""

    def __init__(self, params: GroupParams, domain: bytes):
        self.params = params
        self._h = hashlib.sha512()
        self.append(b"domain", domain)
        self.append(b"params", params.encode())

    def append(self, label: bytes, data: bytes) -> "Transcript":
        for part in (label, data):
            self._h.update(len(part).to_bytes(4, "big"))
            self._h.update(part)
        return self

    def append_element(self, label: bytes, element) -> "Transcript":
        return self.append(label, self.params.group.encode(element))

    def copy(self) -> "Transcript":
        t = Transcript.__new__(Transcript)
        t.params = self.params
        t._h = self._h.copy()
        return t

    def challenge(self) -> int:
        return int.from_bytes(self._h.digest(), "big") % self.params.q


def _decodes(params: GroupParams, element) -> bool:
    return params.group.is_element(element)


# ---------------------------------------------------------------------------
# proof of knowledge of an opening


@dataclass(frozen=True)
class OpeningProof:
    d: Any  # announcement g^y h^s
    e: int
    a: int
    b: int

    def to_dict(self, params: GroupParams) -> dict:
        grp = params.group
        return {
            "d": grp.encode(self.d).hex(),
            "e": grp.encode_scalar(self.e).hex(),
            "a": grp.encode_scalar(self.a).hex(),
            "b": grp.encode_scalar(self.b).hex(),
        }

    @classmethod
    def from_dict(cls, params: GroupParams, data: dict) -> "OpeningProof":
        grp = params.group
        return cls(
            grp.decode(bytes.fromhex(data["d"])),
            grp.decode_scalar(bytes.fromhex(data["e"])),
            grp.decode_scalar(bytes.fromhex(data["a"])),
            grp.decode_scalar(bytes.fromhex(data["b"])),
        )


def _opening_challenge(params: GroupParams, c: Commitment, d, context: bytes) -> int:
    t = Transcript(params, b"rialto/opening")
    t.append(b"context", context)
    t.append(b"statement", c.to_bytes())
    t.append_element(b"announcement", d)
    return t.challenge()


def prove_opening(
    params: GroupParams, v: int, r: int, c: Commitment, rng=None, context: bytes = b""
) -> OpeningProof:
    """Schnorr proof of knowledge of ``(v, r)`` with ``c = g^v h^r``.

    No check is made that ``(v, r)`` actually opens ``c``; a mismatched
    witness yields a proof that fails verification.
    """
    q = params.q
    y = random_scalar(params, rng)
    s = random_scalar(params, rng)
    d = commit(params, y, s).element
    e = _opening_challenge(params, c, d, context)
    return OpeningProof(d, e, (y + e * v) % q, (s + e * r) % q)


def verify_opening(params: GroupParams, c: Commitment, proof: OpeningProof, context: bytes = b"") -> bool:
    try:
        if not (_decodes(params, c.element) and _decodes(params, proof.d)):
            return False
        if proof.e != _opening_challenge(params, c, proof.d, context):
            return False
    except (TypeError, ValueError):
        return False
    lhs = commit(params, proof.a, proof.b)
    rhs = Commitment(params, proof.d) * c ** proof.e
    return lhs == rhs


# ---------------------------------------------------------------------------
# proof of knowledge of a blinding: D = h^x


@dataclass(frozen=True)
class BlindingProof:
    e: int
    z: int


def _blinding_challenge(params, target, announcement, context) -> int:
    t = Transcript(params, b"rialto/blinding")
    t.append(b"context", context)
    t.append(b"statement", target.to_bytes())
    t.append_element(b"announcement", announcement)
    return t.challenge()


def prove_blinding(params: GroupParams, x: int, target: Commitment, rng=None, context: bytes = b"") -> BlindingProof:
    """Prove knowledge of ``x`` with ``target = h^x`` (i.e. ``target`` commits to 0)."""
    k = random_scalar(params, rng)
    ann = params.group.exp(params.h, k)
    e = _blinding_challenge(params, target, ann, context)
    return BlindingProof(e, (k + e * x) % params.q)


def verify_blinding(params: GroupParams, target: Commitment, proof: BlindingProof, context: bytes = b"") -> bool:
    grp = params.group
    if not _decodes(params, target.element):
        return False
    ann = grp.div(grp.exp(params.h, proof.z), grp.exp(target.element, proof.e))
    return proof.e == _blinding_challenge(params, target, ann, context)


# ---------------------------------------------------------------------------
# bit-decomposition range proofs


@dataclass(frozen=True)
class BitProof:
    """CDS OR-proof that a commitment opens to 0 or to 1 (compact form)."""

    e0: int
    e1: int
    z0: int
    z1: int


@dataclass(frozen=True)
class RangeProof:
    bit_commitments: tuple
    bit_proofs: tuple
    blinding_delta: int  # r - sum(2^j r_j)

    @property
    def n_bits(self) -> int:
        return len(self.bit_commitments)

    def to_dict(self, params: GroupParams) -> dict:
        grp = params.group
        enc = grp.encode_scalar
        return {
            "bits": [grp.encode(c).hex() for c in self.bit_commitments],
            "proofs": [[enc(p.e0).hex(), enc(p.e1).hex(), enc(p.z0).hex(), enc(p.z1).hex()] for p in self.bit_proofs],
            "delta": enc(self.blinding_delta).hex(),
        }

    @classmethod
    def from_dict(cls, params: GroupParams, data: dict) -> "RangeProof":
        grp = params.group
        dec = lambda s: grp.decode_scalar(bytes.fromhex(s))  # noqa: E731
        return cls(
            tuple(grp.decode(bytes.fromhex(c)) for c in data["bits"]),
            tuple(BitProof(*(dec(x) for x in p)) for p in data["proofs"]),
            dec(data["delta"]),
        )


def _range_transcript(params, c: Commitment, bit_comms, context: bytes) -> Transcript:
    t = Transcript(params, b"rialto/range")
    t.append(b"context", context)
    t.append(b"statement", c.to_bytes())
    for cj in bit_comms:
        t.append_element(b"bit", cj)
    return t


def _bit_challenge(base: Transcript, j: int, a0, a1) -> int:
    t = base.copy()
    t.append(b"index", j.to_bytes(4, "big"))
    t.append_element(b"a0", a0)
    t.append_element(b"a1", a1)
    return t.challenge()


def _check_range_bits(params: GroupParams, n_bits: int) -> None:
    if n_bits < 1 or 2**n_bits >= params.q:
        raise ValueError(f"n_bits={n_bits} does not fit the group order")


def prove_range(
    params: GroupParams,
    v: int,
    r: int,
    n_bits: int = DEFAULT_RANGE_BITS,
    rng=None,
    context: bytes = b"",
) -> RangeProof:
    """Prove that ``commit(v, r)`` hides a value in ``[0, 2**n_bits)``.

    Raises :class:`RangeProofError` when ``v`` is outside that interval.
    """
    _check_range_bits(params, n_bits)
    if not 0 <= v < 2**n_bits:
        raise RangeProofError(f"value {v} does not fit in {n_bits} bits")
    grp, q, g, h = params.group, params.q, params.g, params.h
    c = commit(params, v, r)
    bits = [(v >> j) & 1 for j in range(n_bits)]
    blinds = [random_scalar(params, rng) for _ in range(n_bits)]
    comms = []
    for b, rj in zip(bits, blinds):
        hr = grp.exp(h, rj)
        comms.append(grp.op(g, hr) if b else hr)
    delta = (r - sum(rj << j for j, rj in enumerate(blinds))) % q
    base = _range_transcript(params, c, comms, context)

    proofs = []
    for j, (b, rj, cj) in enumerate(zip(bits, blinds, comms)):
        ys = (cj, grp.div(cj, g))  # statement for bit 0, bit 1
        k = random_scalar(params, rng)
        e_sim = random_scalar(params, rng)
        z_sim = random_scalar(params, rng)
        a_real = grp.exp(h, k)
        a_sim = grp.div(grp.exp(h, z_sim), grp.exp(ys[1 - b], e_sim))
        a0, a1 = (a_real, a_sim) if b == 0 else (a_sim, a_real)
        e = _bit_challenge(base, j, a0, a1)
        e_real = (e - e_sim) % q
        z_real = (k + e_real * rj) % q
        if b == 0:
            proofs.append(BitProof(e_real, e_sim, z_real, z_sim))
        else:
            proofs.append(BitProof(e_sim, e_real, z_sim, z_real))
    return RangeProof(tuple(comms), tuple(proofs), delta)


def verify_range(
    params: GroupParams,
    c: Commitment,
    proof: RangeProof,
    n_bits: int = DEFAULT_RANGE_BITS,
    context: bytes = b"",
) -> bool:
    _check_range_bits(params, n_bits)
    grp, g, h = params.group, params.g, params.h
    if len(proof.bit_commitments) != n_bits or len(proof.bit_proofs) != n_bits:
        return False
    try:
        if not all(_decodes(params, cj) for cj in proof.bit_commitments):
            return False
        if not _decodes(params, c.element):
            return False
    except (TypeError, ValueError):
        return False

    # Horner: prod C_j^(2^j) = (((C_{n-1})^2 C_{n-2})^2 ...) C_0
    acc = grp.identity
    for cj in reversed(proof.bit_commitments):
        acc = grp.op(grp.op(acc, acc), cj)
    acc = grp.op(acc, grp.exp(h, proof.blinding_delta))
    if grp.encode(acc) != c.to_bytes():
        return False

    base = _range_transcript(params, c, proof.bit_commitments, context)
    q = params.q
    for j, (cj, p) in enumerate(zip(proof.bit_commitments, proof.bit_proofs)):
        a0 = grp.div(grp.exp(h, p.z0), grp.exp(cj, p.e0))
        a1 = grp.div(grp.exp(h, p.z1), grp.exp(grp.div(cj, g), p.e1))
        if (p.e0 + p.e1) % q != _bit_challenge(base, j, a0, a1):
            return False
    return True
