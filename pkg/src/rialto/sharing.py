"""Additive and (k, n)-threshold secret sharing over Z_q."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .group import Commitment, GroupParams, commit, random_scalar

__all__ = [
    "ShareSet",
    "SharingError",
    "InsufficientShares",
    "split_additive",
    "split_threshold",
    "reconstruct",
    "lagrange_coefficients",
    "reconstruct_commitment",
    "share_with_commitments",
]


class SharingError(ValueError):
    pass


class InsufficientShares(SharingError):
    pass


@dataclass(frozen=True)
class ShareSet:
    """Shares of one secret.  ``scheme`` is ``"additive"`` or ``"threshold"``.

    Party indices start at 1; for the threshold scheme the index is also the
    polynomial evaluation point.
    """

    scheme: str
    shares: tuple[tuple[int, int], ...]
    modulus: int
    k: int | None = None

    @property
    def n(self) -> int:
        return len(self.shares)

    def value(self, party: int) -> int:
        for idx, val in self.shares:
            if idx == party:
                return val
        raise KeyError(party)

    def values(self) -> list[int]:
        return [v for _, v in self.shares]


def split_additive(secret: int, m: int, q: int, rng) -> ShareSet:
    if m < 2:
        raise SharingError("additive sharing needs at least 2 parties")
    head = [rng.randrange(q) for _ in range(m - 1)]
    last = (secret - sum(head)) % q
    return ShareSet("additive", tuple(enumerate(head + [last], start=1)), q)


def split_threshold(secret: int, k: int, n: int, q: int, rng) -> ShareSet:
    if not 2 <= k <= n:
        raise SharingError(f"need 2 <= k <= n, got k={k}, n={n}")
    if n >= q:
        raise SharingError("too many parties for the field")
    coeffs = [secret % q] + [rng.randrange(q) for _ in range(k - 1)]
    shares = []
    for x in range(1, n + 1):
        acc = 0
        for c in reversed(coeffs):
            acc = (acc * x + c) % q
        shares.append((x, acc))
    return ShareSet("threshold", tuple(shares), q, k)


def lagrange_coefficients(points: Sequence[int], q: int) -> list[int]:
    """Coefficients ``l_i`` with ``f(0) = sum l_i f(x_i)`` for distinct ``points``."""
    if len(set(points)) != len(points):
        raise SharingError("duplicate party indices")
    out = []
    for i, xi in enumerate(points):
        num, den = 1, 1
        for j, xj in enumerate(points):
            if i != j:
                num = num * (-xj) % q
                den = den * (xi - xj) % q
        out.append(num * pow(den, -1, q) % q)
    return out


def _select(share_set: ShareSet, subset: Iterable[int] | None) -> list[tuple[int, int]]:
    if subset is None:
        return list(share_set.shares)
    subset = list(subset)
    if len(set(subset)) != len(subset):
        raise SharingError("duplicate party indices")
    return [(p, share_set.value(p)) for p in subset]


def reconstruct(share_set: ShareSet, subset: Iterable[int] | None = None) -> int:
    """Recover the secret from the shares of ``subset`` (default: all parties)."""
    q = share_set.modulus
    chosen = _select(share_set, subset)
    if share_set.scheme == "additive":
        if len(chosen) != share_set.n:
            raise InsufficientShares("additive sharing needs every share")
        return sum(v for _, v in chosen) % q
    if len(chosen) < share_set.k:
        raise InsufficientShares(f"need {share_set.k} shares, got {len(chosen)}")
    xs = [p for p, _ in chosen]
    lam = lagrange_coefficients(xs, q)
    return sum(l * v for l, (_, v) in zip(lam, chosen)) % q


def reconstruct_commitment(
    params: GroupParams,
    share_comms: dict[int, Commitment],
    scheme: str = "additive",
) -> Commitment:
    """Combine per-share commitments into the commitment of the secret.

    Additive shares multiply directly; threshold shares are interpolated in
    the exponent over whichever parties are present in ``share_comms``.
    """
    parties = sorted(share_comms)
    if scheme == "additive":
        return Commitment.product(params, [share_comms[p] for p in parties])
    lam = lagrange_coefficients(parties, params.q)
    return Commitment.product(params, [share_comms[p] ** l for p, l in zip(parties, lam)])


def share_with_commitments(
    params: GroupParams,
    secret: int,
    blinding: int,
    m: int,
    rng,
    k: int | None = None,
) -> tuple[ShareSet, ShareSet, list[Commitment]]:
    """Share ``secret`` and ``blinding`` the same way and commit to each share pair.

    With ``k`` given the threshold scheme is used, otherwise additive.
    """
    q = params.q
    if k is None:
        vs = split_additive(secret, m, q, rng)
        rs = split_additive(blinding, m, q, rng)
    else:
        vs = split_threshold(secret, k, m, q, rng)
        rs = split_threshold(blinding, k, m, q, rng)
    comms = [commit(params, v, r) for v, r in zip(vs.values(), rs.values())]
    return vs, rs, comms


def random_blinding(params: GroupParams, rng=None) -> int:
    return random_scalar(params, rng)
