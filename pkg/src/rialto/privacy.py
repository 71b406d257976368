"""Order-rate privacy: what an observer can infer about a round's rate distribution.

The observer fits a Gaussian to the leaked order statistics with Blom's
approximation and the privacy gain is the KL divergence of that estimate from
the true Gaussian, as a percentage of the true distribution's entropy.

Ranks count from the top: rank 1 is the highest rate of the round.  With the
minus sign in the Blom expression this makes rank 1 map to the largest
expected value.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtri

__all__ = [
    "ALPHA",
    "GaussianParams",
    "LeakageView",
    "PrivacyReport",
    "InsufficientData",
    "blom_expectation",
    "blom_quantile_arg",
    "estimate_params",
    "gaussian_kl",
    "entropy",
    "privacy_gain",
    "bucketization_estimate",
    "rialto_gain",
    "bucketization_gain",
]

ALPHA = math.pi / 8


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class GaussianParams:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class LeakageView:
    """What one observer sees after a round.

    ``top_rates`` are descending.  ``own`` is ``(rank, rate)`` for a trader.
    ``histogram`` maps bucket index to count (bucketization only); ``grid``
    is then ``(width, offset)``.  ``top_ranks`` gives the rank of each
    revealed rate when it is known; by default they are ``1..K``.
    """

    top_rates: tuple
    n: int
    own: tuple | None = None
    histogram: dict | None = None
    grid: tuple | None = None
    top_ranks: tuple | None = None

    def __post_init__(self):
        if len(self.top_rates) > self.n:
            raise ValueError("K cannot exceed N")
        if self.top_ranks is not None and len(self.top_ranks) != len(self.top_rates):
            raise ValueError("one rank per revealed rate")

    def points(self) -> list[tuple[int, float]]:
        ranks = self.top_ranks or range(1, len(self.top_rates) + 1)
        pts = [(int(r), float(x)) for r, x in zip(ranks, self.top_rates)]
        if self.own is not None and all(r != self.own[0] for r, _ in pts):
            pts.append((int(self.own[0]), float(self.own[1])))
        return pts


def blom_quantile_arg(r, n):
    return (r - ALPHA) / (n - 2 * ALPHA + 2)


def blom_expectation(r: int, n: int, params: GaussianParams) -> float:
    """``mu - Phi^{-1}((r - alpha) / (n - 2 alpha + 2)) * sigma``."""
    p = blom_quantile_arg(r, n)
    if not 0 < p < 1:
        raise ValueError(f"quantile argument {p} outside (0, 1)")
    return params.mu - float(ndtri(p)) * params.sigma


def estimate_params(view: LeakageView, sigma_floor: float = 1e-6) -> GaussianParams:
    """Least-squares fit of ``x_r = mu - z_r sigma`` over the visible (rank, rate) points."""
    pts = view.points()
    if len(pts) < 2:
        raise InsufficientData("need at least two (rank, rate) points")
    ranks = np.array([r for r, _ in pts], dtype=float)
    xs = np.array([x for _, x in pts])
    p = blom_quantile_arg(ranks, view.n)
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("rank outside the valid range for this N")
    z = ndtri(p)
    if np.ptp(z) == 0:
        raise InsufficientData("all points share one rank")
    A = np.column_stack([np.ones_like(z), -z])
    (mu, sigma), *_ = np.linalg.lstsq(A, xs, rcond=None)
    return GaussianParams(float(mu), max(float(sigma), sigma_floor))


def gaussian_kl(p: GaussianParams, q: GaussianParams) -> float:
    """KL(p || q) for univariate Gaussians."""
    if p.sigma <= 0 or q.sigma <= 0:
        raise ValueError("KL needs sigma > 0")
    return math.log(q.sigma / p.sigma) + (p.sigma**2 + (p.mu - q.mu) ** 2) / (2 * q.sigma**2) - 0.5


def entropy(p: GaussianParams) -> float:
    """Differential entropy in nats."""
    if p.sigma <= 0:
        raise ValueError("entropy needs sigma > 0")
    return 0.5 * math.log(2 * math.pi * math.e * p.sigma**2)


def privacy_gain(est: GaussianParams, true: GaussianParams) -> float:
    h = entropy(true)
    if h <= 0:
        raise ValueError(f"entropy {h:.4g} <= 0, gain undefined (sigma_T too small)")
    return gaussian_kl(est, true) / h * 100


def bucketization_estimate(view: LeakageView, rng, variance_rule: str = "bessel") -> GaussianParams:
    """Rebuild a synthetic round from the bucket histogram and fit mean/variance.

    Every order without a known exact value is drawn uniformly inside its
    bucket.  Exact values (top-K rates, the viewer's own rate) replace one
    draw in their bucket.  ``variance_rule`` is ``"bessel"`` (``N/(N-1)``)
    or ``"literal"`` (multiply the sample variance by ``N``).
    """
    if not view.histogram or sum(view.histogram.values()) == 0:
        raise InsufficientData("empty histogram")
    width, offset = view.grid
    counts = dict(view.histogram)
    exact = [float(x) for x in view.top_rates]
    if view.own is not None:
        exact.append(float(view.own[1]))
    for x in exact:
        idx = math.floor((x - offset) / width) if width else None
        if idx in counts and counts[idx] > 0:
            counts[idx] -= 1
    draws = [np.asarray(exact)]
    for idx, c in sorted(counts.items()):
        lo = offset + idx * width
        draws.append(lo + rng.uniform(0.0, width, size=c) if width else np.full(c, float(lo)))
    sample = np.concatenate(draws)
    n = len(sample)
    mu = float(sample.mean())
    if n < 2:
        return GaussianParams(mu, 0.0)
    var = float(sample.var())  # 1/N
    if variance_rule == "bessel":
        var *= n / (n - 1)
    elif variance_rule == "literal":
        var *= n
    else:
        raise ValueError(variance_rule)
    return GaussianParams(mu, math.sqrt(var))


@dataclass
class PrivacyReport:
    round: int
    view: str  # "broker" or "trader"
    n: int
    k: int
    estimate: GaussianParams
    truth: GaussianParams
    kl: float
    entropy: float
    gain: float
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, round_no, view_name, view: LeakageView, est: GaussianParams, truth: GaussianParams, **meta):
        return cls(
            round_no,
            view_name,
            view.n,
            len(view.top_rates),
            est,
            truth,
            gaussian_kl(est, truth) if est.sigma > 0 else math.inf,
            entropy(truth),
            privacy_gain(est, truth) if est.sigma > 0 else math.inf,
            meta,
        )

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Monte-Carlo drivers used by the experiments


def rialto_gain(n: int, k: int, truth: GaussianParams, rng, view: str = "broker") -> float:
    """Gain for one synthetic round of ``n`` Gaussian rates.

    The broker sees the top ``k`` rates; a trader also knows the rank and
    rate of one uniformly chosen order outside the top ``k``.
    """
    rates = np.sort(rng.normal(truth.mu, truth.sigma, size=n))[::-1]
    own = None
    if view == "trader" and n > k:
        rank = int(rng.integers(k + 1, n + 1))
        own = (rank, float(rates[rank - 1]))
    lv = LeakageView(tuple(rates[:k]), n, own)
    return privacy_gain(estimate_params(lv), truth)


def bucketization_gain(
    n: int,
    k: int,
    width: int,
    truth: GaussianParams,
    rng,
    variance_rule: str = "bessel",
) -> float:
    rates = np.sort(rng.normal(truth.mu, truth.sigma, size=n))[::-1]
    offset = int(rng.integers(0, width))
    idx = np.floor((rates - offset) / width).astype(int)
    hist = {int(i): int(c) for i, c in zip(*np.unique(idx, return_counts=True))}
    lv = LeakageView(tuple(rates[:k]), n, None, hist, (width, offset))
    return privacy_gain(bucketization_estimate(lv, rng, variance_rule), truth)
