"""Independent Monte-Carlo oracle for the top-K Blom estimator.

Uses only the standard library quantile (statistics.NormalDist) and solves
the 2x2 normal equations by hand, so it shares no code with the package.
Run once; the printed thresholds are frozen in tests/test_privacy.py.
"""

import math
from statistics import NormalDist

import numpy as np

ALPHA = math.pi / 8
N, K, SEEDS = 512, 16, 100


def fit(points, n):
    inv = NormalDist().inv_cdf
    zs = [inv((r - ALPHA) / (n - 2 * ALPHA + 2)) for r, _ in points]
    xs = [x for _, x in points]
    # x = mu + b * (-z)
    us = [-z for z in zs]
    m = len(us)
    su, sx = sum(us), sum(xs)
    suu = sum(u * u for u in us)
    sux = sum(u * x for u, x in zip(us, xs))
    b = (m * sux - su * sx) / (m * suu - su * su)
    mu = (sx - b * su) / m
    return mu, b


def main():
    err_mu, err_sigma = [], []
    for seed in range(SEEDS):
        rates = sorted(np.random.default_rng(seed).normal(250, 15, size=N), reverse=True)
        mu, sigma = fit(list(enumerate(rates[:K], start=1)), N)
        err_mu.append(abs(mu - 250))
        err_sigma.append(abs(sigma - 15))
    print(f"mean |mu_E-250| = {sum(err_mu)/SEEDS:.6f}")
    print(f"mean |sigma_E-15| = {sum(err_sigma)/SEEDS:.6f}")


if __name__ == "__main__":
    main()
