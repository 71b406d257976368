"""How much does revealing the top-K matched rates help an observer?

The observer fits a Gaussian to the revealed rates (Blom's plotting
positions plus least squares) and we report the KL-based information gain
against a prior that only knows the rate range.  Averages over 100 seeds.

    python demos/privacy_curves.py
"""

import numpy as np

from rialto.privacy import GaussianParams, rialto_gain

truth = GaussianParams(250.0, 15.0)
seeds = range(100)

print("broker view, N = 512")
for k in (4, 8, 16, 32, 64):
    b = np.mean([rialto_gain(512, k, truth, np.random.default_rng(s), "broker") for s in seeds])
    t = np.mean([rialto_gain(512, k, truth, np.random.default_rng(s), "trader") for s in seeds])
    print(f"  K={k:<3} broker {b:6.2f}%   trader {t:5.2f}%")

print("\nbook size at K = 16")
for n in (128, 256, 512, 1024):
    g = np.mean([rialto_gain(n, 16, truth, np.random.default_rng(s)) for s in seeds])
    print(f"  N={n:<5} {g:6.2f}%")
