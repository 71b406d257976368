"""Build an MPC engine holding shared orders, without a ledger."""

import random

from rialto.group import commit
from rialto.mpc import InProcessTransport, MPCEngine, OrderMeta, ShareBundle
from rialto.sharing import split_additive, split_threshold


class Desk:
    def __init__(self, params, m=3, scheme="additive", seed=0, transport=None):
        self.params = params
        self.m = m
        self.scheme = scheme
        self.rng = random.Random(seed)
        self.comms = {}
        self.secrets = {}  # oid -> (rate, blinding, rho)
        self.meta = {}
        self.engine = MPCEngine(
            params, m, self.comms.__getitem__, scheme=scheme, seed=seed, transport=transport or InProcessTransport()
        )

    def _split(self, x):
        q = self.params.q
        if self.scheme == "additive":
            return split_additive(x, self.m, q, self.rng).values()
        return split_threshold(x, self.engine.k, self.m, q, self.rng).values()

    def add(self, oid, rate, side="BUY", round_no=0, account=0):
        P, q = self.params, self.params.q
        r, rho = self.rng.randrange(q), self.rng.randrange(q)
        vs, rs, ps = self._split(rate), self._split(r), self._split(rho)
        sc = [commit(P, a, b) for a, b in zip(vs, rs)]
        pc = [commit(P, 0, x) for x in ps]
        self.comms[oid] = (sc, pc)
        self.secrets[oid] = (rate, r, rho)
        self.meta[oid] = OrderMeta(oid, side, round_no)
        self.engine.send_shares(
            f"trader{oid}", [ShareBundle(oid, a, b, c, account, x, y) for a, b, c, x, y in zip(vs, rs, ps, sc, pc)]
        )
