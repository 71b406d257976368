"""Waksman permutation networks (arbitrary N, asymmetric recursive split).

Every gate acts on two positions of a single array of N wires, so applying a
network is a plain sequence of conditional swaps.  The upper subnetwork of a
block owns the even wires of that block and the lower one owns the odd wires.

Permutation convention: a network built from ``perm`` maps ``items`` to
``[items[perm[i]] for i in range(N)]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

__all__ = [
    "Gate",
    "PermutationNetwork",
    "NetworkError",
    "build_network",
    "apply_network",
    "sample_uniform_network",
    "sample_permutation",
    "compose",
    "gate_bound",
    "is_permutation",
]


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    a: int
    b: int
    bit: int


@dataclass(frozen=True)
class PermutationNetwork:
    size: int
    gates: tuple[Gate, ...]

    @property
    def control_bits(self) -> tuple[int, ...]:
        return tuple(g.bit for g in self.gates)

    def with_bits(self, bits: Sequence[int]) -> "PermutationNetwork":
        if len(bits) != len(self.gates):
            raise NetworkError("control bit count mismatch")
        return PermutationNetwork(self.size, tuple(Gate(g.a, g.b, int(b)) for g, b in zip(self.gates, bits)))

    @property
    def layers(self) -> list[list[Gate]]:
        """Gates grouped greedily by depth (gates in one layer touch disjoint wires)."""
        depth = [0] * self.size
        layers: list[list[Gate]] = []
        for g in self.gates:
            d = max(depth[g.a], depth[g.b])
            if d == len(layers):
                layers.append([])
            layers[d].append(g)
            depth[g.a] = depth[g.b] = d + 1
        return layers

    def permutation(self) -> list[int]:
        return apply_network(self, list(range(self.size)))


def is_permutation(perm: Sequence[int]) -> bool:
    return sorted(perm) == list(range(len(perm)))


def gate_bound(n: int) -> int:
    """Switch count of the recursive construction: sum of ceil(log2 i) for i=1..n."""
    if n <= 1:
        return 0
    if n == 2:
        return 1
    return gate_bound((n + 1) // 2) + gate_bound(n // 2) + n - 1


def _route(perm: list[int], wires: list[int], out: list[Gate]) -> None:
    n = len(perm)
    if n <= 1:
        return
    if n == 2:
        out.append(Gate(wires[0], wires[1], int(perm[0] == 1)))
        return
    m = n // 2
    inv = [0] * n
    for o, x in enumerate(perm):
        inv[x] = o

    # side[x]: 0 if input x is routed through the upper subnetwork
    side = [-1] * n

    def in_partner(x):
        if n % 2 and x == n - 1:
            return None
        return x ^ 1

    def out_partner(o):
        if n % 2:
            return None if o == n - 1 else o ^ 1
        return None if o >= n - 2 else o ^ 1

    def assign(x, s):
        stack = [(x, s)]
        while stack:
            x, s = stack.pop()
            if side[x] != -1:
                if side[x] != s:
                    raise AssertionError("inconsistent routing constraints")
                continue
            side[x] = s
            y = in_partner(x)
            if y is not None:
                stack.append((y, 1 - s))
            o2 = out_partner(inv[x])
            if o2 is not None:
                stack.append((perm[o2], 1 - s))

    if n % 2:
        assign(n - 1, 0)
        assign(perm[n - 1], 0)
    else:
        assign(perm[n - 2], 0)
        assign(perm[n - 1], 1)
    for x in range(n):
        if side[x] == -1:
            assign(x, 0)

    for j in range(m):
        out.append(Gate(wires[2 * j], wires[2 * j + 1], side[2 * j]))

    upper_perm = [0] * ((n + 1) // 2)
    lower_perm = [0] * m
    for o, x in enumerate(perm):
        if side[x] == 0:
            upper_perm[o // 2] = x // 2
        else:
            lower_perm[o // 2] = x // 2
    _route(upper_perm, wires[0::2], out)
    _route(lower_perm, wires[1::2], out)

    n_out = m if n % 2 else m - 1
    for j in range(n_out):
        out.append(Gate(wires[2 * j], wires[2 * j + 1], side[perm[2 * j]]))


def build_network(perm: Sequence[int]) -> PermutationNetwork:
    perm = [int(x) for x in perm]
    if not is_permutation(perm):
        raise NetworkError("input is not a permutation of range(N)")
    gates: list[Gate] = []
    _route(perm, list(range(len(perm))), gates)
    return PermutationNetwork(len(perm), tuple(gates))


def apply_network(net: PermutationNetwork, items: Sequence) -> list:
    if len(items) != net.size:
        raise NetworkError(f"expected {net.size} items, got {len(items)}")
    arr = list(items)
    for g in net.gates:
        if g.bit:
            arr[g.a], arr[g.b] = arr[g.b], arr[g.a]
    return arr


def compose(second: Sequence[int], first: Sequence[int]) -> list[int]:
    """Permutation equal to applying ``first`` then ``second``."""
    return [first[i] for i in second]


def sample_permutation(n: int, rng) -> list[int]:
    perm = list(range(n))
    for i in range(n - 1, 0, -1):  # Fisher-Yates
        j = rng.randrange(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def sample_uniform_network(n: int, rng) -> PermutationNetwork:
    if n < 1:
        raise NetworkError("network size must be positive")
    return build_network(sample_permutation(n, rng))
