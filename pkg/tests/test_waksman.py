import itertools
import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from rialto.waksman import (
    NetworkError,
    apply_network,
    build_network,
    compose,
    gate_bound,
    is_permutation,
    sample_permutation,
    sample_uniform_network,
)


def _expected_gates(n):
    # sum_{i=1..n} ceil(log2 i), computed independently of the recursion
    return sum(math.ceil(math.log2(i)) for i in range(1, n + 1))


@pytest.mark.parametrize("n", range(1, 40))
def test_gate_bound_closed_form(n):
    assert gate_bound(n) == _expected_gates(n)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 70).flatmap(lambda n: st.permutations(list(range(n)))))
def test_network_realises_permutation(perm):
    net = build_network(perm)
    items = [f"x{i}" for i in range(len(perm))]
    assert apply_network(net, items) == [items[p] for p in perm]
    assert len(net.gates) <= gate_bound(len(perm))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_every_permutation_routes_exhaustively(n):
    for perm in itertools.permutations(range(n)):
        assert build_network(perm).permutation() == list(perm)


def test_all_bit_settings_give_permutations_and_cover_s4():
    net = build_network([0, 1, 2, 3])
    assert len(net.gates) == 5
    seen = set()
    for bits in itertools.product((0, 1), repeat=5):
        p = net.with_bits(bits).permutation()
        assert is_permutation(p)
        seen.add(tuple(p))
    assert len(seen) == 24


def test_layers_touch_disjoint_wires():
    net = sample_uniform_network(16, random.Random(3))
    for layer in net.layers:
        wires = [w for g in layer for w in (g.a, g.b)]
        assert len(wires) == len(set(wires))
    assert sum(len(l) for l in net.layers) == len(net.gates)


def test_compose_order():
    first, second = [1, 2, 0], [2, 0, 1]
    items = ["a", "b", "c"]
    once = apply_network(build_network(first), items)
    twice = apply_network(build_network(second), once)
    assert twice == [items[i] for i in compose(second, first)]


def test_errors():
    with pytest.raises(NetworkError):
        build_network([0, 0, 1])
    with pytest.raises(NetworkError):
        apply_network(build_network([1, 0]), [1, 2, 3])
    with pytest.raises(NetworkError):
        build_network([0, 1]).with_bits([1, 1])


def _chi2_uniform_s4(draw, samples=24000):
    counts = Counter(tuple(draw()) for _ in range(samples))
    perms = list(itertools.permutations(range(4)))
    assert set(counts) <= set(perms)
    return chisquare([counts[p] for p in perms]).pvalue


def test_uniform_network_is_uniform_on_s4():
    rnd = random.Random(2024)
    assert _chi2_uniform_s4(lambda: sample_uniform_network(4, rnd).permutation()) > 0.01


def test_one_honest_network_among_adversarial_ones_stays_uniform():
    rnd = random.Random(77)
    fixed_a = build_network([3, 1, 0, 2])
    fixed_b = build_network([1, 0, 3, 2])

    def draw():
        items = list(range(4))
        items = apply_network(fixed_a, items)
        items = apply_network(sample_uniform_network(4, rnd), items)
        return apply_network(fixed_b, items)

    assert _chi2_uniform_s4(draw) > 0.01


def test_sample_permutation_uniform():
    rnd = random.Random(5)
    assert _chi2_uniform_s4(lambda: sample_permutation(4, rnd)) > 0.01
