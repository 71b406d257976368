import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rialto.bucketization import (
    BucketError,
    BucketGrid,
    BucketedOrder,
    DeviationReport,
    TraderKeys,
    assign_bucket,
    bucket_bits,
    choose_buckets,
    histogram,
    judge_deviation,
    matches_commitment,
    open_sealed,
    penalize,
    prove_fee,
    prove_mean,
    seal_opening,
    settle_difference,
    settle_mean,
    verify_bucket,
)
from rialto.group import commit, default_params, prove_range
from rialto.ledger import MARKETPLACE, Ledger, SettlementRejected, order_context


def test_grid_arithmetic():
    g = BucketGrid(4, 1)
    assert g.index_of(1) == 0 and g.index_of(4) == 0 and g.index_of(5) == 1 and g.index_of(0) == -1
    assert g.bounds(1) == (5, 9)


def test_choose_buckets_is_deterministic_and_in_range():
    offsets = {choose_buckets(8, f"{i:064x}").offset for i in range(200)}
    assert offsets <= set(range(8)) and len(offsets) == 8
    assert choose_buckets(4, "ab") == choose_buckets(4, b"ab")
    assert choose_buckets(1, "x").offset == 0
    with pytest.raises(BucketError):
        choose_buckets(0, "x")


@pytest.mark.parametrize("w,bits", [(1, 1), (2, 1), (3, 2), (4, 2), (5, 3), (16, 4), (17, 5)])
def test_bucket_bits(w, bits):
    assert bucket_bits(w) == bits


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 600), st.sampled_from([1, 2, 3, 4, 7, 16]), st.integers(0, 15))
def test_bucket_proof_round_trip(rate, width, off):
    p = default_params()
    grid = BucketGrid(width, off % width)
    rnd = random.Random(rate)
    r = rnd.randrange(p.q)
    bo = assign_bucket(p, 7, rate, r, grid, rng=rnd)
    lo, hi = grid.bounds(bo.index)
    assert lo <= rate < hi
    assert verify_bucket(p, commit(p, rate, r), bo, grid)


def test_bucket_proof_rejects_wrong_bucket(pp, rng):
    grid = BucketGrid(4, 2)
    r = 12345
    bo = assign_bucket(pp, 1, 250, r, grid, rng=rng)
    for delta in (-1, 1):
        lie = BucketedOrder(bo.order_id, bo.rate_comm, bo.index + delta, bo.proof)
        assert not verify_bucket(pp, bo.rate_comm, lie, grid)
    # proof is tied to the grid it was made for
    assert not verify_bucket(pp, bo.rate_comm, bo, BucketGrid(4, 3))
    with pytest.raises(BucketError):
        assign_bucket(pp, 1, 250, r, grid, commit(pp, 251, r), rng)


def test_histogram(pp, rng):
    grid = BucketGrid(4, 0)
    orders = [assign_bucket(pp, i, rate, i, grid, rng=rng) for i, rate in enumerate([1, 2, 5, 9, 10])]
    assert histogram(orders) == {0: 2, 1: 1, 2: 2}


# -- messages and deviation -----------------------------------------------------------


def test_sealed_opening_round_trip_and_tamper(rng):
    alice, bob, eve = (TraderKeys.generate(random.Random(i)) for i in range(3))
    ct = seal_opening(alice, bob.public_key, 3, 250, 77)
    msg = open_sealed(bob, alice.verify_key, ct)
    assert (msg.order_id, msg.rate, msg.blinding) == (3, 250, 77)
    with pytest.raises(BucketError):
        open_sealed(eve, alice.verify_key, ct)  # wrong recipient
    with pytest.raises(BucketError):
        open_sealed(bob, eve.verify_key, ct)  # wrong signer
    bad = bytearray(ct)
    bad[-1] ^= 1
    with pytest.raises(BucketError):
        open_sealed(bob, alice.verify_key, bytes(bad))


def test_keys_deterministic_from_rng():
    a, b = TraderKeys.generate(random.Random(5)), TraderKeys.generate(random.Random(5))
    assert bytes(a.verify_key) == bytes(b.verify_key)


def _pair(pp, rng, rate_b=260, rate_s=251, bal=1000):
    L = Ledger(pp, test_mode=True)
    q = pp.q
    rb0, rs0 = rng.randrange(q), rng.randrange(q)
    ab = L.register_account(commit(pp, bal, rb0), (bal, rb0))
    as_ = L.register_account(commit(pp, bal, rs0), (bal, rs0))
    r_b, r_s = rng.randrange(q), rng.randrange(q)
    proof = prove_range(pp, bal - rate_b, rb0 - r_b, 32, rng, order_context(ab, 0))
    b = L.submit_order(ab, "BUY", [commit(pp, rate_b, r_b)], 0, proof, rate_opening=(rate_b, r_b))
    s = L.submit_order(as_, "SELL", [commit(pp, rate_s, r_s)], 0, rate_opening=(rate_s, r_s))
    return L, b, s, r_b, r_s, ab, as_


def test_deviation_is_judged_and_penalised(pp, rng):
    L, b, s, r_b, r_s, ab, as_ = _pair(pp, rng)
    kb, ks = TraderKeys.generate(random.Random(1)), TraderKeys.generate(random.Random(2))
    honest = open_sealed(ks, kb.verify_key, seal_opening(kb, ks.public_key, b, 260, r_b))
    assert matches_commitment(pp, L.orders[b].rate_comm, honest)
    lie = open_sealed(ks, kb.verify_key, seal_opening(kb, ks.public_key, b, 259, r_b))
    assert not matches_commitment(pp, L.orders[b].rate_comm, lie)
    total = L.conservation_total()
    # honest evidence, or evidence signed by someone else, is not a deviation
    assert not judge_deviation(pp, L, DeviationReport(s, b, honest.signed), kb.verify_key)
    assert not judge_deviation(pp, L, DeviationReport(s, b, lie.signed), ks.verify_key)
    assert judge_deviation(pp, L, DeviationReport(s, b, lie.signed), kb.verify_key)
    penalize(L, b)
    assert b not in L.orders
    assert L.accounts[MARKETPLACE].opening[0] == 260  # the escrow is forfeited
    assert L.conservation_total() == total


def test_seller_fine(pp, rng):
    L, b, s, *_ , as_ = _pair(pp, rng)
    total = L.conservation_total()
    penalize(L, s, fine=5)
    assert L.accounts[as_].opening[0] == 995
    assert L.accounts[MARKETPLACE].opening[0] == 5
    assert L.conservation_total() == total


# -- settlement -----------------------------------------------------------------------


def test_difference_settlement(pp, rng):
    L, b, s, r_b, r_s, ab, as_ = _pair(pp, rng)
    total = L.conservation_total()
    fee, proof = prove_fee(pp, b, s, 260, r_b, 251, r_s, rng)
    assert fee == 9
    with pytest.raises(SettlementRejected):
        settle_difference(L, b, s, fee + 1, proof)
    settle_difference(L, b, s, fee, proof)
    assert L.accounts[MARKETPLACE].opening[0] == 9
    assert L.accounts[as_].opening[0] == 1251
    assert L.accounts[ab].opening[0] == 740
    assert L.conservation_total() == total


@pytest.mark.parametrize("rate_b,rate_s,set_rate,refund,fee", [(40, 33, 36, 3, 1), (260, 250, 255, 5, 0)])
def test_mean_settlement(pp, rng, rate_b, rate_s, set_rate, refund, fee):
    L, b, s, r_b, r_s, ab, as_ = _pair(pp, rng, rate_b, rate_s)
    total = L.conservation_total()
    parity, proof = prove_mean(pp, b, s, rate_b, r_b, rate_s, r_s, 32, rng)
    assert parity == fee
    with pytest.raises(SettlementRejected):
        settle_mean(L, b, s, 1 - parity, proof)
    assert settle_mean(L, b, s, parity, proof) == set_rate
    assert L.accounts[as_].opening[0] == 1000 + set_rate
    assert L.accounts[ab].opening[0] == 1000 - rate_b + refund
    assert L.accounts[MARKETPLACE].opening[0] == fee
    assert L.conservation_total() == total
