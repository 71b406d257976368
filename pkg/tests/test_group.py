import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rialto.group import (
    BlindingProof,
    Commitment,
    ModpGroup,
    RangeProof,
    RangeProofError,
    commit,
    prove_blinding,
    prove_opening,
    prove_range,
    verify_blinding,
    verify_opening,
    verify_range,
)


# -- the small group, checked by enumeration ----------------------------------


def test_test_group_is_the_order_11_subgroup(tp):
    grp = tp.group
    assert isinstance(grp, ModpGroup) and tp.q == 11
    # 2 and 3 both generate the quadratic residues mod 23
    residues = sorted({x * x % 23 for x in range(1, 23)})
    assert sorted({pow(2, k, 23) for k in range(11)}) == residues
    assert sorted({pow(3, k, 23) for k in range(11)}) == residues


def test_commit_matches_direct_formula(tp):
    for v, r in itertools.product(range(11), repeat=2):
        assert commit(tp, v, r).element == pow(2, v, 23) * pow(3, r, 23) % 23


def test_commitments_are_perfectly_hiding_in_small_group(tp):
    # for every value, the blindings sweep the whole subgroup exactly once
    for v in range(11):
        assert len({commit(tp, v, r) for r in range(11)}) == 11


def test_homomorphism_exhaustive(tp):
    for v1, r1, v2, r2 in itertools.product(range(0, 11, 2), range(11), range(0, 11, 3), range(0, 11, 5)):
        assert commit(tp, v1, r1) * commit(tp, v2, r2) == commit(tp, v1 + v2, r1 + r2)
        assert commit(tp, v1, r1) / commit(tp, v2, r2) == commit(tp, v1 - v2, r1 - r2)
        assert commit(tp, v1, r1) ** 3 == commit(tp, 3 * v1, 3 * r1)


def test_identity_and_product(tp, pp):
    for params in (tp, pp):
        cs = [commit(params, i, 2 * i + 1) for i in range(5)]
        assert Commitment.product(params, cs) == commit(params, 10, 25)
        assert Commitment.product(params, []) == Commitment.identity(params)
        assert commit(params, 0, 0) == Commitment.identity(params)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**64), st.integers(0, 2**64), st.integers(0, 2**64), st.integers(0, 2**64))
def test_homomorphism_production_group(v1, r1, v2, r2):
    from rialto.group import default_params

    p = default_params()
    assert commit(p, v1, r1) * commit(p, v2, r2) == commit(p, v1 + v2, r1 + r2)


def test_serialisation_round_trip(pp, tp):
    for params in (pp, tp):
        c = commit(params, 42, 7)
        assert Commitment.from_bytes(params, c.to_bytes()) == c
        assert Commitment.from_bytes(params, bytes.fromhex(c.hex())) == c


def test_scalars_reduce_mod_q(pp):
    assert commit(pp, pp.q + 5, 3) == commit(pp, 5, 3)
    assert commit(pp, -1, 0) == commit(pp, pp.q - 1, 0)


# -- opening and blinding proofs -----------------------------------------------


def test_opening_proof_complete_and_sound_exhaustive(tp, rng):
    for v, r in itertools.product(range(11), repeat=2):
        c = commit(tp, v, r)
        assert verify_opening(tp, c, prove_opening(tp, v, r, c, rng, b"ctx"), b"ctx")
    c = commit(tp, 4, 9)
    bad = prove_opening(tp, 5, 9, c, rng, b"ctx")
    # a wrong witness only verifies if the Fiat-Shamir challenge happens to be 0
    assert not verify_opening(tp, c, bad, b"ctx") or bad.e == 0


def test_opening_proof_binds_context(pp, rng):
    c = commit(pp, 250, 77)
    proof = prove_opening(pp, 250, 77, c, rng, b"order/1")
    assert verify_opening(pp, c, proof, b"order/1")
    assert not verify_opening(pp, c, proof, b"order/2")
    assert not verify_opening(pp, commit(pp, 251, 77), proof, b"order/1")


def test_blinding_proof(pp, rng):
    x = 123456789
    target = commit(pp, 0, x)
    proof = prove_blinding(pp, x, target, rng, b"fee")
    assert isinstance(proof, BlindingProof)
    assert verify_blinding(pp, target, proof, b"fee")
    assert not verify_blinding(pp, target * commit(pp, 1, 0), proof, b"fee")
    assert not verify_blinding(pp, target, proof, b"other")


# -- range proofs ---------------------------------------------------------------


def test_range_proof_exhaustive_small_group(tp, rng):
    """Values below 2**3 prove and verify; values from 8 up cannot be proven."""
    n = 3
    for v in range(16):
        for r in range(11):
            c = commit(tp, v, r)
            if v < 8:
                assert verify_range(tp, c, prove_range(tp, v, r, n, rng), n)
            else:
                with pytest.raises(RangeProofError):
                    prove_range(tp, v, r, n, rng)
    # a 3-bit decomposition can only rebuild group values 0..7: for the true
    # out-of-range values 8, 9, 10 no choice of low bits or delta balances
    for v in (8, 9, 10):
        for r in range(11):
            c = commit(tp, v, r)
            for w in range(8):
                honest = prove_range(tp, w, r, n, rng)
                for delta in range(11):
                    forged = RangeProof(honest.bit_commitments, honest.bit_proofs, delta)
                    assert not verify_range(tp, c, forged, n)


def test_range_proof_production_group(pp, rng):
    for v in (0, 1, 2**31, 2**32 - 1):
        c = commit(pp, v, 99)
        proof = prove_range(pp, v, 99, 32, rng, b"acct")
        assert verify_range(pp, c, proof, 32, b"acct")
        assert not verify_range(pp, c, proof, 32, b"other")
        assert not verify_range(pp, c * commit(pp, 1, 0), proof, 32, b"acct")
    for v in (-1, 2**32):
        with pytest.raises(RangeProofError):
            prove_range(pp, v, 1, 32, rng)


def test_range_proof_serialises(pp, rng):
    c = commit(pp, 1000, 5)
    proof = prove_range(pp, 1000, 5, 16, rng)
    back = RangeProof.from_dict(pp, proof.to_dict(pp))
    assert verify_range(pp, c, back, 16)


def test_range_proof_rejects_wrong_width(pp, rng):
    proof = prove_range(pp, 5, 5, 8, rng)
    assert not verify_range(pp, commit(pp, 5, 5), proof, 16)


def test_range_proof_rejects_bit_tampering(pp, rng):
    c = commit(pp, 37, 11)
    proof = prove_range(pp, 37, 11, 8, rng)
    bp = list(proof.bit_proofs)
    b0 = bp[0]
    bp[0] = type(b0)(b0.e0, b0.e1, (b0.z0 + 1) % pp.q, b0.z1)
    assert not verify_range(pp, c, RangeProof(proof.bit_commitments, tuple(bp), proof.blinding_delta), 8)


def test_range_width_must_fit_group(tp):
    with pytest.raises(ValueError):
        prove_range(tp, 1, 1, 4, random.Random(0))  # 2**4 > 11
