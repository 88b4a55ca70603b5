from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zkdid import field as F
from zkdid.errors import SizeMismatch, UnsupportedOrder, ZeroInverse

P = F.P
felts = st.integers(min_value=0, max_value=P - 1)


def test_modulus_and_two_adicity():
    assert P == 18446744069414584321 == 2**64 - 2**32 + 1
    assert (P - 1) % 2**32 == 0 and ((P - 1) // 2**32) % 2 == 1


def test_trivial_examples():
    assert F.add(1, 1) == 2
    assert F.add(P - 1, 1) == 0
    assert F.mul(P - 1, P - 1) == 1
    assert F.inv(1) == 1
    assert F.power(5, 0) == 1 and F.power(0, 0) == 1
    assert F.power(7, P - 1) == 1
    with pytest.raises(ZeroInverse):
        F.inv(0)


@given(felts, felts)
def test_scalar_ops_match_wide_integers(a, b):
    assert F.add(a, b) == (a + b) % P
    assert F.sub(a, b) == (a - b) % P
    assert F.mul(a, b) == (a * b) % P
    assert F.neg(a) == (-a) % P


@given(st.integers(min_value=1, max_value=P - 1))
def test_inverse_matches_fermat(a):
    assert F.inv(a) == pow(a, P - 2, P)
    assert F.mul(a, F.inv(a)) == 1


@given(felts, st.integers(min_value=0, max_value=2**70))
def test_power_matches_square_and_multiply(a, e):
    acc, base, k = 1, a, e
    while k:
        if k & 1:
            acc = acc * base % P
        base = base * base % P
        k >>= 1
    assert F.power(a, e) == acc


def test_roots_of_unity():
    assert F.root_of_unity(0) == 1
    assert F.root_of_unity(1) == P - 1
    w = F.root_of_unity(32)
    assert pow(w, 2**32, P) == 1 and pow(w, 2**31, P) == P - 1
    for k in range(1, 33):
        wk = F.root_of_unity(k)
        assert wk == pow(7, (P - 1) >> k, P)
        assert pow(wk, 1 << (k - 1), P) == P - 1
    with pytest.raises(UnsupportedOrder):
        F.root_of_unity(33)


def test_felt_bytes_roundtrip():
    for v in (0, 1, P - 1, 0x0123456789ABCDEF):
        b = F.felt_to_bytes(v)
        assert len(b) == 8 and b == v.to_bytes(8, "big")
        assert F.felt_from_bytes(b) == v


def test_vector_kernels_match_oracle_on_edge_and_random_values():
    rng = random.Random(1)
    edge = [0, 1, 2, P - 1, P - 2, 2**32, 2**32 - 1, 2**63, P - 2**32]
    for size in (5, 400):  # exercises both the small-array and the limb kernel
        a = edge + [rng.randrange(P) for _ in range(size)]
        b = edge[::-1] + [rng.randrange(P) for _ in range(size)]
        va, vb = F.as_array(a), F.as_array(b)
        assert F.vadd(va, vb).tolist() == [(x + y) % P for x, y in zip(a, b)]
        assert F.vsub(va, vb).tolist() == [(x - y) % P for x, y in zip(a, b)]
        assert F.vmul(va, vb).tolist() == [(x * y) % P for x, y in zip(a, b)]
        assert F.vneg(va).tolist() == [(-x) % P for x in a]
    nz = F.as_array([rng.randrange(1, P) for _ in range(50)])
    assert F.vmul(F.batch_inv(nz), nz).tolist() == [1] * 50
    assert F.vinv(nz).tolist() == F.batch_inv(nz).tolist()
    with pytest.raises(ZeroInverse):
        F.batch_inv(F.as_array([3, 0]))


@settings(max_examples=200)
@given(felts, felts, felts)
def test_field_axioms(a, b, c):
    assert F.add(F.add(a, b), c) == F.add(a, F.add(b, c))
    assert F.mul(F.mul(a, b), c) == F.mul(a, F.mul(b, c))
    assert F.mul(a, b) == F.mul(b, a)
    assert F.mul(a, F.add(b, c)) == F.add(F.mul(a, b), F.mul(a, c))


def naive_eval(coeffs, domain):
    return [sum(c * pow(x, i, P) for i, c in enumerate(coeffs)) % P
            for x in (domain.element(j) for j in range(domain.size))]


def test_ntt_matches_naive_dft_size_8():
    rng = random.Random(2)
    dom = F.EvalDomain(3)
    coeffs = [rng.randrange(P) for _ in range(8)]
    assert F.ntt(coeffs, dom).tolist() == naive_eval(coeffs, dom)


def test_coset_ntt_matches_naive_evaluation():
    rng = random.Random(3)
    for log in range(0, 5):
        dom = F.EvalDomain(log, 7)
        coeffs = [rng.randrange(P) for _ in range(dom.size)]
        assert F.ntt(coeffs, dom).tolist() == naive_eval(coeffs, dom)
        assert F.intt(F.ntt(coeffs, dom), dom).tolist() == coeffs


def test_ntt_constant_and_identity_and_linearity():
    dom = F.EvalDomain(6, 7)
    assert F.ntt([5] + [0] * 63, dom).tolist() == [5] * 64
    rng = random.Random(4)
    u = [rng.randrange(P) for _ in range(64)]
    v = [rng.randrange(P) for _ in range(64)]
    assert F.intt(F.ntt(u, dom), dom).tolist() == u
    al, be = rng.randrange(P), rng.randrange(P)
    mix = [(al * x + be * y) % P for x, y in zip(u, v)]
    lhs = F.ntt(mix, dom).tolist()
    rhs = [(al * x + be * y) % P for x, y in zip(F.ntt(u, dom).tolist(), F.ntt(v, dom).tolist())]
    assert lhs == rhs


def test_ntt_batch_rows_match_single():
    dom = F.EvalDomain(4)
    rng = random.Random(5)
    rows = [[rng.randrange(P) for _ in range(16)] for _ in range(3)]
    batch = F.ntt(np.array(rows, dtype=np.uint64), dom)
    for r, row in zip(batch, rows):
        assert r.tolist() == F.ntt(row, dom).tolist()


def test_ntt_size_mismatch():
    with pytest.raises(SizeMismatch):
        F.ntt([1, 2, 3], F.EvalDomain(2))


def test_domain_invariants():
    dom = F.EvalDomain(5, 7)
    g = dom.generator
    assert pow(g, 32, P) == 1 and pow(g, 16, P) == P - 1
    elems = dom.elements().tolist()
    assert len(set(elems)) == 32 and elems[0] == 7
    sq = dom.squared()
    assert sq.size == 16 and sq.element(3) == pow(dom.element(3), 2, P)
    with pytest.raises(UnsupportedOrder):
        F.EvalDomain(33)


def test_poly_eval_and_degree():
    assert F.poly_eval([1, 2, 3], 2) == 17
    assert F.degree([0, 0]) == -1 and F.degree([1, 0, 4, 0]) == 2
