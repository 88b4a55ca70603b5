from __future__ import annotations

import dataclasses
import random

import pytest

from zkdid import field as F
from zkdid.errors import DomainTooSmall, SizeMismatch
from zkdid.fri import (
    FriProof,
    final_bound,
    fold,
    fold_scalar,
    fri_commit,
    fri_prove,
    fri_verify,
    num_folds,
)
from zkdid.transcript import init

P = F.P


def low_degree_evals(rng, domain, degree_bound):
    coeffs = [rng.randrange(P) for _ in range(degree_bound)] + [0] * (domain.size - degree_bound)
    return F.ntt(coeffs, domain)


def prove_and_verify(evals, domain, degree_bound, queries=30, seed=0):
    proof, _, _ = fri_prove(evals, domain, init(b"fri-test"), queries, degree_bound, random.Random(seed))
    return proof, fri_verify(proof, domain, queries, init(b"fri-test"), None, degree_bound)


def test_fold_counts():
    assert num_folds(32) == 4 and final_bound(32) == 2
    assert num_folds(2) == 1 and final_bound(2) == 1
    assert num_folds(1) == 1 and final_bound(1) == 1


def test_constant_function_folds_to_constant():
    dom = F.EvalDomain(5, 7)
    c = 987654321
    commitment, _ = fri_commit([c] * 32, dom, init(b"c"), degree_bound=4, rng=random.Random(1))
    for layer in commitment.layers:
        assert set(layer.tolist()) == {c}
    assert commitment.final_coeffs == (c,)


def test_degree_one_polynomial_stays_degree_one():
    dom = F.EvalDomain(3, 7)
    evals = F.ntt([3, 5, 0, 0, 0, 0, 0, 0], dom)
    commitment, _ = fri_commit(evals, dom, init(b"d1"), degree_bound=2, rng=random.Random(2))
    for layer, d in zip(commitment.layers, commitment.domains):
        assert F.degree(F.intt(layer, d).tolist()) <= 1
    assert len(commitment.final_coeffs) <= 2


def test_fold_halves_degree_on_all_small_sizes():
    rng = random.Random(3)
    for log in range(1, 7):
        dom = F.EvalDomain(log, 7)
        bound = 1
        while bound <= dom.size:
            coeffs = [rng.randrange(P) for _ in range(bound)] + [0] * (dom.size - bound)
            beta = rng.randrange(P)
            folded = fold(F.ntt(coeffs, dom), dom, beta)
            half = dom.squared()
            got = F.intt(folded, half).tolist()
            assert F.degree(got) < max(bound // 2, 1)
            # fold identity: (f_even + beta * f_odd)(y)
            even, odd = coeffs[0::2], coeffs[1::2]
            assert got == [(e + beta * o) % P for e, o in zip(even, odd)]
            bound *= 2


def test_fold_scalar_matches_vector_fold():
    rng = random.Random(4)
    dom = F.EvalDomain(4, 7)
    vals = F.as_array([rng.randrange(P) for _ in range(16)])
    beta = rng.randrange(P)
    folded = fold(vals, dom, beta).tolist()
    for i in range(8):
        assert folded[i] == fold_scalar(int(vals[i]), int(vals[i + 8]), dom.element(i), beta)


def test_honest_proofs_verify():
    rng = random.Random(5)
    for log, bound in ((5, 4), (8, 32), (10, 128)):
        dom = F.EvalDomain(log, 7)
        _, ok = prove_and_verify(low_degree_evals(rng, dom, bound), dom, bound, seed=log)
        assert ok


def test_flipping_a_root_bit_rejects():
    rng = random.Random(6)
    dom = F.EvalDomain(8, 7)
    proof, ok = prove_and_verify(low_degree_evals(rng, dom, 32), dom, 32)
    assert ok
    for layer in range(len(proof.layer_roots)):
        for bit in (0, 77, 255):
            roots = list(proof.layer_roots)
            r = bytearray(roots[layer])
            r[bit // 8] ^= 1 << (bit % 8)
            roots[layer] = bytes(r)
            bad = dataclasses.replace(proof, layer_roots=tuple(roots))
            assert not fri_verify(bad, dom, 30, init(b"fri-test"), None, 32)


def test_tampered_openings_and_final_layer_reject():
    rng = random.Random(7)
    dom = F.EvalDomain(8, 7)
    proof, _ = prove_and_verify(low_degree_evals(rng, dom, 32), dom, 32)
    q0 = list(proof.queries[0])
    q0[1] = dataclasses.replace(q0[1], value=(q0[1].value + 1) % P)
    bad = dataclasses.replace(proof, queries=(tuple(q0),) + proof.queries[1:])
    assert not fri_verify(bad, dom, 30, init(b"fri-test"), None, 32)
    bad = dataclasses.replace(proof, final_coeffs=((proof.final_coeffs[0] + 1) % P,) + proof.final_coeffs[1:])
    assert not fri_verify(bad, dom, 30, init(b"fri-test"), None, 32)
    assert not fri_verify(dataclasses.replace(proof, queries=proof.queries[:-1]), dom, 30,
                          init(b"fri-test"), None, 32)
    assert not fri_verify(proof, dom, 30, init(b"other"), None, 32)


def test_layer0_callback_is_consulted():
    rng = random.Random(8)
    dom = F.EvalDomain(6, 7)
    evals = low_degree_evals(rng, dom, 8)
    proof, idx, _ = fri_prove(evals, dom, init(b"cb"), 10, 8, random.Random(1))
    seen = []

    def check(q, j, value):
        seen.append((q, j))
        return value == int(evals[j])

    assert fri_verify(proof, dom, 10, init(b"cb"), check, 8)
    assert [j for _, j in seen] == idx
    assert not fri_verify(proof, dom, 10, init(b"cb"), lambda q, j, v: False, 8)


def test_random_functions_rejected_statistically():
    dom = F.EvalDomain(11, 7)  # degree bound 256, blowup 8
    rejected = 0
    for seed in range(100):
        rng = random.Random(1000 + seed)
        evals = [rng.randrange(P) for _ in range(dom.size)]
        _, ok = prove_and_verify(evals, dom, 256, seed=seed)
        rejected += not ok
    assert rejected >= 99


def test_size_checks():
    with pytest.raises(DomainTooSmall):
        fri_commit([1, 2], F.EvalDomain(1), init())
    with pytest.raises(SizeMismatch):
        fri_commit([1] * 8, F.EvalDomain(4), init())
    empty = FriProof((), (), ())
    assert not fri_verify(empty, F.EvalDomain(4), 1, init())
