from __future__ import annotations

import dataclasses
import random

import pytest

from conftest import NONCE, make_case
from zkdid import field as F
from zkdid.air import DEFAULT_AIR, TOY_AIR, AirConfig, build_trace, check_trace, predicate_constraints
from zkdid.errors import DecodeError, PredicateUnsatisfied
from zkdid.stark import (
    DEFAULT_PARAMS,
    HEADER_LEN,
    MAGIC,
    TOY_PARAMS,
    ProofParams,
    decode_proof,
    encode_proof,
    prove,
    verify,
)

P = F.P
# a deliberately tiny configuration so exhaustive byte-level fuzzing stays fast
MICRO_PARAMS = ProofParams(num_queries=3, air=AirConfig(depth=1, rounds=4, range_bits=2, trace_length=16))


@pytest.fixture(scope="module")
def toy_proof():
    stmt, wit = make_case(TOY_AIR, [12], 0, 10, slot=1)
    return stmt, wit, prove(stmt, wit, TOY_PARAMS, seed=1)


def test_toy_end_to_end_cross_checked_by_trace_oracle(toy_proof):
    stmt, wit, proof = toy_proof
    assert check_trace(build_trace(stmt, wit, TOY_AIR, random.Random(0)), predicate_constraints(stmt, TOY_AIR)).ok
    assert verify(stmt, NONCE, proof)
    assert verify(stmt, NONCE, proof, TOY_PARAMS)
    assert proof.composition_root == proof.fri.layer_roots[0]
    assert proof.size_bytes == len(encode_proof(proof))


def test_same_seed_is_bit_identical_and_seeds_differ(toy_proof):
    stmt, wit, proof = toy_proof
    again = prove(stmt, wit, TOY_PARAMS, seed=1)
    assert encode_proof(again) == encode_proof(proof)
    other = prove(stmt, wit, TOY_PARAMS, seed=2)
    assert encode_proof(other) != encode_proof(proof)
    assert verify(stmt, NONCE, other)


def test_nonce_and_statement_binding(toy_proof):
    stmt, _, proof = toy_proof
    assert not verify(stmt, bytes(16), proof)
    variants = [
        dict(accumulator_root=(stmt.accumulator_root + 1) % P),
        dict(threshold=stmt.threshold + 1),
        dict(threshold=stmt.threshold - 1),
        dict(epoch=stmt.epoch + 1),
        dict(issuer_did=stmt.issuer_did[:-1] + "0"),
        dict(nonce=bytes(16)),
    ]
    for change in variants:
        assert not verify(dataclasses.replace(stmt, **change), NONCE, proof), change
        assert not verify(dataclasses.replace(stmt, **change), dataclasses.replace(stmt, **change).nonce, proof)


def test_attribute_index_binding_on_wider_schema():
    stmt, wit = make_case(DEFAULT_AIR, [750, 3, 900], 0, 700, slot=9)
    proof = prove(stmt, wit, DEFAULT_PARAMS, seed=3)
    assert verify(stmt, NONCE, proof)
    for idx in (1, 2):
        assert not verify(dataclasses.replace(stmt, attribute_index=idx), NONCE, proof)
    assert not verify(dataclasses.replace(stmt, num_attributes=2), NONCE, proof)


def test_params_must_match(toy_proof):
    stmt, _, proof = toy_proof
    assert not verify(stmt, NONCE, proof, DEFAULT_PARAMS)
    stmt_m, wit_m = make_case(MICRO_PARAMS.air, [3], 0, 1)
    micro = prove(stmt_m, wit_m, MICRO_PARAMS, seed=1)
    assert verify(stmt_m, NONCE, micro, MICRO_PARAMS)
    assert not verify(stmt_m, NONCE, micro)  # not a published preset


def test_prover_propagates_witness_errors():
    stmt, wit = make_case(TOY_AIR, [9], 0, 10)
    with pytest.raises(PredicateUnsatisfied):
        prove(stmt, wit, TOY_PARAMS, seed=0)


def test_params_validation():
    with pytest.raises(ValueError):
        ProofParams(blowup=4)
    with pytest.raises(ValueError):
        ProofParams(air=AirConfig(trace_length=1000))
    assert DEFAULT_PARAMS.lde_size == 2048 * 8 and DEFAULT_PARAMS.composition_degree_bound < DEFAULT_PARAMS.lde_size


def test_encoding_roundtrip_and_header(toy_proof):
    _, _, proof = toy_proof
    data = encode_proof(proof)
    assert data[:4] == MAGIC and int.from_bytes(data[4:6], "big") == 1
    assert data[HEADER_LEN:HEADER_LEN + 32] == proof.trace_root
    assert decode_proof(data) == proof
    bad = bytearray(data)
    bad[5] = 2
    with pytest.raises(DecodeError) as exc:
        decode_proof(bytes(bad))
    assert exc.value.reason == "UnsupportedVersion"
    with pytest.raises(DecodeError) as exc:
        decode_proof(b"ZKDX" + data[4:])
    assert exc.value.reason == "BadMagic"
    with pytest.raises(DecodeError):
        decode_proof(data + b"\x00")


def test_every_truncation_raises_decode_error():
    stmt, wit = make_case(MICRO_PARAMS.air, [3], 0, 1)
    data = encode_proof(prove(stmt, wit, MICRO_PARAMS, seed=4))
    for n in range(len(data)):
        with pytest.raises(DecodeError):
            decode_proof(data[:n])


def test_sampled_truncations_of_toy_proof(toy_proof):
    data = encode_proof(toy_proof[2])
    for n in list(range(0, HEADER_LEN + 80)) + list(range(HEADER_LEN + 80, len(data), 211)) + [len(data) - 1]:
        with pytest.raises(DecodeError):
            decode_proof(data[:n])


def test_noncanonical_felt_rejected_at_decode(toy_proof):
    data = bytearray(encode_proof(toy_proof[2]))
    first_value = HEADER_LEN + 32
    data[first_value:first_value + 8] = (P + 1).to_bytes(8, "big")
    with pytest.raises(DecodeError):
        decode_proof(bytes(data))


def test_verify_never_raises_on_garbage(toy_proof):
    stmt, _, proof = toy_proof
    broken = dataclasses.replace(proof, trace_openings=proof.trace_openings[:1])
    assert verify(stmt, NONCE, broken) is False
    broken = dataclasses.replace(proof, trace_root=b"")
    assert verify(stmt, NONCE, broken) is False


def test_default_params_proof_is_larger_than_toy(toy_proof):
    stmt, wit = make_case(DEFAULT_AIR, [750], 0, 700, slot=40000)
    proof = prove(stmt, wit, DEFAULT_PARAMS, seed=5)
    assert verify(stmt, NONCE, proof)
    assert proof.size_bytes > toy_proof[2].size_bytes


def longest_shared_run_exceeds(a: bytes, b: bytes, limit: int) -> bool:
    """True iff some substring of length limit + 1 occurs in both."""
    k = limit + 1
    windows = {b[i:i + k] for i in range(len(b) - k + 1)}
    return any(a[i:i + k] in windows for i in range(len(a) - k + 1))


def test_fresh_proofs_share_nothing_beyond_the_header():
    stmt, wit = make_case(TOY_AIR, [12], 0, 10, slot=1)
    other_nonce = bytes(range(16, 32))
    a = encode_proof(prove(stmt, wit, TOY_PARAMS, seed=10))
    b = encode_proof(prove(dataclasses.replace(stmt, nonce=other_nonce), wit, TOY_PARAMS, seed=11))
    assert a[:HEADER_LEN] == b[:HEADER_LEN]
    assert not longest_shared_run_exceeds(a, b, HEADER_LEN)
