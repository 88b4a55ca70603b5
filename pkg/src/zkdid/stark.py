"""STARK prover and verifier for the credential predicate AIR.

Transcript schedule (labels are normative):

    init("zkdid/stark/v1")
    absorb("statement", canonical statement) ; absorb("nonce", nonce)
    absorb("trace_root", ...) ; squeeze ("alpha", "beta") per constraint
    absorb("composition_root", ...) ; squeeze("fri_beta")
    FRI: absorb("fri_layer", root) / squeeze("fri_beta") per further layer,
         absorb("fri_final", coefficients), squeeze("fri_queries") x num_queries

The first FRI layer is the composition polynomial itself, so its root doubles
as the composition commitment. The verifier checks the composition value at
each query point by recomputing it from the opened trace rows (x and g*x)
rather than by DEEP out-of-domain sampling; that is simpler and leaves a known
soundness gap against production STARKs. Zero knowledge is approximated by
salted leaves and random padding rows only; there are no masking polynomials.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from . import field as F
from .air import (
    COLUMNS,
    DEFAULT_AIR,
    MAX_DEGREE,
    TOY_AIR,
    AirConfig,
    ConstraintSet,
    PredicateStatement,
    PredicateWitness,
    build_trace,
    evaluate_transitions,
    predicate_constraints,
    public_at,
    public_trace,
)
from .errors import DecodeError, InternalDegreeOverflow
from .field import EvalDomain, FArray, GENERATOR, P
from .fri import FriLayerOpening, FriProof, fri_commit, fri_query, fri_verify, num_folds, query_indices
from .merkle import DIGEST_LEN, BytePath, byte_build, byte_open, byte_verify
from .transcript import Transcript

log = logging.getLogger(__name__)

MAGIC = b"ZKDP"
VERSION = 1
FIELD_ID = 1  # Goldilocks
HASH_ID = 1  # SHA-256 commitments, MiMC-x^7 in-circuit
PROTOCOL_LABEL = b"zkdid/stark/v1"

Seed = Union[int, bytes, str, None]


@dataclass(frozen=True)
class ProofParams:
    blowup: int = 8
    num_queries: int = 30
    air: AirConfig = DEFAULT_AIR
    version: int = VERSION

    def __post_init__(self):
        n = self.air.trace_length
        if n & (n - 1) or self.blowup & (self.blowup - 1):
            raise ValueError("trace length and blowup must be powers of two")
        if self.blowup < 8:
            raise ValueError("blowup must be at least 8")
        if n % self.air.rounds:
            raise ValueError("trace length must be a multiple of the MiMC round count")
        # composition degree must leave FRI a nontrivial rate
        if self.composition_degree_bound * 2 > self.lde_size:
            raise ValueError("blowup too small for the constraint degree")

    @property
    def trace_length(self) -> int:
        return self.air.trace_length

    @property
    def lde_size(self) -> int:
        return self.air.trace_length * self.blowup

    @property
    def composition_degree_bound(self) -> int:
        return (MAX_DEGREE - 1) * self.air.trace_length

    @property
    def trace_domain(self) -> EvalDomain:
        return EvalDomain(self.trace_length.bit_length() - 1)

    @property
    def lde_domain(self) -> EvalDomain:
        return EvalDomain(self.lde_size.bit_length() - 1, GENERATOR)


DEFAULT_PARAMS = ProofParams()
TOY_PARAMS = ProofParams(air=TOY_AIR)
KNOWN_PARAMS = (DEFAULT_PARAMS, TOY_PARAMS)


@dataclass(frozen=True)
class TraceOpening:
    values: tuple[int, ...]
    path: BytePath


@dataclass(frozen=True)
class StarkProof:
    params: ProofParams
    trace_root: bytes
    trace_openings: tuple[tuple[TraceOpening, TraceOpening], ...]  # rows at x and g*x
    fri: FriProof

    @property
    def composition_root(self) -> bytes:
        return self.fri.layer_roots[0]

    @property
    def size_bytes(self) -> int:
        return len(encode_proof(self))


def make_rng(seed: Seed) -> random.Random:
    if seed is None:
        return random.SystemRandom()
    return random.Random(seed)


def _row_leaves(matrix: np.ndarray) -> list[bytes]:
    width = 8 * matrix.shape[0]
    raw = np.ascontiguousarray(matrix.T).astype(">u8").tobytes()
    return [raw[i:i + width] for i in range(0, len(raw), width)]


def _lde(columns: np.ndarray, params: ProofParams) -> np.ndarray:
    coeffs = F.intt(columns, params.trace_domain)
    padded = np.zeros(coeffs.shape[:-1] + (params.lde_size,), dtype=np.uint64)
    padded[..., :params.trace_length] = coeffs
    return F.ntt(padded, params.lde_domain)


def _start_transcript(stmt: PredicateStatement, nonce: bytes, trace_root: bytes) -> Transcript:
    t = Transcript.init(PROTOCOL_LABEL)
    t = t.absorb(b"statement", stmt.encode())
    t = t.absorb(b"nonce", nonce)
    return t.absorb(b"trace_root", trace_root)


def _randomizers(t: Transcript, count: int) -> tuple[list[tuple[int, int]], Transcript]:
    out = []
    for _ in range(count):
        a, t = t.challenge_felt(b"alpha")
        b, t = t.challenge_felt(b"beta")
        out.append((a, b))
    return out, t


def _adjustments(cs: ConstraintSet, params: ProofParams) -> list[int]:
    """x-power lifting each quotient to degree bound - 1."""
    n = params.trace_length
    target = params.composition_degree_bound - 1
    adj = [target - (tc.degree - 1) * (n - 1) for tc in cs.transitions]
    adj += [target - (n - 2)] * len(cs.boundaries)
    return adj


@lru_cache(maxsize=8)
def _lde_constants(params: ProofParams) -> dict[str, np.ndarray]:
    m, n, blow = params.lde_size, params.trace_length, params.blowup
    dom = params.lde_domain
    xs = dom.elements()
    g_last = F.root_of_unity(n.bit_length() - 1)
    g_last = pow(g_last, n - 1, P)
    # x^N takes only `blowup` distinct values on the coset
    xn = F.vpow(xs[:blow], n)
    inv_xn = F.batch_inv(F.vsub(xn, np.ones_like(xn)))
    inv_zt = F.vmul(np.tile(inv_xn, m // blow), F.vsub(xs, np.full_like(xs, g_last)))
    inv_xm1 = F.batch_inv(F.vsub(xs, np.ones_like(xs)))
    return {"xs": xs, "inv_zt": inv_zt, "inv_xm1": inv_xm1}


def _composition_lde(lde: np.ndarray, cs: ConstraintSet, params: ProofParams,
                     rands: list[tuple[int, int]]) -> np.ndarray:
    m, blow = params.lde_size, params.blowup
    consts = _lde_constants(params)
    pub_trace = public_trace(cs.layout)
    names = list(pub_trace)
    pub_lde = _lde(np.stack([pub_trace[k] for k in names]), params)
    cur = {c: lde[i] for i, c in enumerate(COLUMNS)}
    nxt = {c: np.roll(lde[i], -blow) for i, c in enumerate(COLUMNS)}
    pub = {k: pub_lde[i] for i, k in enumerate(names)}
    quotients = [q * FArray(consts["inv_zt"]) for q in evaluate_transitions(cs, cur, nxt, pub)]
    omega_n = F.root_of_unity(params.trace_length.bit_length() - 1)
    for bc in cs.boundaries:
        # 1/(x - g^r) = g^-r / (x g^-r - 1), and x g^-r is the point r*blowup indices back
        g_r_inv = F.inv(pow(omega_n, bc.row, P))
        shifted = F.vscale(np.roll(consts["inv_xm1"], bc.row * blow), g_r_inv)
        col = FArray(cur[bc.column])
        quotients.append((col - bc.value) * FArray(shifted))
    adjs = _adjustments(cs, params)
    omega_m = params.lde_domain.generator
    cache: dict[int, FArray] = {}
    total = FArray(np.zeros(m, dtype=np.uint64))
    for q, (alpha, beta), adj in zip(quotients, rands, adjs):
        if adj not in cache:
            cache[adj] = FArray(F.powers(pow(omega_m, adj, P), m, pow(GENERATOR, adj, P)))
        total = total + q * (cache[adj] * beta + alpha)
    return total.v


def prove(
    stmt: PredicateStatement,
    wit: PredicateWitness,
    params: ProofParams = DEFAULT_PARAMS,
    seed: Seed = None,
) -> StarkProof:
    """Generate a proof bound to ``stmt`` (including its nonce).

    The same (stmt, wit, seed) always yields the same proof bytes; without a
    seed the system RNG supplies padding and leaf salts.
    """
    rng = make_rng(seed)
    trace = build_trace(stmt, wit, params.air, rng)
    cs = predicate_constraints(stmt, params.air)
    lde = _lde(trace.matrix(), params)
    trace_tree = byte_build(_row_leaves(lde), rng)
    t = _start_transcript(stmt, stmt.nonce, trace_tree.root)
    rands, t = _randomizers(t, len(cs))

    cp = _composition_lde(lde, cs, params, rands)
    coeffs = F.intt(cp, params.lde_domain)
    if np.any(coeffs[params.composition_degree_bound:]):
        raise InternalDegreeOverflow(
            f"composition polynomial has degree {F.degree(coeffs)} >= {params.composition_degree_bound}")

    commitment, t = fri_commit(cp, params.lde_domain, t, params.composition_degree_bound, rng,
                               first_label=b"composition_root")
    indices, t = query_indices(t, params.num_queries, params.lde_size)
    fri_proof = fri_query(commitment, indices)

    openings = []
    m, blow = params.lde_size, params.blowup
    for j in indices:
        pair = []
        for idx in (j, (j + blow) % m):
            pair.append(TraceOpening(tuple(int(v) for v in lde[:, idx]), byte_open(trace_tree, idx)))
        openings.append(tuple(pair))
    return StarkProof(params, trace_tree.root, tuple(openings), fri_proof)


def _composition_at(proof: StarkProof, cs: ConstraintSet, indices: list[int],
                    rands: list[tuple[int, int]]) -> list[int]:
    params = proof.params
    n = params.trace_length
    dom = params.lde_domain
    xs = F.as_array([dom.element(j) for j in indices])
    cur = {c: F.as_array([op[0].values[i] for op in proof.trace_openings]) for i, c in enumerate(COLUMNS)}
    nxt = {c: F.as_array([op[1].values[i] for op in proof.trace_openings]) for i, c in enumerate(COLUMNS)}
    pub = public_at(cs.layout, xs)
    g = F.root_of_unity(n.bit_length() - 1)
    x_fa = FArray(xs)
    zt = (x_fa ** n - 1)
    inv_zt = FArray(F.batch_inv(zt.v)) * (x_fa - pow(g, n - 1, P))
    quotients = [q * inv_zt for q in evaluate_transitions(cs, cur, nxt, pub)]
    for bc in cs.boundaries:
        den = x_fa - pow(g, bc.row, P)
        quotients.append((FArray(cur[bc.column]) - bc.value) * FArray(F.batch_inv(den.v)))
    total = FArray(np.zeros(len(xs), dtype=np.uint64))
    lifts: dict[int, FArray] = {}
    for q, (alpha, beta), adj in zip(quotients, rands, _adjustments(cs, params)):
        if adj not in lifts:
            lifts[adj] = x_fa ** adj
        total = total + q * (lifts[adj] * beta + alpha)
    return total.tolist()


def verify(
    stmt: PredicateStatement,
    nonce: bytes,
    proof: StarkProof,
    params: Optional[ProofParams] = None,
) -> bool:
    """Accept iff ``proof`` establishes ``stmt`` under the verifier's ``nonce``.

    Proof parameters must equal ``params`` when given, otherwise one of the
    published presets. Never raises on bad proofs; bytes go through
    :func:`decode_proof` first, which is where DecodeError comes from.
    """
    try:
        return _verify(stmt, nonce, proof, params)
    except Exception as exc:
        log.debug("verification raised %r", exc)
        return False


def _verify(stmt, nonce, proof: StarkProof, params) -> bool:
    allowed = proof.params == params if params is not None else proof.params in KNOWN_PARAMS
    if not allowed:
        return False
    params = proof.params
    cs = predicate_constraints(stmt, params.air)
    m, blow = params.lde_size, params.blowup
    depth = m.bit_length() - 1
    if len(proof.trace_openings) != params.num_queries or len(proof.fri.queries) != params.num_queries:
        return False
    if not proof.fri.layer_roots:
        return False

    t = _start_transcript(stmt, nonce, proof.trace_root)
    rands, t = _randomizers(t, len(cs))

    claimed = []
    for row_x, row_gx in proof.trace_openings:
        for op in (row_x, row_gx):
            if len(op.values) != len(COLUMNS) or len(op.path.siblings) != depth:
                return False
            if any(not 0 <= v < P for v in op.values):
                return False
            leaf = b"".join(F.felt_to_bytes(v) for v in op.values)
            if not byte_verify(proof.trace_root, leaf, op.path):
                return False
        if row_gx.path.index != (row_x.path.index + blow) % m:
            return False
        claimed.append(row_x.path.index)
    expected_cp = _composition_at(proof, cs, claimed, rands)

    def layer0(q: int, j: int, value: int) -> bool:
        return claimed[q] == j and expected_cp[q] == value

    return fri_verify(proof.fri, params.lde_domain, params.num_queries, t, layer0,
                      params.composition_degree_bound, first_label=b"composition_root")


# -- wire format -----------------------------------------------------------------

def _encode_params(p: ProofParams) -> bytes:
    a = p.air
    return b"".join([
        p.version.to_bytes(2, "big"),
        bytes([FIELD_ID, HASH_ID]),
        p.blowup.to_bytes(2, "big"),
        p.num_queries.to_bytes(2, "big"),
        a.trace_length.to_bytes(4, "big"),
        a.depth.to_bytes(1, "big"),
        a.rounds.to_bytes(2, "big"),
        a.range_bits.to_bytes(1, "big"),
    ])


HEADER_LEN = len(MAGIC) + 16  # version, ids, blowup, queries, AIR shape


def encode_proof(proof: StarkProof) -> bytes:
    out = [MAGIC, _encode_params(proof.params), proof.trace_root]
    for pair in proof.trace_openings:
        for op in pair:
            out.extend(F.felt_to_bytes(v) for v in op.values)
            out.append(op.path.encode())
    fri = proof.fri
    out.append(bytes([len(fri.layer_roots)]))
    out.extend(fri.layer_roots)
    out.append(bytes([len(fri.final_coeffs)]))
    out.extend(F.felt_to_bytes(c) for c in fri.final_coeffs)
    for query in fri.queries:
        for op in query:
            out += [F.felt_to_bytes(op.value), F.felt_to_bytes(op.sibling_value), op.path.encode()]
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(f"truncated {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def uint(self, n: int, what: str) -> int:
        return int.from_bytes(self.take(n, what), "big")

    def felt(self, what: str) -> int:
        start = self.pos
        value = self.uint(8, what)
        if value >= P:
            raise DecodeError(f"non-canonical {what}", start)
        return value

    def path(self, depth: int) -> BytePath:
        path, self.pos = BytePath.decode(self.data, depth, self.pos)
        return path


def decode_proof(data: bytes) -> StarkProof:
    r = _Reader(bytes(data))
    if r.take(4, "magic") != MAGIC:
        raise DecodeError("bad magic", 0, "BadMagic")
    version = r.uint(2, "version")
    if version != VERSION:
        raise DecodeError(f"version {version}", 4, "UnsupportedVersion")
    if r.take(2, "identifiers") != bytes([FIELD_ID, HASH_ID]):
        raise DecodeError("unknown field/hash identifiers", 6)
    blowup = r.uint(2, "blowup")
    num_queries = r.uint(2, "query count")
    air = AirConfig(trace_length=r.uint(4, "trace length"), depth=r.uint(1, "depth"),
                    rounds=r.uint(2, "rounds"), range_bits=r.uint(1, "range bits"))
    try:
        params = ProofParams(blowup, num_queries, air)
        if not 2 <= params.lde_size <= 1 << 24 or air.rounds < 1:
            raise ValueError("size out of range")
    except ValueError as exc:
        raise DecodeError(f"invalid parameters ({exc})", 8) from None
    m = params.lde_size
    depth = m.bit_length() - 1
    trace_root = r.take(DIGEST_LEN, "trace root")
    openings = []
    for _ in range(num_queries):
        pair = []
        for _ in range(2):
            values = tuple(r.felt("trace value") for _ in COLUMNS)
            pair.append(TraceOpening(values, r.path(depth)))
        openings.append(tuple(pair))
    folds = num_folds(params.composition_degree_bound)
    start = r.pos
    if r.uint(1, "layer count") != folds:
        raise DecodeError("FRI layer count disagrees with parameters", start)
    roots = tuple(r.take(DIGEST_LEN, "layer root") for _ in range(folds))
    start = r.pos
    n_final = r.uint(1, "final coefficient count")
    if not 1 <= n_final <= 2:
        raise DecodeError("bad final coefficient count", start)
    final = tuple(r.felt("final coefficient") for _ in range(n_final))
    queries = []
    for _ in range(num_queries):
        layers = []
        for layer in range(folds):
            value, sib = r.felt("FRI value"), r.felt("FRI value")
            layers.append(FriLayerOpening(value, sib, r.path(depth - layer - 1)))
        queries.append(tuple(layers))
    if r.pos != len(r.data):
        raise DecodeError("trailing bytes", r.pos)
    return StarkProof(params, trace_root, tuple(openings), FriProof(roots, final, tuple(queries)))
