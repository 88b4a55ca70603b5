"""FRI low-degree test (fold factor 2).

The prover commits each layer with a salted ByteMerkle tree whose leaf j
holds the pair f(x_j) || f(-x_j) as two 8-byte big-endian Felts, so one
authentication path opens both values a fold needs. It then folds with a
transcript challenge beta

    f'(x^2) = (f(x) + f(-x)) / 2 + beta * (f(x) - f(-x)) / (2x)

and stops once the degree bound is at most 2, sending the remaining
polynomial's coefficients in the clear. For a layer of size M, -x of index i
sits at index (i + M/2) mod M and both live in leaf i mod M/2. Query indices may repeat; there is no
proof-of-work grinding.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import field as F
from .errors import DomainTooSmall, SizeMismatch
from .field import EvalDomain, P
from .merkle import BytePath, ByteMerkleTree, byte_build, byte_open, byte_verify
from .transcript import Transcript

log = logging.getLogger(__name__)

INV2 = F.inv(2)


@dataclass(frozen=True)
class FriLayerOpening:
    value: int
    sibling_value: int  # f(-x)
    path: BytePath  # to leaf (index mod half the layer size)


@dataclass(frozen=True)
class FriProof:
    layer_roots: tuple[bytes, ...]
    final_coeffs: tuple[int, ...]
    queries: tuple[tuple[FriLayerOpening, ...], ...]


@dataclass
class FriCommitment:
    """Prover-side state between the commit and query phases."""

    layers: list[np.ndarray]
    domains: list[EvalDomain]
    trees: list[ByteMerkleTree]
    final_coeffs: tuple[int, ...]

    @property
    def roots(self) -> tuple[bytes, ...]:
        return tuple(t.root for t in self.trees)


def num_folds(degree_bound: int) -> int:
    """Folds until the bound is <= 2 (at least one fold)."""
    folds, bound = 0, degree_bound
    while bound > 2:
        bound //= 2
        folds += 1
    return max(folds, 1)


def final_bound(degree_bound: int) -> int:
    return max(degree_bound >> num_folds(degree_bound), 1)


def _check_sizes(size: int, degree_bound: int) -> None:
    if size < 4 or size & (size - 1):
        raise DomainTooSmall(f"FRI needs a power-of-two domain of at least 4 points, got {size}")
    if degree_bound < 1 or degree_bound & (degree_bound - 1) or degree_bound > size // 2:
        raise SizeMismatch(f"degree bound {degree_bound} invalid for domain size {size}")


def fold_scalar(fx: int, fnx: int, x: int, beta: int) -> int:
    return _fold_inv(fx, fnx, F.inv(x), beta)


def _fold_inv(fx: int, fnx: int, inv_x: int, beta: int) -> int:
    even = (fx + fnx) * INV2 % P
    odd = (fx - fnx) * INV2 % P * inv_x % P
    return (even + beta * odd) % P


def _inv_element(dom: EvalDomain, inv_offset: int, i: int) -> int:
    """1/(offset * g^i) with a short exponent: offset^-1 * g^(size - i)."""
    return inv_offset * pow(dom.generator, (dom.size - i) % dom.size, P) % P


def fold(values: np.ndarray, domain: EvalDomain, beta: int) -> np.ndarray:
    half = domain.size // 2
    f_pos, f_neg = values[:half], values[half:]
    inv_2x = F.powers(F.inv(domain.generator), half, F.inv(2 * domain.offset % P))
    even = F.vscale(F.vadd(f_pos, f_neg), INV2)
    odd = F.vmul(F.vsub(f_pos, f_neg), inv_2x)
    return F.vadd(even, F.vscale(odd, beta))


def _leaves(values: np.ndarray) -> list[bytes]:
    half = len(values) // 2
    raw = np.stack([values[:half], values[half:]], axis=1).astype(">u8").tobytes()
    return [raw[i:i + 16] for i in range(0, len(raw), 16)]


def pair_leaf(value: int, sibling: int, i: int, size: int) -> bytes:
    """Leaf bytes for an opening at index i of a layer of ``size`` points."""
    lo, hi = (value, sibling) if i < size // 2 else (sibling, value)
    return F.felt_to_bytes(lo) + F.felt_to_bytes(hi)


def _trim(coeffs: Sequence[int]) -> tuple[int, ...]:
    out = [int(c) for c in coeffs]
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


def encode_coeffs(coeffs: Sequence[int]) -> bytes:
    return b"".join(F.felt_to_bytes(c) for c in coeffs)


def fri_commit(
    evals,
    domain: EvalDomain,
    t: Transcript,
    degree_bound: Optional[int] = None,
    rng: Optional[random.Random] = None,
    first_label: bytes = b"fri_layer",
) -> tuple[FriCommitment, Transcript]:
    """Commit to every folding layer. ``first_label`` names the absorb of the
    layer-0 root, letting a caller bind it under its own label."""
    values = F.as_array(evals)
    if len(values) != domain.size:
        raise SizeMismatch(f"{len(values)} evaluations for a domain of {domain.size}")
    degree_bound = degree_bound or max(domain.size // 8, 1)
    _check_sizes(domain.size, degree_bound)
    rng = rng or random.SystemRandom()
    layers, domains, trees = [], [], []
    for layer in range(num_folds(degree_bound)):
        tree = byte_build(_leaves(values), rng)
        t = t.absorb(first_label if layer == 0 else b"fri_layer", tree.root)
        beta, t = t.challenge_felt(b"fri_beta")
        layers.append(values)
        domains.append(domain)
        trees.append(tree)
        values = fold(values, domain, beta)
        domain = domain.squared()
    coeffs = F.intt(values, domain)
    bound = final_bound(degree_bound)
    if np.any(coeffs[bound:]):
        log.debug("final FRI layer exceeds degree bound %d; truncating", bound)
    final = _trim(coeffs[:bound])
    t = t.absorb(b"fri_final", encode_coeffs(final))
    return FriCommitment(layers, domains, trees, final), t


def query_indices(t: Transcript, num_queries: int, size: int) -> tuple[list[int], Transcript]:
    return t.challenge_indices(b"fri_queries", num_queries, size)


def fri_query(commitment: FriCommitment, indices: Sequence[int]) -> FriProof:
    queries = []
    for j in indices:
        openings = []
        for values, dom, tree in zip(commitment.layers, commitment.domains, commitment.trees):
            i = j % dom.size
            s = (i + dom.size // 2) % dom.size
            openings.append(FriLayerOpening(int(values[i]), int(values[s]), byte_open(tree, i % (dom.size // 2))))
        queries.append(tuple(openings))
    return FriProof(commitment.roots, commitment.final_coeffs, tuple(queries))


def fri_prove(
    evals,
    domain: EvalDomain,
    t: Transcript,
    num_queries: int,
    degree_bound: Optional[int] = None,
    rng: Optional[random.Random] = None,
) -> tuple[FriProof, list[int], Transcript]:
    """Commit, derive query indices from the transcript, open."""
    commitment, t = fri_commit(evals, domain, t, degree_bound, rng)
    indices, t = query_indices(t, num_queries, domain.size)
    return fri_query(commitment, indices), indices, t


Layer0Check = Callable[[int, int, int], bool]  # (query number, index, f(x)) -> ok


def fri_verify(
    proof: FriProof,
    domain: EvalDomain,
    num_queries: int,
    t: Transcript,
    layer0_value_fn: Optional[Layer0Check] = None,
    degree_bound: Optional[int] = None,
    first_label: bytes = b"fri_layer",
) -> bool:
    """Replay the transcript and check every query; never raises."""
    try:
        return _verify(proof, domain, num_queries, t, layer0_value_fn, degree_bound, first_label)
    except Exception as exc:  # malformed proofs must read as rejection
        log.debug("FRI verification raised %r", exc)
        return False


def _verify(proof, domain, num_queries, t, layer0_value_fn, degree_bound, first_label) -> bool:
    degree_bound = degree_bound or max(domain.size // 8, 1)
    _check_sizes(domain.size, degree_bound)
    folds = num_folds(degree_bound)
    if len(proof.layer_roots) != folds:
        return False
    if not 1 <= len(proof.final_coeffs) <= final_bound(degree_bound):
        return False
    if any(not 0 <= c < P for c in proof.final_coeffs):
        return False
    betas = []
    for layer, root in enumerate(proof.layer_roots):
        t = t.absorb(first_label if layer == 0 else b"fri_layer", root)
        beta, t = t.challenge_felt(b"fri_beta")
        betas.append(beta)
    t = t.absorb(b"fri_final", encode_coeffs(proof.final_coeffs))
    indices, t = query_indices(t, num_queries, domain.size)
    if len(proof.queries) != num_queries:
        return False

    domains = [domain]
    for _ in range(folds):
        domains.append(domains[-1].squared())
    inv_offsets = [F.inv(d.offset) for d in domains]
    for q, (j, openings) in enumerate(zip(indices, proof.queries)):
        if len(openings) != folds:
            return False
        expected = None
        for layer, (op, dom, root, beta, inv_off) in enumerate(
                zip(openings, domains, proof.layer_roots, betas, inv_offsets)):
            i = j % dom.size
            if op.path.index != i % (dom.size // 2) or len(op.path.siblings) != dom.log_size - 1:
                return False
            if not byte_verify(root, pair_leaf(op.value, op.sibling_value, i, dom.size), op.path):
                return False
            if layer == 0:
                if layer0_value_fn is not None and not layer0_value_fn(q, j, op.value):
                    return False
            elif op.value != expected:
                return False
            expected = _fold_inv(op.value, op.sibling_value, _inv_element(dom, inv_off, i), beta)
        last = domains[-1]
        if F.poly_eval(proof.final_coeffs, last.element(j % last.size)) != expected:
            return False
    return True
