"""Merkle trees.

``ByteMerkle*`` commits arbitrary byte strings with salted, domain-separated
SHA-256 nodes (proof commitments, key trees). ``Alg*`` builds MiMC ``h2``
trees over field elements, the shape the credential accumulator needs so that
membership can be re-checked inside the proof's arithmetization.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

from .errors import DecodeError, IndexOutOfRange, SizeMismatch
from .field import felt_from_bytes, felt_to_bytes
from .hashing import MIMC, Mimc

SALT_LEN = 16
DIGEST_LEN = 32
LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"

_sha256 = hashlib.sha256


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length() if n > 1 else 1


@dataclass
class ByteMerkleTree:
    leaves: list[bytes]
    salts: list[bytes]
    nodes: list[bytes]  # heap layout: nodes[1] is the root, leaves at [n, 2n)

    @property
    def root(self) -> bytes:
        return self.nodes[1]

    @property
    def size(self) -> int:
        return len(self.leaves)

    @property
    def depth(self) -> int:
        return self.size.bit_length() - 1


@dataclass(frozen=True)
class BytePath:
    index: int
    salt: bytes
    siblings: tuple[bytes, ...]

    def encode(self) -> bytes:
        return self.index.to_bytes(4, "big") + self.salt + b"".join(self.siblings)

    @classmethod
    def decode(cls, data: bytes, depth: int, offset: int = 0) -> tuple["BytePath", int]:
        end = offset + 4 + SALT_LEN + DIGEST_LEN * depth
        if len(data) < end:
            raise DecodeError("truncated Merkle path", offset)
        index = int.from_bytes(data[offset:offset + 4], "big")
        salt = data[offset + 4:offset + 4 + SALT_LEN]
        base = offset + 4 + SALT_LEN
        sibs = tuple(data[base + DIGEST_LEN * j: base + DIGEST_LEN * (j + 1)] for j in range(depth))
        return cls(index, salt, sibs), end


def byte_leaf_hash(salt: bytes, leaf: bytes) -> bytes:
    return _sha256(LEAF_PREFIX + salt + leaf).digest()


def byte_node_hash(left: bytes, right: bytes) -> bytes:
    return _sha256(NODE_PREFIX + left + right).digest()


def byte_build(
    leaves: Sequence[bytes],
    rng: Optional[random.Random] = None,
    salts: Optional[Sequence[bytes]] = None,
) -> ByteMerkleTree:
    """Build a salted tree; leaf count is padded to a power of two with b""."""
    if not leaves:
        raise SizeMismatch("cannot build a Merkle tree over zero leaves")
    n = _next_pow2(len(leaves))
    padded = list(leaves) + [b""] * (n - len(leaves))
    if salts is None:
        rng = rng or random.SystemRandom()
        blob = rng.randbytes(SALT_LEN * n)
        salts = [blob[i * SALT_LEN:(i + 1) * SALT_LEN] for i in range(n)]
    else:
        salts = list(salts)
        if len(salts) != n or any(len(s) != SALT_LEN for s in salts):
            raise SizeMismatch(f"need {n} salts of {SALT_LEN} bytes")
    nodes: list[bytes] = [b""] * n + [_sha256(LEAF_PREFIX + s + leaf).digest() for s, leaf in zip(salts, padded)]
    for i in range(n - 1, 0, -1):
        nodes[i] = _sha256(NODE_PREFIX + nodes[2 * i] + nodes[2 * i + 1]).digest()
    return ByteMerkleTree(padded, salts, nodes)


def byte_open(tree: ByteMerkleTree, i: int) -> BytePath:
    if not 0 <= i < tree.size:
        raise IndexOutOfRange(f"leaf {i} not in tree of size {tree.size}")
    pos = tree.size + i
    sibs = []
    while pos > 1:
        sibs.append(tree.nodes[pos ^ 1])
        pos >>= 1
    return BytePath(i, tree.salts[i], tuple(sibs))


def byte_verify(root: bytes, leaf: bytes, path: BytePath) -> bool:
    if len(path.salt) != SALT_LEN or path.index >> len(path.siblings):
        return False
    node = _sha256(LEAF_PREFIX + path.salt + leaf).digest()
    idx = path.index
    for sib in path.siblings:
        if idx & 1:
            node = _sha256(NODE_PREFIX + sib + node).digest()
        else:
            node = _sha256(NODE_PREFIX + node + sib).digest()
        idx >>= 1
    return node == root


# -- algebraic (h2) trees --------------------------------------------------------

@dataclass(frozen=True)
class AlgPath:
    index: int
    siblings: tuple[int, ...]

    @property
    def depth(self) -> int:
        return len(self.siblings)

    @property
    def directions(self) -> tuple[int, ...]:
        """Bit j set means the running node is the RIGHT child at level j."""
        return tuple((self.index >> j) & 1 for j in range(self.depth))

    def encode(self) -> bytes:
        return self.index.to_bytes(4, "big") + b"".join(felt_to_bytes(s) for s in self.siblings)

    @classmethod
    def decode(cls, data: bytes, depth: int, offset: int = 0) -> tuple["AlgPath", int]:
        end = offset + 4 + 8 * depth
        if len(data) < end:
            raise DecodeError("truncated accumulator path", offset)
        index = int.from_bytes(data[offset:offset + 4], "big")
        sibs = tuple(felt_from_bytes(data, offset + 4 + 8 * j) for j in range(depth))
        return cls(index, sibs), end


@lru_cache(maxsize=None)
def zero_roots(depth: int, mimc: Mimc = MIMC) -> tuple[int, ...]:
    """Z_0 = 0, Z_{j+1} = h2(Z_j, Z_j): roots of all-empty subtrees."""
    zs = [0]
    for _ in range(depth):
        zs.append(mimc.h2(zs[-1], zs[-1]))
    return tuple(zs)


@dataclass
class SparseAlgTree:
    """Fixed-depth h2 tree storing only nodes that differ from the empty tree.

    Updates touch one root-ward path, O(depth) hashes.
    """

    depth: int
    mimc: Mimc = MIMC
    levels: list[dict[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.levels:
            self.levels = [dict() for _ in range(self.depth + 1)]

    @property
    def capacity(self) -> int:
        return 1 << self.depth

    def node(self, level: int, pos: int) -> int:
        return self.levels[level].get(pos, zero_roots(self.depth, self.mimc)[level])

    @property
    def root(self) -> int:
        return self.node(self.depth, 0)

    def leaf(self, slot: int) -> int:
        return self.node(0, slot)

    def set(self, slot: int, value: int) -> None:
        if not 0 <= slot < self.capacity:
            raise IndexOutOfRange(f"slot {slot} outside tree of depth {self.depth}")
        zeros = zero_roots(self.depth, self.mimc)
        pos, val = slot, value
        for level in range(self.depth + 1):
            if val == zeros[level]:
                self.levels[level].pop(pos, None)
            else:
                self.levels[level][pos] = val
            if level == self.depth:
                break
            left, right = (self.node(level, pos - 1), val) if pos & 1 else (val, self.node(level, pos + 1))
            val = self.mimc.h2(left, right)
            pos >>= 1

    def path(self, slot: int) -> AlgPath:
        if not 0 <= slot < self.capacity:
            raise IndexOutOfRange(f"slot {slot} outside tree of depth {self.depth}")
        sibs = []
        pos = slot
        for level in range(self.depth):
            sibs.append(self.node(level, pos ^ 1))
            pos >>= 1
        return AlgPath(slot, tuple(sibs))

    def copy(self) -> "SparseAlgTree":
        return SparseAlgTree(self.depth, self.mimc, [dict(lv) for lv in self.levels])

    @classmethod
    def from_leaves(cls, leaves: Sequence[int], mimc: Mimc = MIMC) -> "SparseAlgTree":
        n = len(leaves)
        if n == 0 or n & (n - 1):
            raise SizeMismatch(f"leaf count {n} is not a power of two")
        depth = n.bit_length() - 1
        tree = cls(depth, mimc)
        zeros = zero_roots(depth, mimc)
        current = {i: v for i, v in enumerate(leaves) if v != 0}
        tree.levels[0] = dict(current)
        for level in range(depth):
            parents = {}
            for pos in {p >> 1 for p in current}:
                left = current.get(2 * pos, zeros[level])
                right = current.get(2 * pos + 1, zeros[level])
                val = mimc.h2(left, right)
                if val != zeros[level + 1]:
                    parents[pos] = val
            tree.levels[level + 1] = parents
            current = parents
        return tree


def alg_root(leaves: Sequence[int], depth: Optional[int] = None, mimc: Mimc = MIMC) -> int:
    if depth is not None and len(leaves) != 1 << depth:
        raise SizeMismatch(f"expected {1 << depth} leaves, got {len(leaves)}")
    return SparseAlgTree.from_leaves(leaves, mimc).root


def alg_open(leaves: Sequence[int], i: int, mimc: Mimc = MIMC) -> AlgPath:
    return SparseAlgTree.from_leaves(leaves, mimc).path(i)


def alg_verify(root: int, leaf: int, path: AlgPath, mimc: Mimc = MIMC) -> bool:
    if path.index >> path.depth:
        return False
    node = leaf
    for bit, sib in zip(path.directions, path.siblings):
        node = mimc.h2(sib, node) if bit else mimc.h2(node, sib)
    return node == root
