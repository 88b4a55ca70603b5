"""Issuer-side Merkle accumulator over credential commitments.

The accumulator is a fixed-depth h2 tree. Each mutation (add or revoke) bumps
the epoch by one and records the new root; only ``(epoch, root)`` pairs are
meant to leave the issuer. Slots are handed out by a monotone counter and
never reused, so a revoked holder's old path can never come back to life for
someone else's credential.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .errors import CapacityExhausted, DecodeError, SlotNotOccupied, UnknownEpoch
from .field import P, felt_from_bytes, felt_to_bytes
from .hashing import MIMC, Mimc
from .merkle import AlgPath, SparseAlgTree, alg_verify

MAGIC = b"ZKDA"
VERSION = 1


@dataclass(frozen=True)
class MembershipWitness:
    slot: int
    path: AlgPath
    epoch: int

    def verify(self, root: int, commitment: int, mimc: Mimc = MIMC) -> bool:
        return self.path.index == self.slot and alg_verify(root, commitment, self.path, mimc)


@dataclass
class Accumulator:
    depth: int = 16
    mimc: Mimc = MIMC
    occupied: dict[int, int] = field(default_factory=dict)
    epoch: int = 0
    next_slot: int = 0
    history: list[int] = field(default_factory=list)  # history[e] = root at epoch e
    _tree: SparseAlgTree = field(init=False, repr=False)

    def __post_init__(self):
        self._tree = SparseAlgTree(self.depth, self.mimc)
        for slot, c in self.occupied.items():
            self._tree.set(slot, c)
        if not self.history:
            self.history = [self._tree.root]

    @property
    def capacity(self) -> int:
        return 1 << self.depth

    @property
    def root(self) -> int:
        return self._tree.root

    def _bump(self) -> int:
        self.epoch += 1
        self.history.append(self._tree.root)
        return self.epoch

    def add(self, commitment: int) -> tuple[int, int]:
        """Insert at the lowest never-used slot; returns (slot, new epoch)."""
        if not 0 < commitment < P:
            raise ValueError("commitment must be a nonzero field element")
        if self.next_slot >= self.capacity:
            raise CapacityExhausted(f"all {self.capacity} slots have been used")
        slot = self.next_slot
        self.next_slot += 1
        self.occupied[slot] = commitment
        self._tree.set(slot, commitment)
        return slot, self._bump()

    def revoke(self, slot: int) -> int:
        if slot not in self.occupied:
            raise SlotNotOccupied(f"slot {slot} holds no credential")
        del self.occupied[slot]
        self._tree.set(slot, 0)
        return self._bump()

    def witness(self, slot: int) -> MembershipWitness:
        if slot not in self.occupied:
            raise SlotNotOccupied(f"slot {slot} holds no credential")
        return MembershipWitness(slot, self._tree.path(slot), self.epoch)

    def refresh(self, stale: MembershipWitness) -> MembershipWitness:
        return self.witness(stale.slot)

    def root_at(self, epoch: int) -> int:
        if not 0 <= epoch <= self.epoch:
            raise UnknownEpoch(f"epoch {epoch} not in [0, {self.epoch}]")
        return self.history[epoch]

    def leaves(self) -> list[int]:
        return [self.occupied.get(i, 0) for i in range(self.capacity)]

    # -- persistence -------------------------------------------------------------

    def to_bytes(self) -> bytes:
        out = [MAGIC, VERSION.to_bytes(2, "big"), bytes([self.depth]),
               self.mimc.rounds.to_bytes(2, "big"), self.epoch.to_bytes(8, "big"),
               self.next_slot.to_bytes(4, "big"), len(self.occupied).to_bytes(4, "big")]
        for slot in sorted(self.occupied):
            out += [slot.to_bytes(4, "big"), felt_to_bytes(self.occupied[slot])]
        out.extend(felt_to_bytes(r) for r in self.history)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Accumulator":
        if data[:4] != MAGIC:
            raise DecodeError("bad accumulator magic", 0, "BadMagic")
        if len(data) < 25:
            raise DecodeError("truncated accumulator header", len(data))
        if int.from_bytes(data[4:6], "big") != VERSION:
            raise DecodeError("unsupported accumulator version", 4, "UnsupportedVersion")
        depth, rounds = data[6], int.from_bytes(data[7:9], "big")
        epoch = int.from_bytes(data[9:17], "big")
        next_slot = int.from_bytes(data[17:21], "big")
        count = int.from_bytes(data[21:25], "big")
        expected = 25 + 12 * count + 8 * (epoch + 1)
        if len(data) != expected:
            raise DecodeError(f"accumulator file is {len(data)} bytes, expected {expected}", len(data))
        occupied, pos = {}, 25
        for _ in range(count):
            occupied[int.from_bytes(data[pos:pos + 4], "big")] = felt_from_bytes(data, pos + 4)
            pos += 12
        history = [felt_from_bytes(data, pos + 8 * e) for e in range(epoch + 1)]
        acc = cls(depth, Mimc(rounds), occupied, epoch, next_slot, history)
        if acc.root != history[-1]:
            raise DecodeError("accumulator history disagrees with its leaves", pos)
        return acc

    def save(self, path: Union[str, os.PathLike]) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "Accumulator":
        return cls.from_bytes(Path(path).read_bytes())
