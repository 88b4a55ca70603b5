"""SHA-256 byte hashing and the MiMC-x^7 algebraic hash over Goldilocks.

The MiMC parameterization (64 rounds, exponent 7) is a teaching-grade choice:
it is deliberately cheap to arithmetize and has NOT been security-audited.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .errors import AttributeOutOfRange, EmptyAttributes
from .field import P

DEFAULT_ROUNDS = 64
EXPONENT = 7
CONSTANT_LABEL = b"zkdid/mimc/gl/"


def byte_hash(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@lru_cache(maxsize=None)
def round_constants(rounds: int = DEFAULT_ROUNDS) -> tuple[int, ...]:
    # c_0 = 0; c_i = first 8 bytes of sha256(label || decimal(i)) mod p
    consts = [0]
    for i in range(1, rounds):
        digest = byte_hash(CONSTANT_LABEL + str(i).encode("ascii"))
        consts.append(int.from_bytes(digest[:8], "big") % P)
    return tuple(consts)


@dataclass(frozen=True)
class Mimc:
    """MiMC permutation family; ``rounds`` is fixed per instance."""

    rounds: int = DEFAULT_ROUNDS

    @property
    def constants(self) -> tuple[int, ...]:
        return round_constants(self.rounds)

    def perm(self, x: int, k: int) -> int:
        for c in self.constants:
            x = pow((x + k + c) % P, EXPONENT, P)
        return x

    def h2(self, left: int, right: int) -> int:
        # Davies-Meyer style feed-forward binds both inputs
        return (self.perm(left, right) + left + right) % P

    def commit_attributes(self, attrs: Sequence[int], salt: int) -> int:
        if not attrs:
            raise EmptyAttributes("credential has no attributes")
        acc = salt % P
        for a in attrs:
            if not 0 <= a < 2**32:
                raise AttributeOutOfRange(f"attribute value {a} is not a u32")
            acc = self.h2(acc, a)
        return acc


MIMC = Mimc()


def mimc_perm(x: int, k: int) -> int:
    return MIMC.perm(x, k)


def h2(left: int, right: int) -> int:
    return MIMC.h2(left, right)


def commit_attributes(attrs: Sequence[int], salt: int) -> int:
    return MIMC.commit_attributes(attrs, salt)
