"""Fiat-Shamir transcript as a SHA-256 hash chain.

Transcripts are immutable values: ``absorb`` and the challenge functions
return the successor rather than mutating. Reducing 8 digest bytes mod p
carries a bias below 2**-32, which is accepted.
"""

from __future__ import annotations

from dataclasses import dataclass

from .field import P
from .hashing import byte_hash

DOMAIN_TAG = b"zkdid/fs/v1"


@dataclass(frozen=True)
class Transcript:
    state: bytes
    counter: int = 0

    @classmethod
    def init(cls, protocol_label: bytes = b"") -> "Transcript":
        return cls(byte_hash(DOMAIN_TAG + protocol_label), 0)

    def absorb(self, label: bytes, data: bytes) -> "Transcript":
        framed = len(label).to_bytes(4, "big") + label + len(data).to_bytes(8, "big") + data
        return Transcript(byte_hash(self.state + framed), self.counter)

    def _squeeze(self, label: bytes) -> tuple[bytes, "Transcript"]:
        digest = byte_hash(self.state + self.counter.to_bytes(8, "big") + label)
        return digest, Transcript(self.state, self.counter + 1)

    def challenge_felt(self, label: bytes) -> tuple[int, "Transcript"]:
        digest, nxt = self._squeeze(label)
        return int.from_bytes(digest[:8], "big") % P, nxt

    def challenge_indices(self, label: bytes, k: int, range_size: int) -> tuple[list[int], "Transcript"]:
        if range_size <= 0:
            raise ValueError("range_size must be positive")
        t = self
        out = []
        for _ in range(k):
            digest, t = t._squeeze(label)
            out.append(int.from_bytes(digest[:8], "big") % range_size)
        return out, t


def init(protocol_label: bytes = b"") -> Transcript:
    return Transcript.init(protocol_label)
