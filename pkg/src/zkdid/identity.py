"""DIDs, DID documents, credentials and hash-based signatures.

Signatures are Lamport one-time signatures over SHA-256 digests, with 2**height
one-time public keys gathered under a salted Merkle tree whose root acts as
the long-lived public key. The signer is stateful: ``next_index`` only moves
forward, and reusing an index is the one thing that breaks the scheme.
``verify_sig`` cannot notice reuse by itself; the ledger tracks spent indices.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence, Union

from .air import STATEMENT_TAG, PredicateStatement
from .errors import AttributeOutOfRange, DecodeError, KeysExhausted
from .field import P, felt_from_bytes, felt_to_bytes
from .hashing import MIMC, Mimc
from .merkle import DIGEST_LEN, SALT_LEN, ByteMerkleTree, BytePath, byte_build, byte_open, byte_verify

DID_METHOD = "zkd"
DID_PREFIX = f"did:{DID_METHOD}:"
DEFAULT_HEIGHT = 10
DIGEST_BITS = 256

CREDENTIAL_TAG = 0x01
DOCUMENT_TAG = 0x03
CREDENTIAL_FORMAT = "zkdid-cred/1"

_sha256 = hashlib.sha256


# -- DIDs ----------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Did:
    id: bytes

    def __post_init__(self):
        if len(self.id) != 32:
            raise ValueError("DID id must be 32 bytes")

    @classmethod
    def from_key_root(cls, key_root: bytes) -> "Did":
        return cls(_sha256(key_root).digest())

    @classmethod
    def parse(cls, text: str) -> "Did":
        if not text.startswith(DID_PREFIX):
            raise DecodeError(f"not a {DID_PREFIX} identifier: {text!r}")
        body = text[len(DID_PREFIX):]
        if len(body) != 64 or body != body.lower():
            raise DecodeError(f"DID id must be 64 lowercase hex digits: {text!r}")
        try:
            return cls(bytes.fromhex(body))
        except ValueError:
            raise DecodeError(f"DID id is not hex: {text!r}") from None

    def render(self) -> str:
        return DID_PREFIX + self.id.hex()

    __str__ = render


# -- Lamport OTS under a Merkle key tree ---------------------------------------

def _secret(seed: bytes, i: int, j: int, b: int) -> bytes:
    return _sha256(seed + i.to_bytes(4, "big") + j.to_bytes(2, "big") + bytes([b])).digest()


def _ots_public(seed: bytes, i: int) -> list[bytes]:
    """The 512 public hashes of one-time key i, ordered (j, b)."""
    prefix = seed + i.to_bytes(4, "big")
    out = []
    for j in range(DIGEST_BITS):
        pj = prefix + j.to_bytes(2, "big")
        out.append(_sha256(_sha256(pj + b"\x00").digest()).digest())
        out.append(_sha256(_sha256(pj + b"\x01").digest()).digest())
    return out


def _ots_leaf(public: Sequence[bytes]) -> bytes:
    return _sha256(b"".join(public)).digest()


def _key_salt(seed: bytes, i: int) -> bytes:
    return _sha256(b"zkdid/keytree/salt" + seed + i.to_bytes(4, "big")).digest()[:SALT_LEN]


def _digest_bits(msg: bytes) -> list[int]:
    d = int.from_bytes(_sha256(msg).digest(), "big")
    return [(d >> (DIGEST_BITS - 1 - j)) & 1 for j in range(DIGEST_BITS)]


@dataclass(frozen=True)
class HashSig:
    index: int
    reveals: tuple[tuple[bytes, bytes], ...]  # per digest bit: (preimage for bit, hash for other bit)
    auth_path: BytePath

    def encode(self) -> bytes:
        body = b"".join(pre + other for pre, other in self.reveals)
        return bytes([len(self.auth_path.siblings)]) + self.index.to_bytes(4, "big") + body + self.auth_path.encode()

    @classmethod
    def decode(cls, data: bytes, offset: int = 0) -> tuple["HashSig", int]:
        if len(data) < offset + 5 + 64 * DIGEST_BITS:
            raise DecodeError("truncated signature", offset)
        height = data[offset]
        index = int.from_bytes(data[offset + 1:offset + 5], "big")
        pos = offset + 5
        reveals = tuple((data[pos + 64 * j:pos + 64 * j + 32], data[pos + 64 * j + 32:pos + 64 * j + 64])
                        for j in range(DIGEST_BITS))
        path, end = BytePath.decode(data, height, pos + 64 * DIGEST_BITS)
        return cls(index, reveals, path), end


@dataclass
class KeyTree:
    """Stateful many-time signer. Persist ``next_index`` after every sign."""

    seed: bytes
    height: int = DEFAULT_HEIGHT
    next_index: int = 0

    def __post_init__(self):
        if len(self.seed) != 32:
            raise ValueError("key seed must be 32 bytes")
        if not 0 <= self.height <= 20:
            raise ValueError("key tree height must be in [0, 20]")

    @cached_property
    def tree(self) -> ByteMerkleTree:
        n = 1 << self.height
        leaves = [_ots_leaf(_ots_public(self.seed, i)) for i in range(n)]
        return byte_build(leaves, salts=[_key_salt(self.seed, i) for i in range(n)])

    @property
    def root(self) -> bytes:
        return self.tree.root

    @property
    def capacity(self) -> int:
        return 1 << self.height

    @property
    def remaining(self) -> int:
        return self.capacity - self.next_index

    @property
    def did(self) -> Did:
        return Did.from_key_root(self.root)

    def sign(self, msg: bytes) -> HashSig:
        if self.next_index >= self.capacity:
            raise KeysExhausted(f"all {self.capacity} one-time keys used")
        i = self.next_index
        path = byte_open(self.tree, i)
        self.next_index += 1
        reveals = []
        for j, bit in enumerate(_digest_bits(msg)):
            pre = _secret(self.seed, i, j, bit)
            other = _sha256(_secret(self.seed, i, j, 1 - bit)).digest()
            reveals.append((pre, other))
        return HashSig(i, tuple(reveals), path)

    def to_json(self) -> dict:
        return {"seed": self.seed.hex(), "height": self.height, "next_index": self.next_index}

    @classmethod
    def from_json(cls, obj: dict) -> "KeyTree":
        return cls(bytes.fromhex(obj["seed"]), int(obj["height"]), int(obj["next_index"]))


def keygen(seed: bytes, height: int = DEFAULT_HEIGHT) -> KeyTree:
    kt = KeyTree(seed, height)
    _ = kt.tree
    return kt


def verify_sig(root: bytes, msg: bytes, sig: HashSig) -> bool:
    if len(sig.reveals) != DIGEST_BITS or sig.auth_path.index != sig.index:
        return False
    public = []
    for (pre, other), bit in zip(sig.reveals, _digest_bits(msg)):
        if len(pre) != 32 or len(other) != 32:
            return False
        mine = _sha256(pre).digest()
        public += [mine, other] if bit == 0 else [other, mine]
    return byte_verify(root, _ots_leaf(public), sig.auth_path)


# -- documents and credentials ---------------------------------------------------

def _str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return len(raw).to_bytes(4, "big") + raw


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data, self.pos = data, pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated encoding", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def uint(self, n: int) -> int:
        return int.from_bytes(self.take(n), "big")

    def str(self) -> str:
        start = self.pos
        try:
            return self.take(self.uint(4)).decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError("invalid UTF-8", start) from None

    def felt(self) -> int:
        value = felt_from_bytes(self.data, self.pos)
        self.pos += 8
        return value

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError("trailing bytes", self.pos)


@dataclass(frozen=True)
class DidDocument:
    did: Did
    active_key_root: bytes
    guardians: tuple[Did, ...] = ()
    threshold: int = 0
    updated_at: int = 0

    def __post_init__(self):
        if self.threshold > len(self.guardians):
            raise ValueError("threshold exceeds guardian count")
        if self.guardians and self.threshold < 1:
            raise ValueError("threshold must be at least 1 when guardians are set")
        if len(set(self.guardians)) != len(self.guardians):
            raise ValueError("duplicate guardian")

    def to_json(self) -> dict:
        return {
            "did": str(self.did),
            "active_key_root": self.active_key_root.hex(),
            "guardians": [str(g) for g in self.guardians],
            "threshold": self.threshold,
            "updated_at": self.updated_at,
        }


@dataclass(frozen=True)
class Credential:
    id: bytes
    issuer: Did
    subject: Did
    schema: str
    attributes: tuple[tuple[str, int], ...]
    salt: int
    slot: int
    issued_epoch: int
    signature: Optional[HashSig] = None

    def __post_init__(self):
        for name, value in self.attributes:
            if not 0 <= value < 2**32:
                raise AttributeOutOfRange(f"attribute {name!r} = {value} is not a u32")
        if not 0 <= self.salt < P:
            raise ValueError("salt must be a field element")

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(v for _, v in self.attributes)

    def attribute_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.attributes):
            if n == name:
                return i
        raise KeyError(name)

    def commitment(self, mimc: Mimc = MIMC) -> int:
        return mimc.commit_attributes(self.values, self.salt)

    def signing_bytes(self) -> bytes:
        return canonical_encode(replace(self, signature=None))

    def verify_signature(self, key_root: bytes) -> bool:
        return self.signature is not None and verify_sig(key_root, self.signing_bytes(), self.signature)

    def to_json(self) -> dict:
        return {
            "format": CREDENTIAL_FORMAT,
            "id": self.id.hex(),
            "issuer": str(self.issuer),
            "subject": str(self.subject),
            "schema": self.schema,
            "attributes": [[n, v] for n, v in self.attributes],
            "salt": self.salt,
            "slot": self.slot,
            "issued_epoch": self.issued_epoch,
            "signature": self.signature.encode().hex() if self.signature else None,
            "canonical": canonical_encode(self).hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Credential":
        """Parse and check that the JSON fields agree with the embedded encoding."""
        if obj.get("format") != CREDENTIAL_FORMAT:
            raise DecodeError(f"unsupported credential format {obj.get('format')!r}")
        try:
            sig = None
            if obj["signature"]:
                raw = bytes.fromhex(obj["signature"])
                sig, end = HashSig.decode(raw)
                if end != len(raw):
                    raise DecodeError("trailing signature bytes", end)
            cred = cls(bytes.fromhex(obj["id"]), Did.parse(obj["issuer"]), Did.parse(obj["subject"]),
                       obj["schema"], tuple((str(n), int(v)) for n, v in obj["attributes"]),
                       int(obj["salt"]), int(obj["slot"]), int(obj["issued_epoch"]), sig)
            canonical = bytes.fromhex(obj["canonical"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed credential JSON: {exc}") from None
        if canonical_encode(cred) != canonical:
            raise DecodeError("credential fields disagree with the canonical encoding")
        return cred

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "Credential":
        return cls.from_json(json.loads(text))


Encodable = Union[Credential, PredicateStatement, DidDocument]


def canonical_encode(obj: Encodable) -> bytes:
    """Deterministic, tag-prefixed binary encoding used for signing and hashing."""
    if isinstance(obj, PredicateStatement):
        return obj.encode()
    if isinstance(obj, DidDocument):
        return b"".join([
            bytes([DOCUMENT_TAG]), _str(str(obj.did)), obj.active_key_root,
            len(obj.guardians).to_bytes(4, "big"), *(_str(str(g)) for g in obj.guardians),
            bytes([obj.threshold]), obj.updated_at.to_bytes(8, "big"),
        ])
    if isinstance(obj, Credential):
        if len(obj.id) != 16:
            raise ValueError("credential id must be 16 bytes")
        sig = obj.signature.encode() if obj.signature else b""
        return b"".join([
            bytes([CREDENTIAL_TAG]), obj.id, _str(str(obj.issuer)), _str(str(obj.subject)), _str(obj.schema),
            len(obj.attributes).to_bytes(4, "big"),
            *(_str(n) + v.to_bytes(4, "big") for n, v in obj.attributes),
            felt_to_bytes(obj.salt), obj.slot.to_bytes(4, "big"), obj.issued_epoch.to_bytes(8, "big"),
            len(sig).to_bytes(4, "big"), sig,
        ])
    raise TypeError(f"cannot canonically encode {type(obj).__name__}")


def canonical_decode(data: bytes) -> Encodable:
    if not data:
        raise DecodeError("empty encoding", 0)
    tag = data[0]
    if tag == STATEMENT_TAG:
        return PredicateStatement.decode(data)
    r = _Reader(data, 1)
    if tag == DOCUMENT_TAG:
        did = Did.parse(r.str())
        root = r.take(DIGEST_LEN)
        guardians = tuple(Did.parse(r.str()) for _ in range(r.uint(4)))
        threshold, updated = r.uint(1), r.uint(8)
        r.done()
        try:
            return DidDocument(did, root, guardians, threshold, updated)
        except ValueError as exc:
            raise DecodeError(str(exc)) from None
    if tag == CREDENTIAL_TAG:
        cid = r.take(16)
        issuer, subject, schema = Did.parse(r.str()), Did.parse(r.str()), r.str()
        attrs = tuple((r.str(), r.uint(4)) for _ in range(r.uint(4)))
        salt, slot, epoch = r.felt(), r.uint(4), r.uint(8)
        sig_len = r.uint(4)
        sig = None
        if sig_len:
            start = r.pos
            sig, end = HashSig.decode(r.take(sig_len))
            if end != sig_len:
                raise DecodeError("signature length mismatch", start)
        r.done()
        return Credential(cid, issuer, subject, schema, attrs, salt, slot, epoch, sig)
    raise DecodeError(f"unknown type tag {tag:#04x}", 0)
