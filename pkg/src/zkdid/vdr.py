"""Simulated verifiable data registry: a deterministic single-writer ledger.

Transactions are validated and applied at ``submit`` time and collected into
the pending block; ``tick`` seals that block and advances the logical height.
Every piece of state is a fold over the block list, so replaying the log from
genesis reproduces the live ledger exactly.

Guardian recovery follows None -> Collecting -> TimeLocked -> None. Any
configured guardian may open a recovery for a new key root (the lost key
cannot sign), the controller's current key may cancel at any time before
finalization, and anyone may finalize once the timelock has elapsed.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

from .errors import (
    BadSignature,
    DecodeError,
    DuplicateApproval,
    EpochGap,
    Expired,
    InvalidTransition,
    NoPendingRecovery,
    NotGuardian,
    ReplayedSignature,
    TimelockNotElapsed,
    Unauthorized,
    UnknownDid,
    UnknownEpoch,
)
from .field import felt_from_bytes, felt_to_bytes
from .identity import Did, DidDocument, HashSig, KeyTree, canonical_decode, canonical_encode, verify_sig

MAGIC = b"ZKDL"
VERSION = 1
DEFAULT_TIMELOCK_BLOCKS = 100
DEFAULT_VALIDITY = 16
TX_DOMAIN = b"zkdid/tx/v1"


# -- payloads ----------------------------------------------------------------------

def _read_did(data: bytes, pos: int) -> Did:
    if pos + 32 > len(data):
        raise DecodeError("truncated DID", pos)
    return Did(data[pos:pos + 32])


@dataclass(frozen=True)
class RegisterDid:
    document: DidDocument
    KIND = 1

    @property
    def subject(self) -> Did:
        return self.document.did

    def encode(self) -> bytes:
        return canonical_encode(self.document)

    @classmethod
    def decode(cls, data: bytes) -> "RegisterDid":
        doc = canonical_decode(data)
        if not isinstance(doc, DidDocument):
            raise DecodeError("RegisterDid payload is not a DID document")
        return cls(doc)


@dataclass(frozen=True)
class UpdateDocument:
    did: Did
    new_key_root: bytes
    KIND = 2

    @property
    def subject(self) -> Did:
        return self.did

    def encode(self) -> bytes:
        return self.did.id + self.new_key_root

    @classmethod
    def decode(cls, data: bytes) -> "UpdateDocument":
        _expect(data, 64)
        return cls(Did(data[:32]), data[32:64])


@dataclass(frozen=True)
class PublishRoot:
    issuer: Did
    epoch: int
    root: int
    KIND = 3

    @property
    def subject(self) -> Did:
        return self.issuer

    def encode(self) -> bytes:
        return self.issuer.id + self.epoch.to_bytes(8, "big") + felt_to_bytes(self.root)

    @classmethod
    def decode(cls, data: bytes) -> "PublishRoot":
        _expect(data, 48)
        return cls(Did(data[:32]), int.from_bytes(data[32:40], "big"), felt_from_bytes(data, 40))


@dataclass(frozen=True)
class ConfigureGuardians:
    did: Did
    guardians: tuple[Did, ...]
    threshold: int
    KIND = 4

    @property
    def subject(self) -> Did:
        return self.did

    def encode(self) -> bytes:
        return (self.did.id + bytes([self.threshold]) + len(self.guardians).to_bytes(2, "big")
                + b"".join(g.id for g in self.guardians))

    @classmethod
    def decode(cls, data: bytes) -> "ConfigureGuardians":
        if len(data) < 35:
            raise DecodeError("truncated ConfigureGuardians", len(data))
        n = int.from_bytes(data[33:35], "big")
        _expect(data, 35 + 32 * n)
        return cls(Did(data[:32]), tuple(Did(data[35 + 32 * i:67 + 32 * i]) for i in range(n)), data[32])


@dataclass(frozen=True)
class InitiateRecovery:
    did: Did
    new_key_root: bytes
    KIND = 5

    @property
    def subject(self) -> Did:
        return self.did

    def encode(self) -> bytes:
        return self.did.id + self.new_key_root

    @classmethod
    def decode(cls, data: bytes) -> "InitiateRecovery":
        _expect(data, 64)
        return cls(Did(data[:32]), data[32:64])


@dataclass(frozen=True)
class ApproveRecovery:
    did: Did
    new_key_root: bytes  # pins the proposal being approved
    KIND = 6

    @property
    def subject(self) -> Did:
        return self.did

    def encode(self) -> bytes:
        return self.did.id + self.new_key_root

    @classmethod
    def decode(cls, data: bytes) -> "ApproveRecovery":
        _expect(data, 64)
        return cls(Did(data[:32]), data[32:64])


@dataclass(frozen=True)
class CancelRecovery:
    did: Did
    KIND = 7

    @property
    def subject(self) -> Did:
        return self.did

    def encode(self) -> bytes:
        return self.did.id

    @classmethod
    def decode(cls, data: bytes) -> "CancelRecovery":
        _expect(data, 32)
        return cls(Did(data))


@dataclass(frozen=True)
class FinalizeRecovery:
    did: Did
    KIND = 8

    @property
    def subject(self) -> Did:
        return self.did

    def encode(self) -> bytes:
        return self.did.id

    @classmethod
    def decode(cls, data: bytes) -> "FinalizeRecovery":
        _expect(data, 32)
        return cls(Did(data))


Payload = Union[RegisterDid, UpdateDocument, PublishRoot, ConfigureGuardians,
                InitiateRecovery, ApproveRecovery, CancelRecovery, FinalizeRecovery]
PAYLOADS = {cls.KIND: cls for cls in (RegisterDid, UpdateDocument, PublishRoot, ConfigureGuardians,
                                      InitiateRecovery, ApproveRecovery, CancelRecovery, FinalizeRecovery)}
COST_UNITS = {1: 60, 2: 30, 3: 25, 4: 40, 5: 35, 6: 20, 7: 15, 8: 30}


def _expect(data: bytes, n: int) -> None:
    if len(data) != n:
        raise DecodeError(f"payload is {len(data)} bytes, expected {n}", min(len(data), n))


# -- transactions ---------------------------------------------------------------------

@dataclass(frozen=True)
class Tx:
    payload: Payload
    signer: Did
    valid_until: int
    signature: HashSig

    @property
    def kind(self) -> str:
        return type(self.payload).__name__

    @staticmethod
    def message(payload: Payload, signer: Did, valid_until: int) -> bytes:
        body = payload.encode()
        return (TX_DOMAIN + bytes([payload.KIND]) + len(body).to_bytes(4, "big") + body
                + signer.id + valid_until.to_bytes(8, "big"))

    def signing_bytes(self) -> bytes:
        return self.message(self.payload, self.signer, self.valid_until)

    def encode(self) -> bytes:
        return self.signing_bytes()[len(TX_DOMAIN):] + self.signature.encode()

    @classmethod
    def decode(cls, data: bytes) -> "Tx":
        if len(data) < 5:
            raise DecodeError("truncated transaction", len(data))
        kind = data[0]
        if kind not in PAYLOADS:
            raise DecodeError(f"unknown transaction kind {kind}", 0)
        n = int.from_bytes(data[1:5], "big")
        if len(data) < 5 + n + 40:
            raise DecodeError("truncated transaction", len(data))
        payload = PAYLOADS[kind].decode(data[5:5 + n])
        signer = _read_did(data, 5 + n)
        valid_until = int.from_bytes(data[37 + n:45 + n], "big")
        sig, end = HashSig.decode(data, 45 + n)
        if end != len(data):
            raise DecodeError("trailing transaction bytes", end)
        return cls(payload, signer, valid_until, sig)

    @property
    def tx_id(self) -> str:
        return hashlib.sha256(self.encode()).hexdigest()[:16]


def build_tx(payload: Payload, signer: Did, keys: KeyTree, valid_until: int) -> Tx:
    """Sign ``payload`` with the next one-time key of ``keys``."""
    sig = keys.sign(Tx.message(payload, signer, valid_until))
    return Tx(payload, signer, valid_until, sig)


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    kind: str
    height: int
    cost_units: int


@dataclass(frozen=True)
class Block:
    height: int
    txs: tuple[Tx, ...]

    def encode(self) -> bytes:
        out = [self.height.to_bytes(8, "big"), len(self.txs).to_bytes(4, "big")]
        for tx in self.txs:
            raw = tx.encode()
            out += [len(raw).to_bytes(4, "big"), raw]
        return b"".join(out)

    @classmethod
    def decode(cls, data: bytes) -> "Block":
        if len(data) < 12:
            raise DecodeError("truncated block", len(data))
        height, count, pos = int.from_bytes(data[:8], "big"), int.from_bytes(data[8:12], "big"), 12
        txs = []
        for _ in range(count):
            if pos + 4 > len(data):
                raise DecodeError("truncated block", pos)
            n = int.from_bytes(data[pos:pos + 4], "big")
            if pos + 4 + n > len(data):
                raise DecodeError("truncated transaction in block", pos)
            txs.append(Tx.decode(data[pos + 4:pos + 4 + n]))
            pos += 4 + n
        if pos != len(data):
            raise DecodeError("trailing block bytes", pos)
        return cls(height, tuple(txs))


# -- recovery state -----------------------------------------------------------------

class RecoveryStatus(str, enum.Enum):
    NONE = "None"
    COLLECTING = "Collecting"
    TIMELOCKED = "TimeLocked"


@dataclass(frozen=True)
class RecoveryState:
    status: RecoveryStatus = RecoveryStatus.NONE
    proposed_key_root: bytes = b""
    approvals: frozenset[Did] = frozenset()
    started_at: int = 0
    locked_at: int = 0

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "proposed_key_root": self.proposed_key_root.hex(),
            "approvals": sorted(str(d) for d in self.approvals),
            "started_at": self.started_at,
            "locked_at": self.locked_at,
        }


# -- ledger -----------------------------------------------------------------------------

@dataclass
class Ledger:
    timelock_blocks: int = DEFAULT_TIMELOCK_BLOCKS
    height: int = 0
    blocks: list[Block] = field(default_factory=list)
    pending: list[Tx] = field(default_factory=list)
    did_registry: dict[Did, DidDocument] = field(default_factory=dict)
    roots: dict[Did, list[tuple[int, int, int]]] = field(default_factory=dict)  # (epoch, root, height)
    recovery: dict[Did, RecoveryState] = field(default_factory=dict)
    spent: dict[Did, set[tuple[bytes, int]]] = field(default_factory=dict)
    cost_units: int = 0

    # -- writes

    def submit(self, tx: Tx) -> Receipt:
        """Validate and apply ``tx`` to the pending block; raises LedgerError subclasses."""
        effect, key_root = self._validate(tx)
        self._apply(tx, effect, key_root)
        self.pending.append(tx)
        cost = COST_UNITS[tx.payload.KIND]
        self.cost_units += cost
        return Receipt(tx.tx_id, tx.kind, self.height, cost)

    def tick(self) -> int:
        self.blocks.append(Block(self.height, tuple(self.pending)))
        self.pending = []
        self.height += 1
        return self.height

    def tick_to(self, height: int) -> int:
        while self.height < height:
            self.tick()
        return self.height

    def _document(self, did: Did) -> DidDocument:
        try:
            return self.did_registry[did]
        except KeyError:
            raise UnknownDid(f"{did} is not registered") from None

    def _check_signature(self, tx: Tx, key_root: bytes) -> bytes:
        if (key_root, tx.signature.index) in self.spent.get(tx.signer, set()):
            raise ReplayedSignature(f"{tx.signer} already used key index {tx.signature.index}")
        if not verify_sig(key_root, tx.signing_bytes(), tx.signature):
            raise BadSignature(f"{tx.kind} signature does not verify for {tx.signer}")
        return key_root

    def _validate(self, tx: Tx):
        """Return (state change, key root that signed) for ``tx``, or raise."""
        p = tx.payload
        if self.height > tx.valid_until:
            raise Expired(f"transaction valid until height {tx.valid_until}, ledger at {self.height}")

        if isinstance(p, RegisterDid):
            doc = p.document
            if tx.signer != doc.did:
                raise Unauthorized("RegisterDid must be signed by the DID being registered")
            if doc.did in self.did_registry:
                raise InvalidTransition(f"{doc.did} is already registered")
            if Did.from_key_root(doc.active_key_root) != doc.did:
                raise InvalidTransition("DID id does not match the hash of its key root")
            if doc.guardians:
                raise InvalidTransition("guardians are set with ConfigureGuardians after registration")
            return replace(doc, updated_at=self.height), self._check_signature(tx, doc.active_key_root)

        doc = self._document(p.subject)
        controller = doc.active_key_root
        state = self.recovery.get(doc.did, RecoveryState())

        if isinstance(p, (UpdateDocument, ConfigureGuardians, PublishRoot, CancelRecovery)):
            if tx.signer != doc.did:
                raise Unauthorized(f"{tx.kind} must be signed by the controller of {doc.did}")
            signed = self._check_signature(tx, controller)
        elif isinstance(p, FinalizeRecovery):
            signed = self._check_signature(tx, self._document(tx.signer).active_key_root)
        else:
            if tx.signer not in doc.guardians:
                raise NotGuardian(f"{tx.signer} is not a guardian of {doc.did}")
            signed = self._check_signature(tx, self._document(tx.signer).active_key_root)

        if isinstance(p, UpdateDocument):
            return replace(doc, active_key_root=p.new_key_root, updated_at=self.height), signed

        if isinstance(p, PublishRoot):
            history = self.roots.get(p.issuer, [])
            expected = history[-1][0] + 1 if history else 0
            if p.epoch != expected:
                raise EpochGap(f"expected epoch {expected}, got {p.epoch}")
            return (p.epoch, p.root, self.height), signed

        if isinstance(p, ConfigureGuardians):
            if state.status is not RecoveryStatus.NONE:
                raise InvalidTransition("cannot change guardians during a pending recovery")
            for g in p.guardians:
                self._document(g)
                if g == doc.did:
                    raise InvalidTransition("a DID cannot guard itself")
            try:
                new_doc = replace(doc, guardians=tuple(p.guardians), threshold=p.threshold, updated_at=self.height)
            except ValueError as exc:
                raise InvalidTransition(str(exc)) from None
            return new_doc, signed

        if isinstance(p, CancelRecovery):
            if state.status is RecoveryStatus.NONE:
                raise NoPendingRecovery(f"no recovery pending for {doc.did}")
            return RecoveryState(), signed

        if isinstance(p, FinalizeRecovery):
            if state.status is RecoveryStatus.NONE:
                raise NoPendingRecovery(f"no recovery pending for {doc.did}")
            if state.status is not RecoveryStatus.TIMELOCKED:
                raise InvalidTransition("recovery has not reached its approval threshold")
            if self.height < state.locked_at + self.timelock_blocks:
                raise TimelockNotElapsed(
                    f"timelock ends at height {state.locked_at + self.timelock_blocks}, ledger at {self.height}")
            return replace(doc, active_key_root=state.proposed_key_root, updated_at=self.height), signed

        if isinstance(p, InitiateRecovery):
            if state.status is not RecoveryStatus.NONE:
                raise InvalidTransition(f"a recovery is already {state.status.value}")
            return self._approved(RecoveryState(RecoveryStatus.COLLECTING, p.new_key_root, frozenset(),
                                                self.height), tx.signer, doc), signed
        if isinstance(p, ApproveRecovery):
            if state.status is RecoveryStatus.NONE:
                raise NoPendingRecovery(f"no recovery pending for {doc.did}")
            if p.new_key_root != state.proposed_key_root:
                raise InvalidTransition("approval is for a different proposed key root")
            if tx.signer in state.approvals:
                raise DuplicateApproval(f"{tx.signer} already approved")
            if state.status is RecoveryStatus.TIMELOCKED:
                raise InvalidTransition("recovery is already timelocked")
            return self._approved(state, tx.signer, doc), signed
        raise InvalidTransition(f"unsupported transaction {tx.kind}")

    def _approved(self, state: RecoveryState, guardian: Did, doc: DidDocument) -> RecoveryState:
        approvals = state.approvals | {guardian}
        if len(approvals) >= doc.threshold:
            return replace(state, approvals=approvals, status=RecoveryStatus.TIMELOCKED, locked_at=self.height)
        return replace(state, approvals=approvals)

    def _apply(self, tx: Tx, effect, key_root: bytes) -> None:
        p = tx.payload
        self.spent.setdefault(tx.signer, set()).add((key_root, tx.signature.index))
        if isinstance(p, PublishRoot):
            self.roots.setdefault(p.issuer, []).append(effect)
        elif isinstance(effect, DidDocument):
            self.did_registry[effect.did] = effect
            if isinstance(p, FinalizeRecovery):
                self.recovery[p.did] = RecoveryState()
        elif isinstance(effect, RecoveryState):
            self.recovery[p.subject] = effect

    # -- reads

    def resolve_did(self, did: Did) -> DidDocument:
        return self._document(did)

    def current_root(self, issuer: Did) -> tuple[int, int]:
        history = self.roots.get(issuer)
        if not history:
            raise UnknownDid(f"{issuer} has published no accumulator root")
        epoch, root, _ = history[-1]
        return epoch, root

    def root_at_epoch(self, issuer: Did, epoch: int) -> int:
        history = self.roots.get(issuer)
        if not history:
            raise UnknownDid(f"{issuer} has published no accumulator root")
        if not 0 <= epoch < len(history):
            raise UnknownEpoch(f"{issuer} has no epoch {epoch}")
        return history[epoch][1]

    def recovery_state(self, did: Did) -> RecoveryState:
        self._document(did)
        return self.recovery.get(did, RecoveryState())

    # -- replay and persistence

    @classmethod
    def replay(cls, blocks: list[Block], pending: list[Tx] = (), timelock_blocks: int = DEFAULT_TIMELOCK_BLOCKS
               ) -> "Ledger":
        ledger = cls(timelock_blocks)
        for block in blocks:
            if block.height != ledger.height:
                raise DecodeError(f"block height {block.height} out of sequence at {ledger.height}")
            for tx in block.txs:
                ledger.submit(tx)
            ledger.tick()
        for tx in pending:
            ledger.submit(tx)
        return ledger

    def state_digest(self) -> str:
        """Hash of the folded state, for replay-equality checks."""
        return hashlib.sha256(json.dumps(self.dump(), sort_keys=True).encode()).hexdigest()

    def to_bytes(self) -> bytes:
        lines = [MAGIC + b" %d %d" % (VERSION, self.timelock_blocks)]
        lines += [b"B " + b.encode().hex().encode() for b in self.blocks]
        lines += [b"P " + tx.encode().hex().encode() for tx in self.pending]
        return b"\n".join(lines) + b"\n"

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ledger":
        lines = data.split(b"\n")
        header = lines[0].split(b" ")
        if header[0] != MAGIC:
            raise DecodeError("bad ledger magic", 0, "BadMagic")
        if len(header) != 3 or header[1] != str(VERSION).encode():
            raise DecodeError("unsupported ledger version", 5, "UnsupportedVersion")
        blocks, pending = [], []
        offset = len(lines[0]) + 1
        for line in lines[1:]:
            if line:
                try:
                    raw = bytes.fromhex(line[2:].decode())
                except ValueError:
                    raise DecodeError("ledger line is not hex", offset) from None
                if line.startswith(b"B "):
                    blocks.append(Block.decode(raw))
                elif line.startswith(b"P "):
                    pending.append(Tx.decode(raw))
                else:
                    raise DecodeError("unknown ledger record", offset)
            offset += len(line) + 1
        return cls.replay(blocks, pending, int(header[2]))

    def save(self, path: Union[str, os.PathLike]) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "Ledger":
        return cls.from_bytes(Path(path).read_bytes())

    def dump(self) -> dict:
        return {
            "height": self.height,
            "timelock_blocks": self.timelock_blocks,
            "blocks": len(self.blocks),
            "pending": [tx.kind for tx in self.pending],
            "cost_units": self.cost_units,
            "dids": {str(d): doc.to_json() for d, doc in sorted(self.did_registry.items())},
            "roots": {str(d): [[e, hex(r), h] for e, r, h in hist] for d, hist in sorted(self.roots.items())},
            "recovery": {str(d): s.to_json() for d, s in sorted(self.recovery.items())
                         if s.status is not RecoveryStatus.NONE},
        }
