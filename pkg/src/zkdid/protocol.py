"""Issuer, holder and verifier roles wired end to end.

A presentation carries only the public statement (issuer, epoch, root,
attribute position, threshold, nonce, schema width) and the proof. The
verifier necessarily learns which issuer and epoch the credential belongs to;
with few credentials per epoch that narrows the anonymity set, and nothing
here hides it.

Verification order: statement/request consistency (including the nonce), then
root freshness against the ledger, then single-use of the nonce, then the
proof itself. Revocation therefore shows up to a verifier as ``StaleRoot``
for proofs made before it and as ``Revoked`` to a holder trying to present
afterwards.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .accumulator import Accumulator, MembershipWitness
from .air import PredicateStatement, PredicateWitness
from .errors import (
    AttributeOutOfRange,
    DecodeError,
    NoMatchingCredential,
    PredicateUnsatisfied,
    Revoked,
    SlotNotOccupied,
    StaleRootPolicy,
    UnknownSchema,
    ZkDidError,
)
from .field import P
from .identity import Credential, Did, DidDocument, KeyTree
from .stark import DEFAULT_PARAMS, ProofParams, StarkProof, decode_proof, encode_proof, prove, verify
from .vdr import DEFAULT_VALIDITY, Ledger, PublishRoot, RegisterDid, build_tx

log = logging.getLogger(__name__)

PRESENTATION_FORMAT = "zkdid-pres/1"
REQUEST_FORMAT = "zkdid-req/1"

SCHEMAS: dict[str, tuple[str, ...]] = {
    "credit/v1": ("creditScore",),
    "kyc/v1": ("birthYear", "countryCode", "kycLevel"),
}


def register_schema(name: str, attributes: tuple[str, ...]) -> None:
    if not attributes or len(set(attributes)) != len(attributes):
        raise ValueError("schema needs distinct attribute names")
    SCHEMAS[name] = tuple(attributes)


def schema_attributes(name: str) -> tuple[str, ...]:
    try:
        return SCHEMAS[name]
    except KeyError:
        raise UnknownSchema(f"unknown schema {name!r}") from None


def register_did(ledger: Ledger, keys: KeyTree) -> Did:
    doc = DidDocument(keys.did, keys.root)
    ledger.submit(build_tx(RegisterDid(doc), keys.did, keys, ledger.height + DEFAULT_VALIDITY))
    return keys.did


# -- issuer ---------------------------------------------------------------------------

@dataclass
class IssuerContext:
    keys: KeyTree
    accumulator: Accumulator
    ledger: Ledger
    rng: random.Random
    params: ProofParams = DEFAULT_PARAMS
    issued: dict[bytes, Credential] = field(default_factory=dict)
    did: Optional[Did] = None  # bound to the initial key root; survives rotation

    def __post_init__(self):
        if self.did is None:
            self.did = self.keys.did

    @classmethod
    def create(cls, ledger: Ledger, keys: KeyTree, rng: random.Random,
               params: ProofParams = DEFAULT_PARAMS, register: bool = True) -> "IssuerContext":
        """Register the issuer DID (optionally) and publish the empty accumulator as epoch 0."""
        acc = Accumulator(params.air.depth, params.air.mimc)
        ctx = cls(keys, acc, ledger, rng, params)
        if register:
            register_did(ledger, keys)
        ctx.publish()
        return ctx

    def publish(self) -> None:
        acc = self.accumulator
        payload = PublishRoot(self.did, acc.epoch, acc.root)
        self.ledger.submit(build_tx(payload, self.did, self.keys, self.ledger.height + DEFAULT_VALIDITY))

    def issue(self, subject: Did, schema: str, attributes: dict[str, int]) -> Credential:
        names = schema_attributes(schema)
        if set(attributes) != set(names):
            raise UnknownSchema(f"schema {schema!r} expects attributes {list(names)}")
        if len(names) > self.params.air.max_attributes:
            raise UnknownSchema(f"schema {schema!r} is wider than the proof system allows")
        attrs = tuple((n, int(attributes[n])) for n in names)
        for n, v in attrs:
            if not 0 <= v < 2**32:
                raise AttributeOutOfRange(f"attribute {n!r} = {v} is not a u32")
        salt = self.rng.randrange(1, P)
        cred_id = self.rng.randbytes(16)
        commitment = self.accumulator.mimc.commit_attributes([v for _, v in attrs], salt)
        slot, epoch = self.accumulator.add(commitment)
        self.publish()
        unsigned = Credential(cred_id, self.did, subject, schema, attrs, salt, slot, epoch)
        cred = Credential(cred_id, self.did, subject, schema, attrs, salt, slot, epoch,
                          self.keys.sign(unsigned.signing_bytes()))
        self.issued[cred_id] = cred
        return cred

    def revoke(self, cred: Union[Credential, bytes, int]) -> int:
        """Revoke by credential, credential id or slot; returns the new epoch."""
        if isinstance(cred, Credential):
            slot = cred.slot
        elif isinstance(cred, bytes):
            slot = self.issued[cred].slot
        else:
            slot = cred
        epoch = self.accumulator.revoke(slot)
        self.publish()
        return epoch

    def witness(self, slot: int) -> MembershipWitness:
        return self.accumulator.witness(slot)

    def refresh(self, stale: MembershipWitness) -> MembershipWitness:
        return self.accumulator.refresh(stale)


# -- requests, presentations, decisions -------------------------------------------------

@dataclass(frozen=True)
class EpochPolicy:
    kind: str = "current_only"  # or "within_k"
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("current_only", "within_k") or self.k < 0:
            raise ValueError(f"bad epoch policy {self.kind}/{self.k}")

    def accepts(self, epoch: int, current: int) -> bool:
        slack = 0 if self.kind == "current_only" else self.k
        return current - slack <= epoch <= current

    def to_json(self) -> dict:
        return {"kind": self.kind, "k": self.k}


CURRENT_ONLY = EpochPolicy()


@dataclass(frozen=True)
class PresentationRequest:
    issuer: Did
    schema: str
    attribute: str
    threshold: int
    nonce: bytes
    policy: EpochPolicy = CURRENT_ONLY

    def __post_init__(self):
        if len(self.nonce) != 16:
            raise ValueError("nonce must be 16 bytes")
        if not 0 <= self.threshold < 2**32:
            raise AttributeOutOfRange("threshold must be a u32")

    def to_json(self) -> dict:
        return {
            "format": REQUEST_FORMAT,
            "issuer": str(self.issuer),
            "schema": self.schema,
            "attribute": self.attribute,
            "predicate": {"op": "gte", "threshold": self.threshold},
            "nonce": self.nonce.hex(),
            "policy": self.policy.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PresentationRequest":
        if obj.get("format") != REQUEST_FORMAT:
            raise DecodeError(f"unsupported request format {obj.get('format')!r}")
        try:
            if obj["predicate"]["op"] != "gte":
                raise DecodeError(f"unsupported predicate {obj['predicate']['op']!r}")
            pol = obj.get("policy", {})
            return cls(Did.parse(obj["issuer"]), obj["schema"], obj["attribute"],
                       int(obj["predicate"]["threshold"]), bytes.fromhex(obj["nonce"]),
                       EpochPolicy(pol.get("kind", "current_only"), int(pol.get("k", 0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed request: {exc}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "PresentationRequest":
        return cls.from_json(json.loads(text))


@dataclass(frozen=True)
class Presentation:
    statement: PredicateStatement
    proof: StarkProof

    def to_json(self) -> dict:
        s = self.statement
        return {
            "format": PRESENTATION_FORMAT,
            "statement": {
                "issuer": s.issuer_did,
                "epoch": s.epoch,
                "accumulator_root": f"{s.accumulator_root:016x}",
                "attribute_index": s.attribute_index,
                "num_attributes": s.num_attributes,
                "threshold": s.threshold,
                "nonce": s.nonce.hex(),
            },
            "proof": encode_proof(self.proof).hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Presentation":
        if obj.get("format") != PRESENTATION_FORMAT:
            raise DecodeError(f"unsupported presentation format {obj.get('format')!r}")
        try:
            s = obj["statement"]
            stmt = PredicateStatement(int(s["accumulator_root"], 16), int(s["epoch"]), int(s["attribute_index"]),
                                      int(s["threshold"]), bytes.fromhex(s["nonce"]), s["issuer"],
                                      int(s["num_attributes"]))
            raw = bytes.fromhex(obj["proof"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed presentation: {exc}") from None
        return cls(stmt, decode_proof(raw))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "Presentation":
        return cls.from_json(json.loads(text))


@dataclass(frozen=True)
class Decision:
    accepted: bool
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.accepted

    def __str__(self) -> str:
        return "Accept" if self.accepted else f"Reject({self.reason})"


ACCEPT = Decision(True)


def reject(reason: str) -> Decision:
    return Decision(False, reason)


# -- holder ---------------------------------------------------------------------------------

WitnessSource = Callable[[MembershipWitness], MembershipWitness]


@dataclass
class StoredCredential:
    credential: Credential
    witness: MembershipWitness
    refresh: Optional[WitnessSource] = None


@dataclass
class HolderWallet:
    keys: KeyTree
    ledger: Ledger
    rng: random.Random
    params: ProofParams = DEFAULT_PARAMS
    credentials: dict[bytes, StoredCredential] = field(default_factory=dict)
    did: Optional[Did] = None

    def __post_init__(self):
        if self.did is None:
            self.did = self.keys.did

    def store(self, cred: Credential, witness: MembershipWitness,
              refresh: Optional[WitnessSource] = None) -> None:
        """Keep a credential after checking its issuer signature and subject."""
        if cred.subject != self.did:
            raise NoMatchingCredential("credential was issued to a different subject")
        issuer_root = self.ledger.resolve_did(cred.issuer).active_key_root
        if not cred.verify_signature(issuer_root):
            raise NoMatchingCredential("credential signature does not verify")
        self.credentials[cred.id] = StoredCredential(cred, witness, refresh)

    def find(self, req: PresentationRequest) -> StoredCredential:
        for stored in self.credentials.values():
            c = stored.credential
            if c.issuer == req.issuer and c.schema == req.schema and req.attribute in dict(c.attributes):
                return stored
        raise NoMatchingCredential(f"no {req.schema} credential from {req.issuer}")

    def present(self, req: PresentationRequest, cred_id: Optional[bytes] = None,
                seed: Optional[int] = None) -> Presentation:
        if cred_id is not None:
            if cred_id not in self.credentials:
                raise NoMatchingCredential(f"no credential {cred_id.hex()}")
            stored = self.credentials[cred_id]
        else:
            stored = self.find(req)
        cred = stored.credential
        idx = cred.attribute_index(req.attribute)
        if cred.values[idx] < req.threshold:
            raise PredicateUnsatisfied(f"{req.attribute} does not meet the requested threshold")

        if stored.refresh is not None:
            try:
                stored.witness = stored.refresh(stored.witness)
            except SlotNotOccupied:
                raise Revoked("the issuer has revoked this credential") from None
        current, _ = self.ledger.current_root(cred.issuer)
        wit = stored.witness
        if not req.policy.accepts(wit.epoch, current):
            raise StaleRootPolicy(f"witness epoch {wit.epoch} not accepted at ledger epoch {current}")
        root = self.ledger.root_at_epoch(cred.issuer, wit.epoch)
        if not wit.verify(root, cred.commitment(self.params.air.mimc), self.params.air.mimc):
            raise Revoked("membership witness does not match the published root")

        stmt = PredicateStatement(root, wit.epoch, idx, req.threshold, req.nonce, str(cred.issuer),
                                  len(cred.attributes))
        pw = PredicateWitness(cred.values, cred.salt, cred.slot, wit.path)
        if seed is None:
            seed = self.rng.getrandbits(64)
        return Presentation(stmt, prove(stmt, pw, self.params, seed))


# -- verifier -----------------------------------------------------------------------------------

def verify_presentation(ledger: Ledger, req: PresentationRequest, pres: Presentation,
                        params: Optional[ProofParams] = None) -> Decision:
    """Stateless checks; never raises for bad input."""
    try:
        return _check(ledger, req, pres, params, None)
    except ZkDidError as exc:
        log.debug("presentation check raised %r", exc)
        return reject(type(exc).__name__)


def _check(ledger, req, pres, params, seen) -> Decision:
    s = pres.statement
    if s.issuer_did != str(req.issuer):
        return reject("IssuerMismatch")
    names = schema_attributes(req.schema)
    if req.attribute not in names or s.attribute_index != names.index(req.attribute):
        return reject("AttributeMismatch")
    if s.num_attributes != len(names):
        return reject("SchemaMismatch")
    if s.threshold != req.threshold:
        return reject("ThresholdMismatch")
    if s.nonce != req.nonce:
        return reject("NonceMismatch")
    try:
        current, _ = ledger.current_root(req.issuer)
        published = ledger.root_at_epoch(req.issuer, s.epoch)
    except ZkDidError:
        return reject("UnknownRoot")
    if published != s.accumulator_root:
        return reject("UnknownRoot")
    if not req.policy.accepts(s.epoch, current):
        return reject("StaleRoot")
    if seen is not None:
        if req.nonce in seen:
            return reject("NonceReused")
        seen.add(req.nonce)
    if not verify(s, req.nonce, pres.proof, params):
        return reject("InvalidProof")
    return ACCEPT


@dataclass
class Verifier:
    """Reference verifier: issues fresh nonces and refuses to accept one twice."""

    ledger: Ledger
    rng: random.Random
    params: Optional[ProofParams] = None
    seen: set[bytes] = field(default_factory=set)

    def request(self, issuer: Did, schema: str, attribute: str, threshold: int,
                policy: EpochPolicy = CURRENT_ONLY) -> PresentationRequest:
        return PresentationRequest(issuer, schema, attribute, threshold, self.rng.randbytes(16), policy)

    def verify(self, req: PresentationRequest, pres: Presentation) -> Decision:
        try:
            return _check(self.ledger, req, pres, self.params, self.seen)
        except ZkDidError as exc:
            return reject(type(exc).__name__)
