"""Exception hierarchy.

Every error carries a stable ``code`` string; the CLI prints it on stderr so
callers can branch on it without parsing prose.
"""

from __future__ import annotations


class ZkDidError(Exception):
    code = "Error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


# field / polynomial
class ZeroInverse(ZkDidError):
    code = "ZeroInverse"


class UnsupportedOrder(ZkDidError):
    code = "UnsupportedOrder"


class SizeMismatch(ZkDidError):
    code = "SizeMismatch"


# hashing / merkle
class EmptyAttributes(ZkDidError):
    code = "EmptyAttributes"


class IndexOutOfRange(ZkDidError):
    code = "IndexOutOfRange"


# air / stark
class PredicateUnsatisfied(ZkDidError):
    code = "PredicateUnsatisfied"


class MembershipMismatch(ZkDidError):
    code = "MembershipMismatch"


class AttributeOutOfRange(ZkDidError):
    code = "AttributeOutOfRange"


class ColumnMismatch(ZkDidError):
    code = "ColumnMismatch"


class DomainTooSmall(ZkDidError):
    code = "DomainTooSmall"


class InternalDegreeOverflow(ZkDidError):
    code = "InternalDegreeOverflow"


class DecodeError(ZkDidError):
    code = "DecodeError"

    def __init__(self, message: str, offset: int = -1, reason: str = "Malformed"):
        self.offset = offset
        self.reason = reason
        where = f" at offset {offset}" if offset >= 0 else ""
        super().__init__(f"{reason}: {message}{where}")


# accumulator
class CapacityExhausted(ZkDidError):
    code = "CapacityExhausted"


class SlotNotOccupied(ZkDidError):
    code = "SlotNotOccupied"


class UnknownEpoch(ZkDidError):
    code = "UnknownEpoch"


# identity
class KeysExhausted(ZkDidError):
    code = "KeysExhausted"


# ledger
class LedgerError(ZkDidError):
    """Base for transaction rejections; the message names the violated rule."""


class BadSignature(LedgerError):
    code = "BadSignature"


class Unauthorized(LedgerError):
    code = "Unauthorized"


class UnknownDid(LedgerError):
    code = "UnknownDid"


class InvalidTransition(LedgerError):
    code = "InvalidTransition"


class EpochGap(LedgerError):
    code = "EpochGap"


class NotGuardian(LedgerError):
    code = "NotGuardian"


class DuplicateApproval(LedgerError):
    code = "DuplicateApproval"


class TimelockNotElapsed(LedgerError):
    code = "TimelockNotElapsed"


class NoPendingRecovery(LedgerError):
    code = "NoPendingRecovery"


class ReplayedSignature(LedgerError):
    code = "ReplayedSignature"


class Expired(LedgerError):
    code = "Expired"


# protocol
class NoMatchingCredential(ZkDidError):
    code = "NoMatchingCredential"


class Revoked(ZkDidError):
    code = "Revoked"


class StaleRootPolicy(ZkDidError):
    code = "StaleRootPolicy"


class UnknownSchema(ZkDidError):
    code = "UnknownSchema"
