from __future__ import annotations

import pytest

from zkdid.errors import (
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
)
from zkdid.identity import Did, DidDocument, keygen
from zkdid.protocol import register_did
from zkdid.vdr import (
    DEFAULT_TIMELOCK_BLOCKS,
    ApproveRecovery,
    Block,
    CancelRecovery,
    ConfigureGuardians,
    FinalizeRecovery,
    InitiateRecovery,
    Ledger,
    PublishRoot,
    RecoveryStatus,
    RegisterDid,
    Tx,
    UpdateDocument,
    build_tx,
)


def keys(n: int, height: int = 3):
    return keygen(bytes([n]) * 32, height)


def tx(ledger, payload, signer_keys, signer=None):
    return build_tx(payload, signer or signer_keys.did, signer_keys, ledger.height + 16)


@pytest.fixture
def world():
    """A ledger with a subject and five registered guardians under a 3-of-5 policy."""
    ledger = Ledger()
    subject = keys(1)
    guardians = [keys(10 + i) for i in range(5)]
    for k in [subject] + guardians:
        register_did(ledger, k)
    ledger.submit(tx(ledger, ConfigureGuardians(subject.did, tuple(g.did for g in guardians), 3), subject))
    ledger.tick()
    return ledger, subject, guardians


def test_register_and_resolve():
    ledger = Ledger()
    k = keys(1)
    did = register_did(ledger, k)
    doc = ledger.resolve_did(did)
    assert doc.active_key_root == k.root and doc.guardians == () and did == Did.from_key_root(k.root)
    with pytest.raises(InvalidTransition):
        register_did(ledger, k)
    with pytest.raises(UnknownDid):
        ledger.resolve_did(keys(2).did)
    assert ledger.cost_units > 0


def test_register_checks_signer_and_binding():
    ledger = Ledger()
    a, b = keys(1), keys(2)
    with pytest.raises(Unauthorized):
        ledger.submit(tx(ledger, RegisterDid(DidDocument(a.did, a.root)), b, signer=b.did))
    with pytest.raises(InvalidTransition):
        ledger.submit(tx(ledger, RegisterDid(DidDocument(a.did, b.root)), a))
    with pytest.raises(BadSignature):
        ledger.submit(tx(ledger, RegisterDid(DidDocument(a.did, a.root)), b, signer=a.did))


def test_non_controller_is_unauthorized(world):
    ledger, subject, guardians = world
    g = guardians[0]
    with pytest.raises(Unauthorized):
        ledger.submit(tx(ledger, UpdateDocument(subject.did, b"\x00" * 32), g))
    with pytest.raises(BadSignature):
        ledger.submit(tx(ledger, UpdateDocument(subject.did, b"\x00" * 32), g, signer=subject.did))


def test_replayed_transaction_rejected(world):
    ledger, subject, _ = world
    t = tx(ledger, PublishRoot(subject.did, 0, 123), subject)
    ledger.submit(t)
    with pytest.raises(ReplayedSignature):
        ledger.submit(t)


def test_expired_transaction_rejected(world):
    ledger, subject, _ = world
    t = build_tx(PublishRoot(subject.did, 0, 1), subject.did, subject, ledger.height)
    ledger.tick()
    with pytest.raises(Expired):
        ledger.submit(t)


def test_publish_root_requires_consecutive_epochs(world):
    ledger, subject, _ = world
    with pytest.raises(EpochGap):
        ledger.submit(tx(ledger, PublishRoot(subject.did, 1, 5), subject))
    ledger.submit(tx(ledger, PublishRoot(subject.did, 0, 5), subject))
    ledger.submit(tx(ledger, PublishRoot(subject.did, 1, 6), subject))
    with pytest.raises(EpochGap):
        ledger.submit(tx(ledger, PublishRoot(subject.did, 3, 7), subject))
    assert ledger.current_root(subject.did) == (1, 6)
    assert ledger.root_at_epoch(subject.did, 0) == 5


def test_three_of_five_recovery_with_timelock_boundary(world):
    ledger, subject, guardians = world
    new = keys(99)
    g = guardians
    with pytest.raises(NotGuardian):
        ledger.submit(tx(ledger, InitiateRecovery(subject.did, new.root), keys(50)))
    ledger.submit(tx(ledger, InitiateRecovery(subject.did, new.root), g[0]))
    state = ledger.recovery_state(subject.did)
    assert state.status is RecoveryStatus.COLLECTING and state.approvals == {g[0].did}
    with pytest.raises(DuplicateApproval):
        ledger.submit(tx(ledger, ApproveRecovery(subject.did, new.root), g[0]))
    with pytest.raises(InvalidTransition):
        ledger.submit(tx(ledger, ApproveRecovery(subject.did, b"\x01" * 32), g[1]))
    ledger.submit(tx(ledger, ApproveRecovery(subject.did, new.root), g[1]))
    with pytest.raises(InvalidTransition):
        ledger.submit(tx(ledger, FinalizeRecovery(subject.did), g[0]))
    ledger.tick()
    ledger.submit(tx(ledger, ApproveRecovery(subject.did, new.root), g[2]))
    state = ledger.recovery_state(subject.did)
    assert state.status is RecoveryStatus.TIMELOCKED and state.locked_at == ledger.height
    locked = ledger.height
    ledger.tick_to(locked + DEFAULT_TIMELOCK_BLOCKS - 1)
    with pytest.raises(TimelockNotElapsed):
        ledger.submit(tx(ledger, FinalizeRecovery(subject.did), g[3]))
    ledger.tick()
    ledger.submit(tx(ledger, FinalizeRecovery(subject.did), g[3]))
    assert ledger.resolve_did(subject.did).active_key_root == new.root
    assert ledger.recovery_state(subject.did).status is RecoveryStatus.NONE
    # the old key no longer controls the DID; the new one does
    with pytest.raises(BadSignature):
        ledger.submit(tx(ledger, PublishRoot(subject.did, 0, 1), subject))
    ledger.submit(tx(ledger, PublishRoot(subject.did, 0, 1), new, signer=subject.did))


def test_owner_cancels_recovery(world):
    ledger, subject, guardians = world
    new = keys(98)
    with pytest.raises(NoPendingRecovery):
        ledger.submit(tx(ledger, CancelRecovery(subject.did), subject))
    ledger.submit(tx(ledger, InitiateRecovery(subject.did, new.root), guardians[0]))
    with pytest.raises(InvalidTransition):
        ledger.submit(tx(ledger, InitiateRecovery(subject.did, new.root), guardians[1]))
    with pytest.raises(InvalidTransition):
        ledger.submit(tx(ledger, ConfigureGuardians(subject.did, (), 0), subject))
    with pytest.raises(Unauthorized):
        ledger.submit(tx(ledger, CancelRecovery(subject.did), guardians[1]))
    ledger.submit(tx(ledger, CancelRecovery(subject.did), subject))
    assert ledger.recovery_state(subject.did).status is RecoveryStatus.NONE
    with pytest.raises(NoPendingRecovery):
        ledger.submit(tx(ledger, ApproveRecovery(subject.did, new.root), guardians[1]))


def test_guardian_configuration_rules(world):
    ledger, subject, guardians = world
    with pytest.raises(UnknownDid):
        ledger.submit(tx(ledger, ConfigureGuardians(subject.did, (keys(77).did,), 1), subject))
    with pytest.raises(InvalidTransition):
        ledger.submit(tx(ledger, ConfigureGuardians(subject.did, (guardians[0].did,), 2), subject))
    with pytest.raises(InvalidTransition):
        ledger.submit(tx(ledger, ConfigureGuardians(subject.did, (subject.did,), 1), subject))
    with pytest.raises(UnknownDid):
        ledger.submit(tx(ledger, InitiateRecovery(keys(77).did, b"\x00" * 32), guardians[0]))


def test_replay_and_file_roundtrip(world, tmp_path):
    ledger, subject, guardians = world
    ledger.submit(tx(ledger, PublishRoot(subject.did, 0, 42), subject))
    ledger.submit(tx(ledger, InitiateRecovery(subject.did, keys(97).root), guardians[2]))
    again = Ledger.replay(ledger.blocks, ledger.pending)
    assert again.state_digest() == ledger.state_digest() and again.dump() == ledger.dump()
    path = tmp_path / "ledger.zkdl"
    ledger.save(path)
    loaded = Ledger.load(path)
    assert loaded.state_digest() == ledger.state_digest()
    assert loaded.to_bytes() == ledger.to_bytes()
    with pytest.raises(DecodeError):
        Ledger.from_bytes(b"ZKDX 1 100\n")
    with pytest.raises(DecodeError):
        Ledger.from_bytes(b"ZKDL 2 100\n")
    with pytest.raises(DecodeError):
        Ledger.replay([Block(1, ())])


def test_transaction_encoding_roundtrip(world):
    ledger, subject, guardians = world
    payloads = [RegisterDid(DidDocument(subject.did, subject.root)), UpdateDocument(subject.did, b"\x03" * 32),
                PublishRoot(subject.did, 4, 99), ConfigureGuardians(subject.did, (guardians[0].did,), 1),
                InitiateRecovery(subject.did, b"\x04" * 32), ApproveRecovery(subject.did, b"\x04" * 32),
                CancelRecovery(subject.did), FinalizeRecovery(subject.did)]
    k = keys(5, height=4)
    for p in payloads:
        t = build_tx(p, k.did, k, 7)
        data = t.encode()
        assert Tx.decode(data) == t
        with pytest.raises(DecodeError):
            Tx.decode(data[:-1])
