from __future__ import annotations

import random
from contextlib import contextmanager

import pytest

from zkdid.air import TOY_AIR, AirConfig, PredicateStatement, PredicateWitness
from zkdid.merkle import SparseAlgTree

NONCE = bytes(range(16))
ISSUER = "did:zkd:" + "ab" * 32


ACCEPTANCE_LINES: list[str] = []


@contextmanager
def criterion(number: int, title: str):
    """Record one PASS/FAIL line for an acceptance criterion; failures still raise."""
    notes: list[str] = []
    try:
        yield notes
    except BaseException:
        line = f"criterion {number:>2} FAIL  {title}" + (f"  [{'; '.join(notes)}]" if notes else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    line = f"criterion {number:>2} PASS  {title}" + (f"  [{'; '.join(notes)}]" if notes else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def make_case(config: AirConfig, attrs, index: int, threshold: int, slot: int = 0, salt: int = 12345,
              nonce: bytes = NONCE, epoch: int = 0, others: dict | None = None):
    """A (statement, witness) pair with the credential at ``slot`` of a fresh tree."""
    tree = SparseAlgTree(config.depth, config.mimc)
    for s, leaf in (others or {}).items():
        tree.set(s, leaf)
    tree.set(slot, config.mimc.commit_attributes(list(attrs), salt))
    stmt = PredicateStatement(tree.root, epoch, index, threshold, nonce, ISSUER, len(attrs))
    wit = PredicateWitness(tuple(attrs), salt, slot, tree.path(slot))
    return stmt, wit


def random_case(config: AirConfig, rng: random.Random, width: int = 1):
    """Random valid witness: value >= threshold, random slot, salt and neighbours."""
    limit = 1 << config.range_bits
    attrs = [rng.randrange(2**32) for _ in range(width)]
    index = rng.randrange(width)
    attrs[index] = rng.randrange(limit)
    threshold = rng.randrange(attrs[index] + 1)
    capacity = 1 << config.depth
    slot = rng.randrange(capacity)
    others = {s: rng.randrange(1, 2**64 - 2**32) for s in rng.sample(range(capacity), min(3, capacity))
              if s != slot}
    nonce = rng.randbytes(16)
    return make_case(config, attrs, index, threshold, slot, rng.randrange(1, 2**63), nonce,
                     rng.randrange(100), others)


@pytest.fixture
def toy_case():
    return make_case(TOY_AIR, [12], 0, 10, slot=1)
