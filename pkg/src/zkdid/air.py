"""Trace layout and polynomial constraints for the credential predicate.

The statement proved is: "I know attributes, a salt and an accumulator path
such that commit_attributes(attrs, salt) sits in the tree with the public
root, and attrs[attribute_index] >= threshold".

Layout (N rows, R = MiMC rounds, B = range bits, m attributes, depth D):

* The trace is cut into N/R hash blocks of R rows; row r of a block holds the
  state ``x`` entering round r, the block key ``k`` and left input ``l``, the
  helpers ``t2 = t**2``, ``t4 = t**4`` (``t = x + k + c_r``) and the round
  output ``y = t**7``. Blocks 0..m-1 fold the attributes onto the salt, blocks
  m..m+D-1 climb the accumulator path, row (m+D)*R carries the root. Every
  later block is a MiMC evaluation on random inputs (padding randomness).
* ``b`` holds the path direction bit on the first row of each path block.
* ``vacc``/``dacc`` shift the attribute value v and the gap d = v - T right
  one bit per row over rows a*R .. a*R+B, ending at 0, which pins both to
  B bits; v - T - d = 0 with v, d < 2**B then means v >= T over the integers.

All constraints have total degree <= 3 in trace and selector columns.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import lru_cache
from types import SimpleNamespace
from typing import Callable, Optional

import numpy as np

from . import field as F
from .errors import (
    AttributeOutOfRange,
    ColumnMismatch,
    DecodeError,
    MembershipMismatch,
    PredicateUnsatisfied,
)
from .field import FArray, P
from .hashing import Mimc
from .merkle import AlgPath, alg_verify

COLUMNS = ("x", "k", "l", "t2", "t4", "y", "b", "vacc", "dacc")
PERIODIC = ("rc", "s_in", "s_start")
SPARSE = ("s_direct", "s_path", "s_attr", "s_range")
MAX_DEGREE = 3

STATEMENT_TAG = 0x02


@dataclass(frozen=True)
class AirConfig:
    depth: int = 16
    rounds: int = 64
    range_bits: int = 32
    trace_length: int = 2048

    @property
    def mimc(self) -> Mimc:
        return Mimc(self.rounds)

    @property
    def max_attributes(self) -> int:
        # m + D blocks, then the root row opens one more block
        return self.trace_length // self.rounds - self.depth - 1


DEFAULT_AIR = AirConfig()
TOY_AIR = AirConfig(depth=2, rounds=8, range_bits=4, trace_length=32)


@dataclass(frozen=True)
class PredicateStatement:
    """Public inputs. ``num_attributes`` is the schema width (public)."""

    accumulator_root: int
    epoch: int
    attribute_index: int
    threshold: int
    nonce: bytes
    issuer_did: str
    num_attributes: int = 1

    def __post_init__(self):
        if not 0 <= self.threshold < 2**32:
            raise AttributeOutOfRange("threshold must be a u32")
        if len(self.nonce) != 16:
            raise ValueError("nonce must be 16 bytes")

    def encode(self) -> bytes:
        did = self.issuer_did.encode("utf-8")
        return b"".join([
            bytes([STATEMENT_TAG]),
            F.felt_to_bytes(self.accumulator_root),
            self.epoch.to_bytes(8, "big"),
            self.attribute_index.to_bytes(1, "big"),
            self.threshold.to_bytes(4, "big"),
            self.nonce,
            len(did).to_bytes(4, "big"),
            did,
            self.num_attributes.to_bytes(1, "big"),
        ])

    @classmethod
    def decode(cls, data: bytes) -> "PredicateStatement":
        if not data or data[0] != STATEMENT_TAG:
            raise DecodeError("not a statement encoding", 0)
        if len(data) < 42:
            raise DecodeError("truncated statement", len(data))
        root = F.felt_from_bytes(data, 1)
        epoch = int.from_bytes(data[9:17], "big")
        idx = data[17]
        threshold = int.from_bytes(data[18:22], "big")
        nonce = data[22:38]
        n = int.from_bytes(data[38:42], "big")
        if len(data) != 42 + n + 1:
            raise DecodeError("statement length mismatch", len(data))
        did = data[42:42 + n].decode("utf-8")
        return cls(root, epoch, idx, threshold, nonce, did, data[42 + n])


@dataclass(frozen=True)
class PredicateWitness:
    attrs: tuple[int, ...]
    salt: int
    slot_index: int
    alg_path: AlgPath


@dataclass
class Trace:
    columns: dict[str, np.ndarray]

    @property
    def length(self) -> int:
        return len(next(iter(self.columns.values())))

    def matrix(self) -> np.ndarray:
        return np.stack([self.columns[c] for c in COLUMNS])


@dataclass(frozen=True)
class Layout:
    config: AirConfig
    num_attributes: int
    attribute_index: int

    def __post_init__(self):
        cfg = self.config
        if self.num_attributes < 1 or self.num_attributes > cfg.max_attributes:
            raise AttributeOutOfRange(
                f"{self.num_attributes} attributes do not fit a {cfg.trace_length}-row trace")
        if not 0 <= self.attribute_index < self.num_attributes:
            raise AttributeOutOfRange(f"attribute index {self.attribute_index} out of bounds")
        if self.range_end >= cfg.trace_length:
            raise AttributeOutOfRange("range check segment does not fit the trace")

    @property
    def blocks(self) -> int:
        return self.num_attributes + self.config.depth

    @property
    def root_row(self) -> int:
        return self.blocks * self.config.rounds

    def block_end(self, i: int) -> int:
        return (i + 1) * self.config.rounds - 1

    @property
    def direct_rows(self) -> list[int]:
        m = self.num_attributes
        return [self.block_end(i) for i in range(m - 1)] + [self.block_end(self.blocks - 1)]

    @property
    def path_rows(self) -> list[int]:
        return [self.block_end(i) for i in range(self.num_attributes - 1, self.blocks - 1)]

    @property
    def attr_row(self) -> int:
        return self.attribute_index * self.config.rounds

    @property
    def range_rows(self) -> list[int]:
        return list(range(self.attr_row, self.attr_row + self.config.range_bits))

    @property
    def range_end(self) -> int:
        return self.attr_row + self.config.range_bits

    def sparse_rows(self) -> dict[str, list[int]]:
        return {
            "s_direct": self.direct_rows,
            "s_path": self.path_rows,
            "s_attr": [self.attr_row],
            "s_range": self.range_rows,
        }


# -- public (selector) columns ---------------------------------------------------

def periodic_patterns(config: AirConfig) -> dict[str, list[int]]:
    r = config.rounds
    return {
        "rc": list(config.mimc.constants),
        "s_in": [1] * (r - 1) + [0],
        "s_start": [1] + [0] * (r - 1),
    }


def public_trace(layout: Layout) -> dict[str, np.ndarray]:
    """Selector and round-constant values on the trace rows."""
    n = layout.config.trace_length
    cols = {}
    for name, pattern in periodic_patterns(layout.config).items():
        cols[name] = F.as_array(pattern * (n // len(pattern)))
    for name, rows in layout.sparse_rows().items():
        col = np.zeros(n, dtype=np.uint64)
        col[rows] = 1
        cols[name] = col
    return cols


@lru_cache(maxsize=None)
def _periodic_coeffs(config: AirConfig) -> dict[str, np.ndarray]:
    out = {}
    log_r = config.rounds.bit_length() - 1
    for name, pattern in periodic_patterns(config).items():
        out[name] = F.intt(pattern, F.EvalDomain(log_r))
    return out


def public_at(layout: Layout, xs: np.ndarray) -> dict[str, FArray]:
    """Evaluate the interpolants of the public columns at arbitrary points.

    Periodic columns are P(x**(N/R)) for a degree < R polynomial P; sparse
    selectors are sums of Lagrange basis polynomials of the trace domain.
    ``xs`` must avoid the trace domain itself.
    """
    cfg = layout.config
    n = cfg.trace_length
    out: dict[str, FArray] = {}
    ys = F.vpow(xs, n // cfg.rounds)
    periodic = _periodic_coeffs(cfg)
    coeffs = np.stack(list(periodic.values()))  # (columns, R)
    # power table y^0..y^(R-1) by doubling, then one product and a pairwise sum
    ypow = np.ones((len(xs), 1), dtype=np.uint64)
    step = ys[:, None]
    while ypow.shape[1] < coeffs.shape[1]:
        ypow = np.concatenate([ypow, F.vmul(ypow, np.broadcast_to(step, ypow.shape))], axis=1)
        step = F.vmul(step, step)
    acc = F.vmul(coeffs[:, None, :], np.broadcast_to(ypow, (len(coeffs),) + ypow.shape))
    while acc.shape[2] > 1:
        half = acc.shape[2] // 2
        acc = F.vadd(acc[:, :, :half], acc[:, :, half:])
    for row, name in enumerate(periodic):
        out[name] = FArray(acc[row, :, 0])

    sparse = layout.sparse_rows()
    all_rows = sorted({r for rows in sparse.values() for r in rows})
    omega = F.root_of_unity(n.bit_length() - 1)
    pts = F.as_array([pow(omega, r, P) for r in all_rows])
    # L_i(x) = (x^N - 1) / N * w^i / (x - w^i)
    diffs = F.vsub(np.broadcast_to(xs, (len(all_rows), len(xs))), pts[:, None])
    terms = F.vmul(F.batch_inv(diffs.ravel()).reshape(diffs.shape), np.broadcast_to(pts[:, None], diffs.shape))
    factor = F.vscale(F.vsub(F.vpow(xs, n), np.ones_like(xs)), F.inv(n))
    term_of = {r: terms[i] for i, r in enumerate(all_rows)}
    for name, rows in sparse.items():
        acc = np.zeros_like(xs)
        for r in rows:
            acc = F.vadd(acc, term_of[r])
        out[name] = FArray(F.vmul(acc, factor))
    return out


# -- constraints -------------------------------------------------------------------

Row = SimpleNamespace
ConstraintFn = Callable[[Row, Row, Row], FArray]


@dataclass(frozen=True)
class TransitionConstraint:
    name: str
    degree: int
    mask: Optional[str]  # selector column restricting the active rows; None = every row
    fn: ConstraintFn


@dataclass(frozen=True)
class BoundaryConstraint:
    name: str
    column: str
    row: int
    value: int


@dataclass
class ConstraintSet:
    layout: Layout
    transitions: list[TransitionConstraint]
    boundaries: list[BoundaryConstraint]

    @property
    def config(self) -> AirConfig:
        return self.layout.config

    def __len__(self) -> int:
        return len(self.transitions) + len(self.boundaries)


def _mimc_input(c: Row, p: Row) -> FArray:
    return c.x + c.k + p.rc


def _block_output(c: Row) -> FArray:
    return c.y + c.l + c.k


def _transitions(threshold: int) -> list[TransitionConstraint]:
    def bits(cur, nxt):
        step = cur - 2 * nxt
        return step * (step - 1)

    return [
        TransitionConstraint("mimc_square", 2, None,
                             lambda c, n, p: c.t2 - _mimc_input(c, p) * _mimc_input(c, p)),
        TransitionConstraint("mimc_fourth", 2, None, lambda c, n, p: c.t4 - c.t2 * c.t2),
        TransitionConstraint("mimc_seventh", 3, None,
                             lambda c, n, p: c.y - _mimc_input(c, p) * c.t2 * c.t4),
        TransitionConstraint("direction_bool", 2, None, lambda c, n, p: c.b * (c.b - 1)),
        TransitionConstraint("round_link", 2, "s_in", lambda c, n, p: p.s_in * (n.x - c.y)),
        TransitionConstraint("key_hold", 2, "s_in", lambda c, n, p: p.s_in * (n.k - c.k)),
        TransitionConstraint("left_hold", 2, "s_in", lambda c, n, p: p.s_in * (n.l - c.l)),
        TransitionConstraint("block_start", 2, "s_start", lambda c, n, p: p.s_start * (c.l - c.x)),
        TransitionConstraint("direct_link", 2, "s_direct",
                             lambda c, n, p: p.s_direct * (n.x - _block_output(c))),
        TransitionConstraint(
            "path_link", 3, "s_path",
            lambda c, n, p: p.s_path * ((1 - n.b) * (n.x - _block_output(c)) + n.b * (n.k - _block_output(c)))),
        TransitionConstraint("value_bits", 3, "s_range", lambda c, n, p: p.s_range * bits(c.vacc, n.vacc)),
        TransitionConstraint("gap_bits", 3, "s_range", lambda c, n, p: p.s_range * bits(c.dacc, n.dacc)),
        TransitionConstraint("attribute_bind", 2, "s_attr", lambda c, n, p: p.s_attr * (c.vacc - c.k)),
        TransitionConstraint("threshold_gap", 2, "s_attr",
                             lambda c, n, p: p.s_attr * (c.vacc - c.dacc - threshold)),
    ]


def predicate_constraints(stmt: PredicateStatement, config: AirConfig = DEFAULT_AIR) -> ConstraintSet:
    layout = Layout(config, stmt.num_attributes, stmt.attribute_index)
    boundaries = [
        BoundaryConstraint("root_output", "x", layout.root_row, stmt.accumulator_root % P),
        BoundaryConstraint("value_end", "vacc", layout.range_end, 0),
        BoundaryConstraint("gap_end", "dacc", layout.range_end, 0),
    ]
    return ConstraintSet(layout, _transitions(stmt.threshold), boundaries)


def evaluate_transitions(cs: ConstraintSet, cur: dict, nxt: dict, pub: dict) -> list[FArray]:
    """Evaluate every transition constraint on aligned (current, next) rows."""
    c = Row(**{k: v if isinstance(v, FArray) else FArray(v) for k, v in cur.items()})
    n = Row(**{k: v if isinstance(v, FArray) else FArray(v) for k, v in nxt.items()})
    p = Row(**{k: v if isinstance(v, FArray) else FArray(v) for k, v in pub.items()})
    return [tc.fn(c, n, p) for tc in cs.transitions]


# -- trace checking ----------------------------------------------------------------

@dataclass
class CheckReport:
    violations: list[tuple[str, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Optional[tuple[str, int]]:
        return self.violations[0] if self.violations else None

    def __bool__(self) -> bool:
        return self.ok


def check_trace(trace: Trace, cs: ConstraintSet) -> CheckReport:
    """Brute-force satisfaction check over every row pair and boundary.

    Violations are listed in constraint order, then by row.
    """
    n = cs.config.trace_length
    if set(trace.columns) != set(COLUMNS):
        raise ColumnMismatch(f"trace columns {sorted(trace.columns)} != {sorted(COLUMNS)}")
    if any(len(v) != n for v in trace.columns.values()):
        raise ColumnMismatch(f"every column must have {n} rows")
    pub = public_trace(cs.layout)
    cur = {k: v[:-1] for k, v in trace.columns.items()}
    nxt = {k: v[1:] for k, v in trace.columns.items()}
    pub_cur = {k: v[:-1] for k, v in pub.items()}
    report = CheckReport()
    for tc, values in zip(cs.transitions, evaluate_transitions(cs, cur, nxt, pub_cur)):
        for row in np.nonzero(values.v)[0]:
            report.violations.append((tc.name, int(row)))
    for bc in cs.boundaries:
        if int(trace.columns[bc.column][bc.row]) != bc.value:
            report.violations.append((bc.name, bc.row))
    return report


# -- trace building ----------------------------------------------------------------

def _validate(stmt: PredicateStatement, wit: PredicateWitness, config: AirConfig) -> tuple[int, int]:
    attrs = tuple(wit.attrs)
    if len(attrs) != stmt.num_attributes:
        raise AttributeOutOfRange(
            f"statement expects {stmt.num_attributes} attributes, witness has {len(attrs)}")
    if not 0 <= stmt.attribute_index < len(attrs):
        raise AttributeOutOfRange(f"attribute index {stmt.attribute_index} out of bounds")
    if any(not 0 <= a < 2**32 for a in attrs):
        raise AttributeOutOfRange("attribute values must be u32")
    value = attrs[stmt.attribute_index]
    limit = 1 << config.range_bits
    if value >= limit or stmt.threshold >= limit:
        raise AttributeOutOfRange(f"value/threshold exceed the {config.range_bits}-bit range")
    if value < stmt.threshold:
        raise PredicateUnsatisfied(f"attribute below threshold {stmt.threshold}")
    path = wit.alg_path
    mimc = config.mimc
    if path.depth != config.depth or path.index != wit.slot_index:
        raise MembershipMismatch("accumulator path does not match the configured depth/slot")
    commitment = mimc.commit_attributes(attrs, wit.salt)
    if not alg_verify(stmt.accumulator_root, commitment, path, mimc):
        raise MembershipMismatch("credential commitment is not under the accumulator root")
    return value, value - stmt.threshold


def _fill_block(cols: dict, start: int, left: int, key: int, consts: tuple[int, ...]) -> int:
    x = left
    for r, c in enumerate(consts):
        row = start + r
        t = (x + key + c) % P
        t2 = t * t % P
        t4 = t2 * t2 % P
        y = t * t2 % P * t4 % P
        cols["x"][row] = x
        cols["k"][row] = key
        cols["l"][row] = left
        cols["t2"][row] = t2
        cols["t4"][row] = t4
        cols["y"][row] = y
        x = y
    return (x + left + key) % P


def build_trace(
    stmt: PredicateStatement,
    wit: PredicateWitness,
    config: AirConfig = DEFAULT_AIR,
    rng: Optional[random.Random] = None,
) -> Trace:
    """Witness -> execution trace satisfying ``predicate_constraints(stmt)``.

    Cells no constraint pins (padding blocks, unused bit/accumulator rows) are
    drawn fresh from ``rng``.
    """
    rng = rng or random.SystemRandom()
    value, gap = _validate(stmt, wit, config)
    layout = Layout(config, stmt.num_attributes, stmt.attribute_index)
    n, rounds = config.trace_length, config.rounds
    consts = config.mimc.constants
    cols = {c: [0] * n for c in COLUMNS}
    for c in ("vacc", "dacc"):
        cols[c] = [rng.randrange(P) for _ in range(n)]
    cols["b"] = [rng.getrandbits(1) for _ in range(n)]

    node = wit.salt % P
    for i, a in enumerate(wit.attrs):
        node = _fill_block(cols, i * rounds, node, a, consts)
    for j, (bit, sib) in enumerate(zip(wit.alg_path.directions, wit.alg_path.siblings)):
        start = (stmt.num_attributes + j) * rounds
        cols["b"][start] = bit
        left, right = (sib, node) if bit else (node, sib)
        node = _fill_block(cols, start, left, right, consts)
    _fill_block(cols, layout.root_row, node, rng.randrange(P), consts)
    for blk in range(layout.blocks + 1, n // rounds):
        _fill_block(cols, blk * rounds, rng.randrange(P), rng.randrange(P), consts)

    for j in range(config.range_bits + 1):
        cols["vacc"][layout.attr_row + j] = value >> j
        cols["dacc"][layout.attr_row + j] = gap >> j
    return Trace({c: np.array(v, dtype=np.uint64) for c, v in cols.items()})
