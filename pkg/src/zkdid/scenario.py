"""Scripted multi-party scenarios.

A script is plain text, one action per line, ``#`` starts a comment::

    params default
    create-did bank height=6
    create-did alice
    issue bank alice credit/v1 creditScore=750 as=cred
    request shop bank credit/v1 creditScore 700 as=req
    present alice cred req as=pres
    verify shop req pres
    assert-accept

A ``.json`` script holds ``{"steps": [...]}`` where each step is either a line
string or a list of tokens. Scripts are checked before anything runs: unknown
actions, wrong arity and references to names that were never defined are
parse errors (exit 2). While running, a failing action records its error
name; the next step may claim it with ``assert-error <Name>``, otherwise the
run fails. The final exit code is 0 if every assertion held.
"""

from __future__ import annotations

import hashlib
import json
import random
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import ZkDidError
from .identity import Did, KeyTree, keygen
from .protocol import (
    EpochPolicy,
    HolderWallet,
    IssuerContext,
    Verifier,
    register_did,
)
from .stark import DEFAULT_PARAMS, TOY_PARAMS, ProofParams
from .vdr import (
    DEFAULT_TIMELOCK_BLOCKS,
    DEFAULT_VALIDITY,
    ApproveRecovery,
    CancelRecovery,
    ConfigureGuardians,
    FinalizeRecovery,
    InitiateRecovery,
    Ledger,
    UpdateDocument,
    build_tx,
)

PARAMS = {"default": DEFAULT_PARAMS, "toy": TOY_PARAMS}
DEFAULT_KEY_HEIGHT = 10


class ScenarioError(Exception):
    """Script does not parse; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Step:
    line: int
    action: str
    args: tuple[str, ...]
    opts: dict

    def __str__(self) -> str:
        extra = [f"{k}={v}" for k, v in self.opts.items()]
        return " ".join((self.action,) + self.args + tuple(extra))


# action -> (min, max) positional arguments; key=value options are separate
ARITY = {
    "params": (1, 1), "timelock": (1, 1), "seed": (1, 1),
    "create-did": (1, 1), "new-keys": (2, 2), "issuer-init": (1, 1),
    "configure-guardians": (3, 99), "issue": (4, 99), "revoke": (2, 2),
    "request": (5, 5), "present": (3, 3), "verify": (3, 3), "tick": (0, 1),
    "rotate-key": (2, 2),
    "recover-initiate": (3, 3), "recover-approve": (2, 2), "recover-cancel": (1, 1),
    "recover-finalize": (2, 2),
    "assert-accept": (0, 0), "assert-reject": (0, 1), "assert-error": (1, 1),
    "assert-ok": (0, 0), "assert-state": (2, 3),
}
HEADER = {"params", "timelock", "seed"}


def _tokenize(text: str, line: int) -> Step:
    try:
        tokens = shlex.split(text, comments=True)
    except ValueError as exc:
        raise ScenarioError(line, str(exc)) from None
    return _make_step(tokens, line)


def _make_step(tokens: list[str], line: int) -> Step:
    action, rest = tokens[0], tokens[1:]
    args, opts = [], {}
    for tok in rest:
        key, eq, value = tok.partition("=")
        if eq and key in ("as", "height", "reason", "policy", "k") or (eq and action == "issue"):
            opts[key] = value
        else:
            args.append(tok)
    if action not in ARITY:
        raise ScenarioError(line, f"unknown action {action!r}")
    lo, hi = ARITY[action]
    if action == "issue":
        attrs = {k: v for k, v in opts.items() if k != "as"}
        if len(args) != 3 or not attrs:
            raise ScenarioError(line, "issue takes <issuer> <subject> <schema> name=value... [as=name]")
        for k, v in attrs.items():
            if not v.isdigit():
                raise ScenarioError(line, f"attribute {k} needs a non-negative integer value")
    elif not lo <= len(args) <= hi:
        raise ScenarioError(line, f"{action} takes {lo}..{hi} arguments, got {len(args)}")
    return Step(line, action, tuple(args), opts)


def parse(text: str, json_format: bool = False) -> list[Step]:
    steps = []
    if json_format:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(exc.lineno, exc.msg) from None
        raw = doc.get("steps", []) if isinstance(doc, dict) else doc
        if not isinstance(raw, list):
            raise ScenarioError(1, "expected a list of steps")
        for i, item in enumerate(raw, 1):
            if isinstance(item, str):
                if item.strip() and not item.strip().startswith("#"):
                    steps.append(_tokenize(item, i))
            elif isinstance(item, list) and item and all(isinstance(t, str) for t in item):
                steps.append(_make_step(list(item), i))
            else:
                raise ScenarioError(i, "step must be a string or a list of strings")
    else:
        for i, line in enumerate(text.splitlines(), 1):
            if line.strip() and not line.strip().startswith("#"):
                steps.append(_tokenize(line, i))
    _check_references(steps)
    return steps


def _check_references(steps: list[Step]) -> None:
    actors: set[str] = set()
    issuers: set[str] = set()
    keys: set[str] = set()
    objects: dict[str, str] = {}
    seen_body = False

    def need(step: Step, name: str, pool, what: str):
        if name not in pool:
            raise ScenarioError(step.line, f"{what} {name!r} is not defined before use")

    def need_obj(step: Step, name: str, kind: str):
        if objects.get(name) != kind:
            raise ScenarioError(step.line, f"{kind} {name!r} is not defined before use")

    for st in steps:
        a, args = st.action, st.args
        if a in HEADER:
            if seen_body:
                raise ScenarioError(st.line, f"{a} must come before any other action")
            if a == "params" and args[0] not in PARAMS:
                raise ScenarioError(st.line, f"unknown params {args[0]!r}")
            if a in ("timelock", "seed") and not args[0].isdigit():
                raise ScenarioError(st.line, f"{a} needs a non-negative integer")
            continue
        seen_body = True
        if a == "create-did":
            actors.add(args[0])
        elif a == "new-keys":
            need(st, args[0], actors, "actor")
            keys.add(args[1])
        elif a == "issuer-init":
            need(st, args[0], actors, "actor")
            issuers.add(args[0])
        elif a == "configure-guardians":
            need(st, args[0], actors, "actor")
            if not args[1].isdigit():
                raise ScenarioError(st.line, "threshold must be an integer")
            for g in args[2:]:
                need(st, g, actors, "actor")
        elif a == "issue":
            need(st, args[0], issuers, "issuer")
            need(st, args[1], actors, "actor")
            objects[st.opts.get("as", "_")] = "credential"
        elif a == "revoke":
            need(st, args[0], issuers, "issuer")
            need_obj(st, args[1], "credential")
        elif a == "request":
            need(st, args[1], issuers, "issuer")
            if not args[4].isdigit():
                raise ScenarioError(st.line, "threshold must be an integer")
            objects[st.opts.get("as", "_")] = "request"
        elif a == "present":
            need(st, args[0], actors, "actor")
            need_obj(st, args[1], "credential")
            need_obj(st, args[2], "request")
            objects[st.opts.get("as", "_")] = "presentation"
        elif a == "verify":
            need_obj(st, args[1], "request")
            need_obj(st, args[2], "presentation")
        elif a == "tick" and args and not args[0].isdigit():
            raise ScenarioError(st.line, "tick count must be an integer")
        elif a == "rotate-key":
            need(st, args[0], actors, "actor")
            need(st, args[1], keys, "key set")
        elif a == "recover-initiate":
            need(st, args[0], actors, "actor")
            need(st, args[1], actors, "actor")
            need(st, args[2], keys, "key set")
        elif a in ("recover-approve", "recover-finalize"):
            need(st, args[0], actors, "actor")
            need(st, args[1], actors, "actor")
        elif a == "recover-cancel":
            need(st, args[0], actors, "actor")
        elif a == "assert-state":
            kind = args[0]
            if kind not in ("recovery", "epoch", "height", "key"):
                raise ScenarioError(st.line, f"unknown assert-state kind {kind!r}")
            if kind in ("recovery", "key"):
                need(st, args[1], actors, "actor")
            if kind == "epoch":
                need(st, args[1], issuers, "issuer")


@dataclass
class StepResult:
    line: int
    step: str
    outcome: str
    ok: bool = True

    def to_json(self) -> dict:
        return {"line": self.line, "step": self.step, "outcome": self.outcome, "ok": self.ok}


@dataclass
class Report:
    seed: int
    results: list[StepResult] = field(default_factory=list)
    ledger_digest: str = ""

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.results)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def lines(self) -> list[str]:
        out = [f"{r.line:>4}  {'ok  ' if r.ok else 'FAIL'}  {r.step}  ->  {r.outcome}" for r in self.results]
        if self.results:
            out.append(f"ledger {self.ledger_digest[:16]}  {'PASS' if self.passed else 'FAIL'}")
        return out

    def to_json(self) -> dict:
        return {"seed": self.seed, "passed": self.passed, "ledger": self.ledger_digest,
                "steps": [r.to_json() for r in self.results]}


def _derive(seed: int, *parts: str) -> bytes:
    return hashlib.sha256("/".join(("zkdid/scenario", str(seed)) + parts).encode()).digest()


@dataclass
class Actor:
    name: str
    keys: KeyTree
    did: Did
    wallet: Optional[HolderWallet] = None
    issuer: Optional[IssuerContext] = None


class Runner:
    def __init__(self, seed: int = 0, params: ProofParams = DEFAULT_PARAMS,
                 timelock: int = DEFAULT_TIMELOCK_BLOCKS):
        self.seed = seed
        self.params = params
        self.ledger = Ledger(timelock)
        self.actors: dict[str, Actor] = {}
        self.key_sets: dict[str, KeyTree] = {}
        self.verifiers: dict[str, Verifier] = {}
        self.objects: dict[str, object] = {}
        self.last_decision = None
        self.last_error: Optional[str] = None

    def rng(self, *parts: str) -> random.Random:
        return random.Random(_derive(self.seed, *parts))

    def _keys(self, owner: str, name: str, height: int) -> KeyTree:
        return keygen(_derive(self.seed, "keys", owner, name), height)

    def _sign(self, actor: Actor, payload):
        self.ledger.submit(build_tx(payload, actor.did, actor.keys, self.ledger.height + DEFAULT_VALIDITY))

    def execute(self, st: Step) -> str:
        a, args, L = st.action, st.args, self.ledger
        if a == "create-did":
            height = int(st.opts.get("height", DEFAULT_KEY_HEIGHT))
            keys = self._keys(args[0], "initial", height)
            did = register_did(L, keys)
            self.actors[args[0]] = Actor(args[0], keys, did)
            return str(did)
        if a == "new-keys":
            height = int(st.opts.get("height", self.actors[args[0]].keys.height))
            self.key_sets[args[1]] = self._keys(args[0], args[1], height)
            return self.key_sets[args[1]].root.hex()[:16]
        if a == "issuer-init":
            actor = self.actors[args[0]]
            actor.issuer = IssuerContext.create(L, actor.keys, self.rng("issuer", args[0]), self.params,
                                                register=False)
            return f"epoch {actor.issuer.accumulator.epoch}"
        if a == "configure-guardians":
            actor = self.actors[args[0]]
            guardians = tuple(self.actors[g].did for g in args[2:])
            self._sign(actor, ConfigureGuardians(actor.did, guardians, int(args[1])))
            return f"{args[1]}-of-{len(guardians)}"
        if a == "issue":
            issuer = self.actors[args[0]].issuer
            subject = self._wallet(args[1])
            attrs = {k: int(v) for k, v in st.opts.items() if k != "as"}
            cred = issuer.issue(subject.did, args[2], attrs)
            subject.store(cred, issuer.witness(cred.slot), issuer.refresh)
            self.objects[st.opts.get("as", "_")] = cred
            return f"epoch {issuer.accumulator.epoch}"
        if a == "revoke":
            issuer = self.actors[args[0]].issuer
            return f"epoch {issuer.revoke(self.objects[args[1]])}"
        if a == "request":
            verifier = self.verifiers.setdefault(args[0], Verifier(L, self.rng("verifier", args[0]), self.params))
            policy = EpochPolicy(st.opts.get("policy", "current_only"), int(st.opts.get("k", 0)))
            req = verifier.request(self.actors[args[1]].did, args[2], args[3], int(args[4]), policy)
            self.objects[st.opts.get("as", "_")] = req
            return "nonce issued"
        if a == "present":
            wallet = self._wallet(args[0])
            cred, req = self.objects[args[1]], self.objects[args[2]]
            pres = wallet.present(req, cred.id)
            self.objects[st.opts.get("as", "_")] = pres
            return f"proof {len(pres.dumps())} bytes json"
        if a == "verify":
            verifier = self.verifiers.setdefault(args[0], Verifier(L, self.rng("verifier", args[0]), self.params))
            self.last_decision = verifier.verify(self.objects[args[1]], self.objects[args[2]])
            return str(self.last_decision)
        if a == "tick":
            for _ in range(int(args[0]) if args else 1):
                L.tick()
            return f"height {L.height}"
        if a == "rotate-key":
            actor = self.actors[args[0]]
            new = self.key_sets[args[1]]
            self._sign(actor, UpdateDocument(actor.did, new.root))
            actor.keys = new
            return "rotated"
        if a == "recover-initiate":
            guardian, target = self.actors[args[0]], self.actors[args[1]]
            self._sign(guardian, InitiateRecovery(target.did, self.key_sets[args[2]].root))
            return L.recovery_state(target.did).status.value
        if a == "recover-approve":
            guardian, target = self.actors[args[0]], self.actors[args[1]]
            proposed = L.recovery_state(target.did).proposed_key_root
            self._sign(guardian, ApproveRecovery(target.did, proposed))
            return L.recovery_state(target.did).status.value
        if a == "recover-cancel":
            target = self.actors[args[0]]
            self._sign(target, CancelRecovery(target.did))
            return L.recovery_state(target.did).status.value
        if a == "recover-finalize":
            party, target = self.actors[args[0]], self.actors[args[1]]
            self._sign(party, FinalizeRecovery(target.did))
            new_root = L.resolve_did(target.did).active_key_root
            for kt in self.key_sets.values():
                if kt.root == new_root:
                    target.keys = kt
            return "key root replaced"
        raise ScenarioError(st.line, f"cannot execute {a}")

    def _wallet(self, name: str) -> HolderWallet:
        actor = self.actors[name]
        if actor.wallet is None:
            actor.wallet = HolderWallet(actor.keys, self.ledger, self.rng("holder", name), self.params,
                                        did=actor.did)
        return actor.wallet

    def check(self, st: Step) -> tuple[bool, str]:
        a, args = st.action, st.args
        if a == "assert-accept":
            d = self.last_decision
            return bool(d), str(d)
        if a == "assert-reject":
            d = self.last_decision
            want = st.opts.get("reason") or (args[0] if args else None)
            ok = d is not None and not d.accepted and (want is None or d.reason == want)
            return ok, str(d)
        if a == "assert-error":
            return self.last_error == args[0], self.last_error or "no error"
        if a == "assert-ok":
            return self.last_error is None, self.last_error or "ok"
        kind = args[0]
        L = self.ledger
        if kind == "recovery":
            got = L.recovery_state(self.actors[args[1]].did).status.value
            return got == args[2], got
        if kind == "epoch":
            got = str(L.current_root(self.actors[args[1]].did)[0])
            return got == args[2], f"epoch {got}"
        if kind == "height":
            return str(L.height) == args[1], f"height {L.height}"
        actor = self.actors[args[1]]
        root = L.resolve_did(actor.did).active_key_root
        want = self.key_sets[args[2]].root if args[2] in self.key_sets else None
        if args[2] == "initial":
            want = self._keys(args[1], "initial", actor.keys.height).root
        return root == want, f"key {root.hex()[:16]}"

    def run(self, steps: list[Step]) -> Report:
        report = Report(self.seed)
        pending_error: Optional[StepResult] = None
        for st in steps:
            if st.action in HEADER:
                continue
            if st.action.startswith("assert-"):
                ok, outcome = self.check(st)
                if st.action == "assert-error" and ok:
                    pending_error = None
                report.results.append(StepResult(st.line, str(st), outcome, ok))
                continue
            if pending_error is not None:
                pending_error.ok = False
                pending_error = None
            try:
                outcome = self.execute(st)
                self.last_error = None
                report.results.append(StepResult(st.line, str(st), outcome))
            except ZkDidError as exc:
                self.last_error = type(exc).__name__
                res = StepResult(st.line, str(st), f"error {self.last_error}: {exc}")
                report.results.append(res)
                pending_error = res
        if pending_error is not None:
            pending_error.ok = False
        report.ledger_digest = self.ledger.state_digest()
        return report


def run_script(text: str, seed: Optional[int] = None, json_format: bool = False) -> Report:
    """Parse and execute a script. Header lines set params/timelock/seed;
    an explicit ``seed`` argument overrides the script's own."""
    steps = parse(text, json_format)
    header = {st.action: st.args[0] for st in steps if st.action in HEADER}
    if seed is None:
        seed = int(header.get("seed", 0))
    runner = Runner(seed, PARAMS[header.get("params", "default")],
                    int(header.get("timelock", DEFAULT_TIMELOCK_BLOCKS)))
    return runner.run(steps)


def run_scenario(path: Union[str, Path], seed: Optional[int] = None) -> Report:
    """Run a script file; a bare name like ``defi_credit`` picks a bundled one."""
    path = Path(path)
    if not path.exists():
        for candidate in (bundled(path.name), bundled(path.name + ".scn")):
            if candidate.exists():
                path = candidate
                break
        else:
            raise ScenarioError(0, f"no such scenario: {path}")
    return run_script(path.read_text(), seed, json_format=path.suffix.lower() == ".json")


def bundled(name: str) -> Path:
    return Path(__file__).with_name("scenarios") / name
