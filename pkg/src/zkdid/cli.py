"""Command-line frontend.

Every command loads its state from files (``--ledger``, key files, issuer
state), performs one module operation and writes the state back. ``--seed``
(or ``ZKDID_SEED``) makes every random choice reproducible. Exit codes: 0 on
success, 1 on a failed verification, assertion or protocol error (the error
code is printed on stderr), 2 on usage or script parse errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
from pathlib import Path
from typing import Optional

from .accumulator import Accumulator, MembershipWitness
from .bench import format_table, run_bench
from .errors import DecodeError, ZkDidError
from .identity import Credential, Did, KeyTree, keygen
from .merkle import AlgPath
from .protocol import (
    EpochPolicy,
    HolderWallet,
    IssuerContext,
    Presentation,
    PresentationRequest,
    register_did,
    verify_presentation,
)
from .scenario import PARAMS, ScenarioError, run_scenario
from .vdr import (
    DEFAULT_VALIDITY,
    ApproveRecovery,
    CancelRecovery,
    ConfigureGuardians,
    FinalizeRecovery,
    InitiateRecovery,
    Ledger,
    build_tx,
)

KEY_FORMAT = "zkdid-key/1"
ISSUER_FORMAT = "zkdid-issuer/1"


class UsageError(Exception):
    pass


# -- state files ----------------------------------------------------------------

def _seed(args) -> Optional[int]:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ZKDID_SEED")
    if env is None:
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"ZKDID_SEED must be an integer, got {env!r}") from None


def _rng(args, purpose: str, *material: bytes) -> random.Random:
    seed = _seed(args)
    if seed is None:
        return random.SystemRandom()
    h = hashlib.sha256(f"zkdid/cli/{seed}/{purpose}".encode())
    for m in material:
        h.update(hashlib.sha256(m).digest())
    return random.Random(h.digest())


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise DecodeError(f"{path} is not JSON: {exc.msg}", exc.pos) from None


def _write_json(path: str, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def _load_ledger(path: str) -> Ledger:
    p = Path(path)
    return Ledger.load(p) if p.exists() else Ledger()


def _load_keys(path: str) -> tuple[KeyTree, Did]:
    obj = _read_json(path)
    if obj.get("format") != KEY_FORMAT:
        raise DecodeError(f"{path} is not a key file")
    return KeyTree.from_json(obj), Did.parse(obj["did"])


def _save_keys(path: str, keys: KeyTree, did: Did) -> None:
    _write_json(path, {"format": KEY_FORMAT, "did": str(did), "root": keys.root.hex(), **keys.to_json()})


def _load_issuer(args, ledger: Ledger) -> IssuerContext:
    keys, did = _load_keys(args.keys)
    obj = _read_json(args.state)
    if obj.get("format") != ISSUER_FORMAT:
        raise DecodeError(f"{args.state} is not an issuer state file")
    acc = Accumulator.from_bytes(bytes.fromhex(obj["accumulator"]))
    rng = _rng(args, "issuer", ledger.to_bytes(), acc.to_bytes())
    return IssuerContext(keys, acc, ledger, rng, PARAMS[obj["params"]], did=did)


def _save_issuer(args, ctx: IssuerContext) -> None:
    name = next(k for k, v in PARAMS.items() if v == ctx.params)
    _write_json(args.state, {"format": ISSUER_FORMAT, "did": str(ctx.did), "params": name,
                             "accumulator": ctx.accumulator.to_bytes().hex()})
    _save_keys(args.keys, ctx.keys, ctx.did)


# -- commands ----------------------------------------------------------------------

def cmd_keygen(args) -> int:
    seed = _rng(args, "keygen", args.out.encode()).randbytes(32)
    keys = keygen(seed, args.height)
    did = Did.parse(args.did) if args.did else keys.did
    _save_keys(args.out, keys, did)
    print(did)
    return 0


def cmd_did_register(args) -> int:
    ledger = _load_ledger(args.ledger)
    keys, did = _load_keys(args.keys)
    if did != keys.did:
        raise UsageError("this key file controls an existing DID; it cannot register a new one")
    register_did(ledger, keys)
    _save_keys(args.keys, keys, did)
    ledger.save(args.ledger)
    print(did)
    return 0


def cmd_did_resolve(args) -> int:
    ledger = _load_ledger(args.ledger)
    print(json.dumps(ledger.resolve_did(Did.parse(args.did)).to_json(), indent=2))
    return 0


def cmd_issuer_init(args) -> int:
    ledger = _load_ledger(args.ledger)
    keys, did = _load_keys(args.keys)
    params = PARAMS[args.params]
    register = did not in ledger.did_registry
    ctx = IssuerContext.create(ledger, keys, _rng(args, "issuer-init"), params, register=register)
    _save_issuer(args, ctx)
    ledger.save(args.ledger)
    print(f"{did} epoch {ctx.accumulator.epoch}")
    return 0


def _parse_attrs(pairs: list[str]) -> dict[str, int]:
    out = {}
    for pair in pairs:
        name, eq, value = pair.partition("=")
        if not eq:
            raise UsageError(f"attribute must be name=value, got {pair!r}")
        try:
            out[name] = int(value)
        except ValueError:
            raise UsageError(f"attribute {name} needs an integer value") from None
    return out


def cmd_issue(args) -> int:
    ledger = _load_ledger(args.ledger)
    ctx = _load_issuer(args, ledger)
    cred = ctx.issue(Did.parse(args.subject), args.schema, _parse_attrs(args.attr))
    Path(args.out).write_text(cred.dumps() + "\n")
    _save_issuer(args, ctx)
    ledger.save(args.ledger)
    print(f"slot {cred.slot} epoch {cred.issued_epoch}")
    return 0


def cmd_revoke(args) -> int:
    ledger = _load_ledger(args.ledger)
    ctx = _load_issuer(args, ledger)
    slot = args.slot if args.slot is not None else Credential.from_json(_read_json(args.cred)).slot
    epoch = ctx.revoke(slot)
    _save_issuer(args, ctx)
    ledger.save(args.ledger)
    print(f"epoch {epoch}")
    return 0


def cmd_request(args) -> int:
    nonce = _rng(args, "request", args.out.encode()).randbytes(16)
    req = PresentationRequest(Did.parse(args.issuer), args.schema, args.attribute, args.threshold, nonce,
                              EpochPolicy(args.policy, args.k))
    Path(args.out).write_text(req.dumps() + "\n")
    print(nonce.hex())
    return 0


def cmd_present(args) -> int:
    ledger = _load_ledger(args.ledger)
    keys, did = _load_keys(args.keys)
    cred = Credential.from_json(_read_json(args.cred))
    req = PresentationRequest.from_json(_read_json(args.request))
    obj = _read_json(args.issuer_state)
    acc = Accumulator.from_bytes(bytes.fromhex(obj["accumulator"]))
    params = PARAMS[obj["params"]]
    wallet = HolderWallet(keys, ledger, _rng(args, "present", ledger.to_bytes(), req.nonce), params, did=did)
    # the issuer state stands in for the issuer's witness service
    stale = MembershipWitness(cred.slot, AlgPath(cred.slot, ()), cred.issued_epoch)
    wallet.store(cred, stale, acc.refresh)
    pres = wallet.present(req, cred.id)
    Path(args.out).write_text(pres.dumps() + "\n")
    print(f"epoch {pres.statement.epoch}")
    return 0


def cmd_verify(args) -> int:
    ledger = _load_ledger(args.ledger)
    req = PresentationRequest.from_json(_read_json(args.request))
    pres = Presentation.from_json(_read_json(args.presentation))
    if args.nonce is not None:
        try:
            nonce = bytes.fromhex(args.nonce)
            req = PresentationRequest(req.issuer, req.schema, req.attribute, req.threshold, nonce, req.policy)
        except ValueError:
            raise UsageError("--nonce must be 32 hex digits") from None
    decision = verify_presentation(ledger, req, pres)
    print(decision)
    if not decision:
        print(f"error: {decision.reason}", file=sys.stderr)
    return 0 if decision else 1


def cmd_recovery(args) -> int:
    ledger = _load_ledger(args.ledger)
    keys, signer = _load_keys(args.keys)
    verb = args.verb
    if verb == "configure":
        payload = ConfigureGuardians(signer, tuple(Did.parse(g) for g in args.guardian), args.threshold)
    else:
        if not args.did:
            raise UsageError(f"recovery {verb} needs --did")
        target = Did.parse(args.did)
        if verb in ("initiate", "approve"):
            if args.new_keys:
                new_root = _load_keys(args.new_keys)[0].root
            elif args.new_root:
                new_root = bytes.fromhex(args.new_root)
            elif verb == "approve":
                new_root = ledger.recovery_state(target).proposed_key_root
            else:
                raise UsageError("recovery initiate needs --new-keys or --new-root")
            payload = (InitiateRecovery if verb == "initiate" else ApproveRecovery)(target, new_root)
        elif verb == "cancel":
            payload = CancelRecovery(target)
        else:
            payload = FinalizeRecovery(target)
    ledger.submit(build_tx(payload, signer, keys, ledger.height + DEFAULT_VALIDITY))
    _save_keys(args.keys, keys, signer)
    ledger.save(args.ledger)
    if verb != "configure":
        print(ledger.recovery_state(Did.parse(args.did)).status.value)
    return 0


def cmd_ledger(args) -> int:
    ledger = _load_ledger(args.ledger)
    if args.verb == "dump":
        print(json.dumps(ledger.dump(), indent=2, sort_keys=True))
        return 0
    for _ in range(args.blocks):
        ledger.tick()
    ledger.save(args.ledger)
    print(f"height {ledger.height}")
    return 0


def cmd_scenario(args) -> int:
    try:
        report = run_scenario(args.script, _seed(args))
    except ScenarioError as exc:
        where = f"{args.script}:{exc.line}" if exc.line else args.script
        print(f"{where}: {exc}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps(report.to_json(), indent=2))
    else:
        for line in report.lines():
            print(line)
    if args.report:
        _write_json(args.report, report.to_json())
    return report.exit_code


def cmd_bench(args) -> int:
    names = [args.params] if args.params_given else ["toy", "default"]
    seed = _seed(args) or 0
    results = run_bench(names, args.reps, seed)
    if args.json:
        print(json.dumps([r.to_json() for r in results], indent=2))
    else:
        print(format_table(results))
    return 0


# -- argument parsing ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zkdid", description="Transparent ZK credential toolkit")
    p.add_argument("--seed", type=int, help="fix all randomness (also ZKDID_SEED)")
    p.add_argument("--params", choices=sorted(PARAMS), default=None, help="proof parameter preset")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("keygen", help="create a hash-based key tree")
    s.add_argument("--out", required=True)
    s.add_argument("--height", type=int, default=10)
    s.add_argument("--did", help="bind the keys to an existing DID (recovery or rotation)")
    s.set_defaults(func=cmd_keygen)

    did = sub.add_parser("did", help="DID registry").add_subparsers(dest="verb", required=True)
    s = did.add_parser("register")
    s.add_argument("--keys", required=True)
    s.add_argument("--ledger", required=True)
    s.set_defaults(func=cmd_did_register)
    s = did.add_parser("resolve")
    s.add_argument("--did", required=True)
    s.add_argument("--ledger", required=True)
    s.set_defaults(func=cmd_did_resolve)

    iss = sub.add_parser("issuer", help="issuer setup").add_subparsers(dest="verb", required=True)
    s = iss.add_parser("init")
    for flag in ("--keys", "--ledger", "--state"):
        s.add_argument(flag, required=True)
    s.set_defaults(func=cmd_issuer_init)

    s = sub.add_parser("issue", help="issue a credential")
    for flag in ("--keys", "--ledger", "--state", "--subject", "--out"):
        s.add_argument(flag, required=True)
    s.add_argument("--schema", default="credit/v1")
    s.add_argument("--attr", action="append", required=True, metavar="NAME=VALUE")
    s.set_defaults(func=cmd_issue)

    s = sub.add_parser("revoke", help="revoke a credential")
    for flag in ("--keys", "--ledger", "--state"):
        s.add_argument(flag, required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--slot", type=int)
    g.add_argument("--cred")
    s.set_defaults(func=cmd_revoke)

    s = sub.add_parser("request", help="verifier: create a presentation request")
    for flag in ("--issuer", "--attribute", "--out"):
        s.add_argument(flag, required=True)
    s.add_argument("--schema", default="credit/v1")
    s.add_argument("--threshold", type=int, required=True)
    s.add_argument("--policy", choices=("current_only", "within_k"), default="current_only")
    s.add_argument("--k", type=int, default=0)
    s.set_defaults(func=cmd_request)

    s = sub.add_parser("present", help="holder: prove a request against a credential")
    for flag in ("--keys", "--ledger", "--cred", "--request", "--issuer-state", "--out"):
        s.add_argument(flag, required=True)
    s.set_defaults(func=cmd_present)

    s = sub.add_parser("verify", help="verifier: check a presentation")
    for flag in ("--ledger", "--request", "--presentation"):
        s.add_argument(flag, required=True)
    s.add_argument("--nonce", help="override the request nonce (hex)")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("recovery", help="guardian recovery transactions")
    s.add_argument("verb", choices=("configure", "initiate", "approve", "cancel", "finalize"))
    s.add_argument("--keys", required=True)
    s.add_argument("--ledger", required=True)
    s.add_argument("--did")
    s.add_argument("--guardian", action="append", default=[])
    s.add_argument("--threshold", type=int, default=0)
    s.add_argument("--new-keys")
    s.add_argument("--new-root")
    s.set_defaults(func=cmd_recovery)

    s = sub.add_parser("ledger", help="inspect or advance the ledger")
    s.add_argument("verb", choices=("dump", "tick"))
    s.add_argument("--ledger", required=True)
    s.add_argument("--blocks", type=int, default=1)
    s.set_defaults(func=cmd_ledger)

    s = sub.add_parser("scenario", help="run a scenario script")
    s.add_argument("script", help="script path or bundled name (defi_credit, recovery_3of5)")
    s.add_argument("--report", help="write the JSON report here")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("bench", help="measure prove/verify time and proof size")
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.params_given = args.params is not None
    if args.params is None:
        args.params = "default"
    if args.verbose:
        import logging
        logging.basicConfig(level=logging.DEBUG)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ZkDidError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except (KeyError, ValueError) as exc:
        print(f"error: InvalidInput: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
