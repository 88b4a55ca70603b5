"""Benchmark harness: prove/verify time, proof size and ledger cost units."""

from __future__ import annotations

import random
import statistics
import time
from dataclasses import asdict, dataclass

from .identity import keygen
from .protocol import HolderWallet, IssuerContext, Verifier, register_did
from .stark import DEFAULT_PARAMS, TOY_PARAMS, ProofParams, encode_proof, prove, verify
from .air import PredicateWitness
from .vdr import Ledger

# credit/v1 values that fit each configuration's range width
SAMPLE = {"default": (750, 700), "toy": (12, 10)}


@dataclass
class BenchResult:
    params: str
    trace_length: int
    reps: int
    prove_ms: float
    verify_ms: float
    proof_bytes: int
    size_stable: bool
    ledger_cost_units: int

    def to_json(self) -> dict:
        return asdict(self)


def bench_one(name: str, params: ProofParams, reps: int = 3, seed: int = 0) -> BenchResult:
    ledger = Ledger()
    rng = random.Random(seed)
    issuer = IssuerContext.create(ledger, keygen(rng.randbytes(32), 4), random.Random(seed + 1), params)
    wallet = HolderWallet(keygen(rng.randbytes(32), 2), ledger, random.Random(seed + 2), params)
    register_did(ledger, wallet.keys)
    ledger.tick()
    value, threshold = SAMPLE[name]
    cred = issuer.issue(wallet.did, "credit/v1", {"creditScore": value})
    wallet.store(cred, issuer.witness(cred.slot), issuer.refresh)
    req = Verifier(ledger, random.Random(seed + 3), params).request(issuer.did, "credit/v1", "creditScore",
                                                                    threshold)
    stmt = wallet.present(req, seed=seed).statement
    wit = PredicateWitness(cred.values, cred.salt, cred.slot, issuer.witness(cred.slot).path)

    prove_times, verify_times, sizes = [], [], set()
    for _ in range(reps):
        t0 = time.perf_counter()
        proof = prove(stmt, wit, params, seed)
        t1 = time.perf_counter()
        ok = verify(stmt, req.nonce, proof, params)
        t2 = time.perf_counter()
        if not ok:
            raise RuntimeError("benchmark proof failed to verify")
        prove_times.append((t1 - t0) * 1e3)
        verify_times.append((t2 - t1) * 1e3)
        sizes.add(len(encode_proof(proof)))
    return BenchResult(name, params.trace_length, reps, round(statistics.median(prove_times), 2),
                       round(statistics.median(verify_times), 2), max(sizes), len(sizes) == 1,
                       ledger.cost_units)


def run_bench(names: list[str], reps: int = 3, seed: int = 0) -> list[BenchResult]:
    table = {"default": DEFAULT_PARAMS, "toy": TOY_PARAMS}
    return [bench_one(n, table[n], reps, seed) for n in names]


def format_table(results: list[BenchResult]) -> str:
    header = ("params", "N", "reps", "prove ms", "verify ms", "proof bytes", "stable", "cost units")
    rows = [header] + [(r.params, str(r.trace_length), str(r.reps), f"{r.prove_ms:.2f}", f"{r.verify_ms:.2f}",
                        str(r.proof_bytes), "yes" if r.size_stable else "no", str(r.ledger_cost_units))
                       for r in results]
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows)
