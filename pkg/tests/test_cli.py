from __future__ import annotations

import json
import subprocess
import sys

import pytest

from zkdid.cli import main


def run(*argv) -> int:
    return main([str(a) for a in argv])


@pytest.mark.parametrize("name", ["defi_credit", "recovery_3of5"])
def test_bundled_scenarios_pass(name, capsys):
    assert run("scenario", name) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.rstrip().endswith("PASS")


def test_scenario_report_is_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("--seed", 3, "scenario", "recovery_3of5", "--report", a) == 0
    assert run("--seed", 3, "scenario", "recovery_3of5", "--report", b) == 0
    assert a.read_text() == b.read_text()
    assert json.loads(a.read_text())["passed"] is True


def test_empty_script_gives_empty_passing_report(tmp_path, capsys):
    script = tmp_path / "empty.scn"
    script.write_text("# nothing to do\n\n")
    assert run("scenario", script, "--json") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["steps"] == [] and report["passed"] is True


def test_parse_errors_exit_2_with_line(tmp_path, capsys):
    script = tmp_path / "bad.scn"
    script.write_text("create-did alice\nfrobnicate alice\n")
    assert run("scenario", script) == 2
    assert f"{script}:2" in capsys.readouterr().err
    script.write_text("present alice cred req as=pres\n")  # undefined names
    assert run("scenario", script) == 2
    assert run("scenario", tmp_path / "missing.scn") == 2


def test_failed_assertion_exits_1(tmp_path):
    script = tmp_path / "fail.scn"
    script.write_text("params toy\ncreate-did a height=2\ncreate-did b height=2\nissuer-init a\n"
                      "issue a b credit/v1 creditScore=12 as=c\nrequest v a credit/v1 creditScore 10 as=r\n"
                      "present b c r as=p\nverify v r p\nassert-reject\n")
    assert run("scenario", script) == 1


def test_file_pipeline_keygen_to_verify(tmp_path, capsys):
    t = tmp_path
    ledger = t / "ledger.zkdl"
    common = ("--seed", 5, "--params", "toy")
    assert run(*common, "keygen", "--out", t / "bank.json", "--height", 3) == 0
    assert run(*common, "keygen", "--out", t / "alice.json", "--height", 2) == 0
    bank_did = capsys.readouterr().out.split()[0]
    assert run(*common, "did", "register", "--keys", t / "alice.json", "--ledger", ledger) == 0
    alice_did = capsys.readouterr().out.strip()
    assert run(*common, "issuer", "init", "--keys", t / "bank.json", "--ledger", ledger,
               "--state", t / "issuer.json") == 0
    capsys.readouterr()
    assert run(*common, "did", "resolve", "--did", alice_did, "--ledger", ledger) == 0
    assert json.loads(capsys.readouterr().out)["did"] == alice_did
    assert run(*common, "issue", "--keys", t / "bank.json", "--ledger", ledger, "--state", t / "issuer.json",
               "--subject", alice_did, "--attr", "creditScore=12", "--out", t / "cred.json") == 0
    assert run(*common, "request", "--issuer", bank_did, "--attribute", "creditScore", "--threshold", 10,
               "--out", t / "req.json") == 0
    assert run(*common, "present", "--keys", t / "alice.json", "--ledger", ledger, "--cred", t / "cred.json",
               "--request", t / "req.json", "--issuer-state", t / "issuer.json", "--out", t / "pres.json") == 0
    capsys.readouterr()
    assert run("verify", "--ledger", ledger, "--request", t / "req.json", "--presentation", t / "pres.json") == 0
    assert capsys.readouterr().out.strip() == "Accept"
    assert run("verify", "--ledger", ledger, "--request", t / "req.json", "--presentation", t / "pres.json",
               "--nonce", "00" * 16) == 1
    assert "NonceMismatch" in capsys.readouterr().err
    assert run("verify", "--ledger", ledger, "--request", t / "req.json", "--presentation", t / "pres.json",
               "--nonce", "zz") == 2
    # an attribute outside u32 is a protocol error, not a crash
    assert run(*common, "issue", "--keys", t / "bank.json", "--ledger", ledger, "--state", t / "issuer.json",
               "--subject", alice_did, "--attr", f"creditScore={2**32}", "--out", t / "big.json") == 1
    assert "AttributeOutOfRange" in capsys.readouterr().err
    assert run(*common, "revoke", "--keys", t / "bank.json", "--ledger", ledger, "--state", t / "issuer.json",
               "--cred", t / "cred.json") == 0
    capsys.readouterr()
    assert run("verify", "--ledger", ledger, "--request", t / "req.json", "--presentation", t / "pres.json") == 1
    assert "StaleRoot" in capsys.readouterr().err
    assert run("ledger", "tick", "--ledger", ledger, "--blocks", 2) == 0
    assert run("ledger", "dump", "--ledger", ledger) == 0


def test_bench_json_toy(capsys):
    assert run("--params", "toy", "bench", "--reps", 2, "--json") == 0
    [row] = json.loads(capsys.readouterr().out)
    assert row["params"] == "toy" and row["size_stable"] is True
    assert 0 < row["verify_ms"] < row["prove_ms"] and row["proof_bytes"] > 0 and row["ledger_cost_units"] > 0


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "zkdid", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "scenario" in out.stdout
