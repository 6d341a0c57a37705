"""End-to-end checks of the pretrust_cli binary. Usage: cli_e2e.py <path-to-cli>"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

CLI = sys.argv[1]
failures = []


def run(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True)


def check(cond, what):
    if not cond:
        failures.append(what)


def jsonl(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)

    r = run("scenarios")
    check(r.returncode == 0, "scenarios exit code")
    check(len(r.stdout.splitlines()) == 8, "scenarios prints 8 names")

    r = run("scenarios", "--show", "expired_cert")
    check(r.returncode == 0, "scenarios --show exit code")
    config = tmp / "expired.json"
    config.write_text(r.stdout)

    outs = []
    for i in range(2):
        out = tmp / f"cfg{i}.jsonl"
        r = run("run", "--config", str(config), "--out", str(out))
        check(r.returncode == 0, f"run --config exit code ({r.stderr.strip()})")
        outs.append(out.read_bytes())
    check(outs[0] == outs[1], "run --config twice gives identical output")

    a, b = tmp / "a.jsonl", tmp / "b.jsonl"
    run("run", "--scenario", "omit_guarantee", "--seed", "7", "--out", str(a))
    run("run", "--scenario", "omit_guarantee", "--seed", "7", "--out", str(b))
    check(a.read_bytes() == b.read_bytes(), "run --scenario twice gives identical output")

    r = run("run", "--scenario", "happy_path", "--out", "-")
    check(r.returncode == 0, "run to stdout exit code")
    lines = jsonl(r.stdout)
    check(sum(1 for l in lines if l["type"] == "tx") == 12, "12 tx lines")
    summary = [l for l in lines if l["type"] == "summary"]
    check(len(summary) == 1 and summary[0]["conservation_audit"] == "PASS", "summary line")
    check(all(l["guarantee_latency_ms"] == 60 for l in lines if l["type"] == "tx"), "60 ms latencies")

    check(run("run", "--config", str(tmp / "missing.json")).returncode == 2, "missing config exits 2")
    check(run("run", "--bogus").returncode == 2, "unknown flag exits 2")
    check(run("run", "--scenario", "nope").returncode == 2, "unknown scenario exits 2")
    bad = tmp / "bad.json"
    bad.write_text('{"seed": 1, "colour": "red"}')
    check(run("run", "--config", str(bad)).returncode == 2, "unknown config key exits 2")

    snap = tmp / "snap.json"
    r = run("run", "--scenario", "withdrawal_roundtrip", "--out", str(tmp / "w.jsonl"), "--snapshot", str(snap))
    check(r.returncode == 0, "run with snapshot exit code")
    r = run("audit", "--state", str(snap))
    check(r.returncode == 0 and r.stdout.strip() == "PASS", "audit of good snapshot passes")

    state = json.loads(snap.read_text())
    for acct in state["accounts"]:
        if acct["kind"] == "client":
            acct["balance"] += 1
            break
    tampered = tmp / "tampered.json"
    tampered.write_text(json.dumps(state))
    r = run("audit", "--state", str(tampered))
    check(r.returncode == 1 and "token_conservation" in r.stdout, "tampered snapshot names token_conservation")

    garbage = tmp / "garbage.json"
    garbage.write_text('{"type": "snapshot"}')
    check(run("audit", "--state", str(garbage)).returncode == 2, "malformed snapshot exits 2")

for f in failures:
    print("FAIL:", f)
print("cli OK" if not failures else f"{len(failures)} failures")
sys.exit(1 if failures else 0)
