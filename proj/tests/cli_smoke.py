"""End-to-end checks of the polymerlab command-line tool."""
import csv
import filecmp
import json
import pathlib
import subprocess
import sys
import tempfile

import jsonschema

BIN = sys.argv[1]
SCHEMAS = pathlib.Path(sys.argv[2])
RESULTS = json.loads((SCHEMAS / "results.schema.json").read_text())
MANIFEST = json.loads((SCHEMAS / "manifest.schema.json").read_text())
failures = []


def run(args, expect=0):
    p = subprocess.run([BIN, *args], capture_output=True, text=True)
    if p.returncode != expect:
        failures.append(f"{' '.join(args)}: exit {p.returncode}, wanted {expect}\n{p.stderr}")
    return p


def check_dir(out):
    out = pathlib.Path(out)
    manifest = json.loads((out / "manifest.json").read_text())
    jsonschema.validate(manifest, MANIFEST)
    if manifest["complete"]:
        jsonschema.validate(json.loads((out / "results.json").read_text()), RESULTS)
    for name in manifest["outputs"]:
        if name.endswith(".csv"):
            with open(out / name, newline="") as f:
                rows = list(csv.reader(f))
            if not rows or not rows[0] or any(not c or c[0].isdigit() or c[0] == "-" for c in rows[0]):
                failures.append(f"{out / name}: missing header row")
            for r in rows[1:]:
                if len(r) != len(rows[0]):
                    failures.append(f"{out / name}: ragged row {r}")
                    break
    return manifest


SMALL = {
    "lambda": ["--env", "two_point", "--env.a", "-1", "--env.b", "2", "--env.p", "0.3", "--beta", "0.7"],
    "beta2": ["--walk", "srw", "--d", "3", "--env", "gaussian"],
    "evolve": ["--d", "2", "--n", "6", "--R", "20"],
    "tail": ["--d", "3", "--field.nmax", "15", "--R", "60"],
    "overshoot": ["--d", "3", "--beta", "0.8", "--field.nmax", "20", "--run.A", "1.5,3", "--R", "50"],
    "localize": ["--d", "3", "--beta", "0.8", "--field.nmax", "20", "--run.u", "1.5", "--R", "50"],
    "second-moment": ["--d", "3", "--beta", "0.2", "--n", "8", "--R", "200"],
    "critical-growth": ["--d", "3", "--walk.horizon", "1000", "--run.n_lo", "10", "--run.n_hi", "1000",
                        "--run.points", "10"],
    "moment-growth": ["--d", "3", "--run.n_grid", "4,8", "--R", "100"],
    "fluct": ["--d", "2", "--beta", "0.2", "--run.n_grid", "4,8,16", "--R", "20"],
    "spine-check": ["--d", "1", "--n", "2", "--env", "two_point", "--R", "200"],
    "oracle-check": ["--d", "1", "--n", "3"],
}

with tempfile.TemporaryDirectory() as tmp:
    tmp = pathlib.Path(tmp)
    for sub, args in SMALL.items():
        out = tmp / sub
        run([sub, *args, "--out", str(out)])
        check_dir(out)

    b2 = json.loads((tmp / "beta2" / "results.json").read_text())
    rec = next(r for r in b2 if r["quantity"] == "beta2")
    if not (rec["residual"] <= 1e-10 and rec["value"] > 0):
        failures.append(f"beta2 record {rec}")

    run(["tail", "--beta", "-1", "--out", str(tmp / "bad")], expect=2)
    p = run(["tail", "--beta", "-1", "--out", str(tmp / "bad")], expect=2)
    if "run.beta" not in p.stderr:
        failures.append("negative beta message does not name run.beta: " + p.stderr)
    run(["tail", "--env.famly", "gaussian"], expect=2)
    cfg = tmp / "typo.cfg"
    cfg.write_text("run.bta = 0.3\n")
    p = run(["tail", "--config", str(cfg)], expect=2)
    if "run.bta" not in p.stderr:
        failures.append("unknown config key not named: " + p.stderr)
    run(["oracle-check", "--d", "3", "--n", "30", "--out", str(tmp / "budget")], expect=4)

    # interrupted + resumed equals uninterrupted, across worker counts
    base = ["spine-check", "--d", "2", "--n", "4", "--beta", "0.5", "--R", "120", "--seed", "3"]
    run([*base, "--out", str(tmp / "full"), "--workers", "1"])
    run([*base, "--out", str(tmp / "part"), "--workers", "3", "--stop-after", "150"])
    m = check_dir(tmp / "part")
    if m["complete"]:
        failures.append("stop-after run claims completion")
    run([*base, "--out", str(tmp / "part"), "--workers", "2", "--resume", str(tmp / "part" / "checkpoint.bin")])
    for name in ["spine.csv", "plain.csv", "spine_battery.csv", "results.json"]:
        if not filecmp.cmp(tmp / "full" / name, tmp / "part" / name, shallow=False):
            failures.append(f"resumed {name} differs from the uninterrupted run")

    # manifest replay
    run(["spine-check", "--config", str(tmp / "full" / "manifest.json"), "--out", str(tmp / "replay")])
    if not filecmp.cmp(tmp / "full" / "spine.csv", tmp / "replay" / "spine.csv", shallow=False):
        failures.append("manifest replay differs")

    # corrupt checkpoint
    data = bytearray((tmp / "part" / "checkpoint.bin").read_bytes())
    data[len(data) // 2] ^= 0x01
    (tmp / "bad.bin").write_bytes(bytes(data))
    p = run([*base, "--out", str(tmp / "c"), "--resume", str(tmp / "bad.bin")], expect=3)
    if "checksum" not in p.stderr:
        failures.append("corrupt checkpoint message lacks checksum diagnostic: " + p.stderr)

if failures:
    print("\n".join(failures))
    sys.exit(1)
print("cli smoke: all checks passed")
