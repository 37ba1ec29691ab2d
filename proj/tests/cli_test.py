#!/usr/bin/env python3
"""End-to-end checks of the eivpred command line: exit codes, reproducible output, golden transform."""

import json
import pathlib
import subprocess
import sys
import tempfile

CLI = pathlib.Path(sys.argv[1])
ROOT = pathlib.Path(sys.argv[2])
failures = []


def run(*args, cwd=None):
    return subprocess.run([str(CLI), *map(str, args)], capture_output=True, text=True, cwd=cwd)


def expect(name, cond, detail=""):
    print(f"{'ok  ' if cond else 'FAIL'} {name}" + (f": {detail}" if detail and not cond else ""))
    if not cond:
        failures.append(name)


def write(path, obj):
    path.write_text(json.dumps(obj, indent=2))
    return path


with tempfile.TemporaryDirectory() as tmp:
    tmp = pathlib.Path(tmp)
    configs = ROOT / "configs"

    # Golden transform output.
    r = run("transform", "--config", configs / "quadratic_transform.json")
    golden = (ROOT / "tests" / "golden" / "quadratic_transform.json").read_text()
    expect("transform exit code", r.returncode == 0, r.stderr)
    expect("transform matches golden file", r.stdout == golden)

    # simulate: byte-identical reruns, seed override changes the data.
    for tag in ("a", "b"):
        r = run("simulate", "--config", configs / "linear_simulate.json", "--out", tmp / f"sim_{tag}")
        expect(f"simulate run {tag}", r.returncode == 0, r.stderr)
    a = (tmp / "sim_a" / "dataset.csv").read_bytes()
    expect("simulate is reproducible", a == (tmp / "sim_b" / "dataset.csv").read_bytes())
    expect("simulate sidecar is reproducible",
           (tmp / "sim_a" / "dataset.json").read_bytes() == (tmp / "sim_b" / "dataset.json").read_bytes())
    r = run("simulate", "--config", configs / "linear_simulate.json", "--seed", 43, "--out", tmp / "sim_c")
    expect("seed override changes the data", r.returncode == 0 and (tmp / "sim_c" / "dataset.csv").read_bytes() != a)
    header = a.decode().splitlines()[0]
    expect("csv header", header.startswith("y_1,z_1,x_1,hidden_xi_1"), header)
    expect("csv rows", len(a.decode().splitlines()) == 1001)

    # fit-predict on the simulated data.
    cfg = json.loads((configs / "linear_fit_predict.json").read_text())
    cfg["data"] = str(tmp / "sim_a" / "dataset.json")
    r = run("fit-predict", "--config", write(tmp / "fp.json", cfg), "--out", tmp / "fp")
    expect("fit-predict exit code", r.returncode == 0, r.stderr)
    if r.returncode == 0:
        out = json.loads(r.stdout)
        expect("fit-predict predictions", len(out["predictions"]) == 2)
        expect("fit-predict regions", len(out["predictions"][0]["regions"]) == 4)
        expect("fit-predict writes a file", (tmp / "fp" / "fit_predict.json").exists())
    cfg["data"] = str(tmp / "sim_a" / "dataset.csv")
    r = run("fit-predict", "--config", write(tmp / "fp_csv_nofamily.json", cfg))
    expect("bare CSV without family exits 2", r.returncode == 2, f"{r.returncode} {r.stderr}")
    cfg["family"] = "linear-mv"
    r = run("fit-predict", "--config", write(tmp / "fp_csv.json", cfg))
    expect("fit-predict accepts a bare CSV", r.returncode == 0, r.stderr)

    # experiment: identical reports regardless of thread count; --check passes.
    reports = []
    for threads in (1, 4):
        d = tmp / f"exp_{threads}"
        r = run("experiment", "--config", configs / "smoke_consistency.json", "--threads", threads, "--out", d,
                "--check")
        expect(f"experiment threads={threads}", r.returncode == 0, r.stderr + r.stdout)
        expect(f"experiment check line threads={threads}", "[PASS]" in r.stdout, r.stdout)
        reports.append(((d / "report.json").read_bytes(), (d / "report.csv").read_bytes()))
    expect("experiment report independent of threads", reports[0] == reports[1])

    # Exit code 1: a check that cannot pass.
    exp = json.loads((configs / "smoke_consistency.json").read_text())
    exp["check"] = {"coefficient_error_max": 1e-12}
    r = run("experiment", "--config", write(tmp / "fail.json", exp), "--check", "--out", tmp / "fail")
    expect("failed check exits 1", r.returncode == 1, f"{r.returncode} {r.stderr}")
    expect("failed check prints FAIL", "[FAIL]" in r.stdout, r.stdout)

    # Exit code 2: configuration and spec errors.
    bad = json.loads((configs / "linear_simulate.json").read_text())
    bad["bogus"] = 1
    r = run("simulate", "--config", write(tmp / "bad_key.json", bad))
    expect("unknown config key exits 2", r.returncode == 2, f"{r.returncode} {r.stderr}")
    bad = json.loads((configs / "linear_simulate.json").read_text())
    bad["spec"]["errors"]["sigma_eps_delta"] = [[5.0]]
    r = run("simulate", "--config", write(tmp / "bad_spec.json", bad), "--out", tmp / "bad")
    expect("invalid spec exits 2", r.returncode == 2, f"{r.returncode} {r.stderr}")
    expect("invalid spec is explained", "PSD" in r.stderr, r.stderr)
    r = run("transform", "--config", tmp / "missing.json")
    expect("missing config exits 2", r.returncode == 2, f"{r.returncode} {r.stderr}")
    (tmp / "garbage.json").write_text("{not json")
    r = run("transform", "--config", tmp / "garbage.json")
    expect("malformed JSON exits 2", r.returncode == 2, f"{r.returncode} {r.stderr}")
    r = run("frobnicate")
    expect("unknown subcommand is rejected", r.returncode != 0)

    cfg["data"] = str(tmp / "nowhere.csv")
    r = run("fit-predict", "--config", write(tmp / "fp_missing.json", cfg))
    expect("missing data file exits 2", r.returncode == 2, f"{r.returncode} {r.stderr}")

    # Exit code 3: runtime failure (too few observations to fit).
    (tmp / "one_row.csv").write_text("y_1,z_1,x_1\n1.0,0.5,2.0\n")
    cfg["data"] = str(tmp / "one_row.csv")
    r = run("fit-predict", "--config", write(tmp / "fp_tiny.json", cfg))
    expect("insufficient data exits 3", r.returncode == 3, f"{r.returncode} {r.stderr}")

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
