import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from ehcrn.analytic import DEFAULT_TOL
from ehcrn.cli import EXIT_BREACH, EXIT_OK, EXIT_USAGE, main

ROOT = Path(__file__).resolve().parents[1]
MANIFESTS = ROOT / "manifests"

SINGLE_SPEC = """
[spec]
mode = "cooperative"
topology = { kind = "single" }
links = { p_pspd = 0.3, p_psss = 0.4, p_sspd = 0.7, p_sssd = 0.7 }
energy = { lambda_ep = 1.0, lambda_es = 1.0 }
"""

REGION = """
name = "tiny"
kind = "Region"
""" + SINGLE_SPEC + """
[region]
lambda_p_steps = 41
a_steps = 11

[[curve]]
label = "cooperative"

[[curve]]
label = "non_cooperative"
mode = "non_cooperative"

[[check]]
type = "dominates"
upper = "cooperative"
lower = "non_cooperative"
"""

HYBRID = """
name = "hyb"
kind = "Hybrid"
seed = 3

[hybrid]
slots = 20000
psi = [0.2]
policies = ["hybrid", "conventional_cooperation"]
lambda_p = [0.1, 0.5]
"""


def command_for(path: Path) -> str:
    kind = next(line.split("=", 1)[1].strip().strip('"') for line in path.read_text().splitlines()
                if line.startswith("kind"))
    return {"Region": "region", "Crossover": "crossover", "SimBoundary": "validate",
            "Hybrid": "hybrid", "Sweep": "sweep"}[kind]


def write(tmp_path, text, name="m.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(args, out):
    return main([*map(str, args), "--out", str(out), "-q"])


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_region_run_writes_files(tmp_path):
    m = write(tmp_path, REGION)
    assert run(["region", "--manifest", m], tmp_path / "o") == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert names == sorted([
        "tiny_cooperative.csv", "tiny_cooperative.json",
        "tiny_non_cooperative.csv", "tiny_non_cooperative.json", "tiny_summary.json",
    ])
    summary = json.loads((tmp_path / "o" / "tiny_summary.json").read_text())
    assert summary["passed"] is True
    coop = read_csv(tmp_path / "o" / "tiny_cooperative.csv")
    nonc = read_csv(tmp_path / "o" / "tiny_non_cooperative.csv")
    assert len(coop) == 41
    for a, b in zip(coop, nonc):
        assert a["lambda_p"] == b["lambda_p"]
        assert float(a["lambda_s_max"]) >= float(b["lambda_s_max"]) - 2 * DEFAULT_TOL


def test_failing_check_exits_one(tmp_path):
    text = REGION.replace('upper = "cooperative"\nlower = "non_cooperative"',
                          'upper = "non_cooperative"\nlower = "cooperative"')
    m = write(tmp_path, text)
    assert run(["region", "--manifest", m], tmp_path / "o") == EXIT_BREACH
    summary = json.loads((tmp_path / "o" / "tiny_summary.json").read_text())
    assert summary["passed"] is False


@pytest.mark.parametrize(
    "text",
    [
        "this is = = not toml",
        'name = "x"\nkind = "Banana"\n',
        'kind = "Region"\n',
        'name = "a/b"\nkind = "Region"\n',
    ],
    ids=["syntax", "kind", "no-name", "path-name"],
)
def test_bad_manifest_exits_two(tmp_path, text):
    assert run(["region", "--manifest", write(tmp_path, text)], tmp_path / "o") == EXIT_USAGE


def test_missing_manifest_exits_two(tmp_path):
    assert run(["region", "--manifest", tmp_path / "nope.toml"], tmp_path / "o") == EXIT_USAGE


def test_usage_errors_exit_two(tmp_path):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["region"]) == EXIT_USAGE
    m = write(tmp_path, REGION)
    assert run(["region", "--manifest", m, "--jobs", "0"], tmp_path / "o") == EXIT_USAGE
    assert run(["region", "--manifest", m, "--set", "novalue"], tmp_path / "o") == EXIT_USAGE


def test_command_kind_mismatch(tmp_path):
    m = write(tmp_path, REGION)
    assert run(["hybrid", "--manifest", m], tmp_path / "o") == EXIT_USAGE


def test_invalid_spec_exits_two(tmp_path):
    m = write(tmp_path, REGION)
    assert run(["region", "--manifest", m, "--set", "spec.links.p_pspd=1.5"], tmp_path / "o") == EXIT_USAGE


def test_validation_slot_floor(tmp_path):
    text = 'name = "v"\nkind = "SimBoundary"\n' + SINGLE_SPEC + "\n[service_rates]\npoints = 1\nslots = 50000\n"
    assert run(["validate", "--manifest", write(tmp_path, text)], tmp_path / "o") == EXIT_USAGE


def test_empty_grids_exit_two(tmp_path):
    m = write(tmp_path, HYBRID)
    assert run(["hybrid", "--manifest", m, "--set", "hybrid.lambda_p=[]"], tmp_path / "o") == EXIT_USAGE
    m2 = write(tmp_path, REGION, "r.toml")
    assert run(["region", "--manifest", m2, "--set", "region.lambda_p=[]"], tmp_path / "o") == EXIT_USAGE


def test_set_override_changes_output(tmp_path):
    m = write(tmp_path, REGION)
    run(["region", "--manifest", m], tmp_path / "a")
    run(["region", "--manifest", m, "--set", "region.lambda_p_steps=11"], tmp_path / "b")
    assert len(read_csv(tmp_path / "a" / "tiny_cooperative.csv")) == 41
    assert len(read_csv(tmp_path / "b" / "tiny_cooperative.csv")) == 11


def test_reruns_are_byte_identical(tmp_path):
    m = write(tmp_path, HYBRID)
    for out in ("a", "b"):
        assert run(["hybrid", "--manifest", m], tmp_path / out) == EXIT_OK
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_seed_flag(tmp_path):
    m = write(tmp_path, HYBRID)
    run(["hybrid", "--manifest", m], tmp_path / "a")
    run(["hybrid", "--manifest", m, "--seed", "3"], tmp_path / "b")
    run(["hybrid", "--manifest", m, "--seed", "4"], tmp_path / "c")
    a, b, c = ((tmp_path / d / "hyb.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_jobs_do_not_change_results(tmp_path):
    m = write(tmp_path, HYBRID)
    run(["hybrid", "--manifest", m, "--jobs", "1"], tmp_path / "a")
    run(["hybrid", "--manifest", m, "--jobs", "2"], tmp_path / "b")
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_zero_underlay_power_via_override(tmp_path):
    m = write(tmp_path, HYBRID)
    assert run(["hybrid", "--manifest", m, "--set", "hybrid.psi=[0.0]"], tmp_path / "o") == EXIT_OK
    rows = read_csv(tmp_path / "o" / "hyb.csv")
    su = {(r["policy"], r["lambda_p"]): float(r["su_throughput"]) for r in rows}
    for lp in ("0.1", "0.5"):
        assert su[("hybrid", lp)] == pytest.approx(su[("conventional_cooperation", lp)], abs=0.005)


def test_crossover_values(tmp_path):
    out = tmp_path / "o"
    assert run(["crossover", "--manifest", MANIFESTS / "crossover_lambda_es.toml"], out) == EXIT_OK
    vals = [float(r["value"]) for r in read_csv(out / "crossover_lambda_es.csv")]
    assert vals[0] == pytest.approx(0.15, abs=0.005)
    assert vals[1] == pytest.approx(0.075, abs=0.005)
    assert vals[2] == pytest.approx(0.0, abs=1e-12)


def test_crossover_decreases_with_cluster_size(tmp_path):
    out = tmp_path / "o"
    assert run(["crossover", "--manifest", MANIFESTS / "crossover_vs_k.toml"], out) == EXIT_OK
    rows = [r for r in read_csv(out / "crossover_vs_k.csv") if r["curve"] == "sd0.6"]
    vals = [float(r["value"]) for r in rows]
    assert [int(r["k"]) for r in rows] == list(range(1, 21))
    positive = [v for v in vals if v > 0]
    assert all(a > b for a, b in zip(positive, positive[1:]))


def test_sweep_prefixes_points(tmp_path):
    out = tmp_path / "o"
    assert run(["sweep", "--manifest", MANIFESTS / "sweep_lambda_es.toml"], out) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    for label in ("es0.6", "es0.7", "es0.8"):
        assert f"sweep_lambda_es_{label}_cooperative.csv" in names


def test_console_script_entry_point(tmp_path):
    m = write(tmp_path, REGION)
    proc = subprocess.run(
        [sys.executable, "-m", "ehcrn.cli", "region", "--manifest", str(m), "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr


@pytest.mark.slow
@pytest.mark.parametrize(
    "path",
    sorted(p for p in MANIFESTS.glob("*.toml") if not p.name.startswith("validate_")),
    ids=lambda p: p.stem,
)
def test_shipped_manifests_pass(tmp_path, path):
    # the validation manifests run under the acceptance tests
    assert run([command_for(path), "--manifest", path, "--jobs", "2"], tmp_path) == EXIT_OK
