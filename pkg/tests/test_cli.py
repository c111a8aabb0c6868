import csv
import io
import json

import numpy as np
import pytest

from anisofem import cli
from anisofem.errors import SolverFailure
from anisofem.mesh import read_mesh, validate_mesh


def run(args, capsys=None):
    code = cli.main([str(a) for a in args])
    return code


def test_generate_mesh(tmp_path):
    out = tmp_path / "m.json"
    assert run(["generate-mesh", "--kind", "uniform", "--n", 4, "--out", out]) == 0
    assert read_mesh(out).n_triangles == 32
    out2 = tmp_path / "s.json"
    assert run(["generate-mesh", "--kind", "shishkin", "--n", 16, "--epsilon", 1e-3, "--sigma", 2, "--out", out2]) == 0
    assert validate_mesh(read_mesh(out2)).ok
    assert run(["generate-mesh", "--n", 0, "--out", tmp_path / "x.json"]) == 2


def test_estimate_zero_problem(tmp_path):
    code = run(["estimate", "--reaction", "zero", "--epsilon", 1, "--n", 4, "--out-dir", tmp_path])
    assert code == 0
    rec = json.loads((tmp_path / "run.json").read_text())
    for rep in rec["estimators"].values():
        assert rep["total"] == 0.0
    assert rec["energy_error"] == 0.0
    assert set(rec["wall_times"]) >= {"mesh", "solve", "estimate"}
    assert rec["config"]["problem"]["reaction"]["id"] == "zero"
    assert rec["version"]


def test_estimate_shishkin_benchmark_all_schemes(tmp_path):
    cfg = {
        "problem": {"epsilon": 1e-2, "reaction": {"id": "linear", "c": 1.0}, "solution": "layer"},
        "mesh": {"generator": "shishkin", "n": 16, "sides": "both"},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert run(["estimate", "--config", path, "--out-dir", tmp_path / "o"]) == 0
    rec = json.loads((tmp_path / "o" / "run.json").read_text())
    assert set(rec["estimators"]) == {"NewEtaH", "OldEtaH2h", "SplitShortLong"}
    assert all(v > 0 for v in rec["effectivity"].values())
    header = (tmp_path / "o" / "estimator_NewEtaH.csv").read_text().splitlines()[0]
    assert header == "node_id,H_z,h_z,area,class,J_ring,J_long,jump_term,interior_term"


def test_config_errors(tmp_path):
    assert run(["estimate", "--reaction", "unknown", "--out-dir", tmp_path]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(["estimate", "--config", bad, "--out-dir", tmp_path]) == 2
    assert run(["estimate", "--config", tmp_path / "missing.json"]) == 2
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": {"solution": "nope"}}))
    assert run(["estimate", "--config", cfg, "--out-dir", tmp_path]) == 2


def test_flag_precedence():
    args = cli.build_parser().parse_args(["estimate", "--epsilon", "0.5"])
    cfg = cli.ExperimentConfig.resolve({"problem": {"epsilon": 0.1, "solution": "layer"}}, cli._flag_overrides(args))
    assert cfg.problem["epsilon"] == 0.5  # flag beats file
    assert cfg.problem["solution"] == "layer"  # file beats default
    assert cfg.mesh["generator"] == "uniform"  # default


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise SolverFailure("forced")

    monkeypatch.setattr(cli, "solve", broken)
    assert run(["estimate", "--out-dir", tmp_path]) == 3


def test_verify_trace_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(["verify-trace", "--families", "divergence", "--aspects", "1", "--out", a]) == 0
    assert run(["verify-trace", "--families", "divergence", "--aspects", "1", "--out", b]) == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert rep["families"]["divergence"]["max_scaled_residual"] <= 1e-12
    assert rep["seed"] == 7
    assert run(["verify-trace", "--families", "bogus"]) == 2


def test_sweep_rows(tmp_path):
    code = run(
        [
            "sweep", "--solution", "layer", "--mesh-kind", "shishkin",
            "--sweep-epsilon", "0.1,0.01", "--sweep-n", "8,16", "--out-dir", tmp_path,
        ]
    )
    assert code == 0
    rows = list(csv.DictReader(io.StringIO((tmp_path / "sweep.csv").read_text())))
    assert tuple(rows[0]) == cli.SWEEP_COLUMNS
    for scheme in ("NewEtaH", "OldEtaH2h", "SplitShortLong"):
        assert sum(r["scheme"] == scheme for r in rows) == 4
    eff = np.array([float(r["effectivity"]) for r in rows])
    assert np.all(np.isfinite(eff)) and np.all(eff > 0)
    assert len(list((tmp_path / "points").glob("*.json"))) == 4


def test_sweep_empty_list(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sweep": {"epsilon": [], "n": [8]}}))
    assert run(["sweep", "--config", cfg, "--out-dir", tmp_path]) == 2


def test_compare_weights_and_solve(tmp_path):
    assert run(["compare-weights", "--mesh-kind", "shishkin", "--solution", "layer", "--epsilon", 1e-2, "--n", 16, "--out-dir", tmp_path]) == 0
    body = json.loads((tmp_path / "compare_weights.json").read_text())
    assert body["comparison"]["jump_total_new"] <= body["comparison"]["jump_total_old"]
    assert run(["solve", "--n", 4, "--out-dir", tmp_path]) == 0
    assert len(json.loads((tmp_path / "solution.json").read_text())["nodal_values"]) == 25
