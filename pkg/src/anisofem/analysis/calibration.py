"""Benchmarks whose observed maxima are frozen as regression thresholds.

A threshold is ``factor`` times the largest ratio seen on a fixed, seeded
benchmark. The thresholds live in a JSON file that tests read back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .. import __version__
from ..fem import solve
from ..mesh.generators import generate_shishkin
from ..mesh.patches import build_patches
from ..problems import BoundaryLayer, linear_problem
from .fuzz import FuzzConfig, calibration_from_report, run_fuzz
from .representation import verify_error_representation
from .structured import check_gbar_bounds, detect_structure

REPRESENTATION_CASES = ((1e-1, 16), (1e-1, 32), (1e-2, 16), (1e-2, 32))
GBAR_CASES = ((1e-1, 16), (1e-2, 16))
DEFAULT_FACTOR = 1.5


def shishkin_benchmark(epsilon: float, n: int):
    """Layer-adapted mesh, patches, problem and discrete solution for one benchmark point."""
    mesh = generate_shishkin(n, epsilon, sides="both")
    spec = linear_problem(BoundaryLayer(epsilon), epsilon)
    sol = solve(mesh, spec)
    return mesh, build_patches(mesh), spec, sol


def representation_sweep(cases=REPRESENTATION_CASES) -> list[dict]:
    rows = []
    for eps, n in cases:
        mesh, patches, spec, sol = shishkin_benchmark(eps, n)
        rec = verify_error_representation(mesh, patches, sol, spec)
        rows.append({"epsilon": eps, "n": n, **rec.to_dict()})
    return rows


@dataclass(frozen=True)
class _Field:
    """Smooth test field for the line-average bounds."""

    kind: str

    def value(self, x, y):
        if self.kind == "x":
            return np.asarray(x, dtype=float) + 0.0 * y
        return np.sin(np.pi * x) * np.cos(3.0 * y)

    def grad(self, x, y):
        if self.kind == "x":
            return np.ones_like(x, dtype=float), np.zeros_like(y, dtype=float)
        return np.pi * np.cos(np.pi * x) * np.cos(3.0 * y), -3.0 * np.sin(np.pi * x) * np.sin(3.0 * y)


GBAR_FIELDS = (_Field("x"), _Field("sincos"))


def gbar_sweep(cases=GBAR_CASES) -> dict:
    """Largest ratios of both line-average bounds over all free nodes of the benchmark meshes."""
    worst1 = worst2 = 0.0
    count = 0
    for eps, n in cases:
        mesh = generate_shishkin(n, eps, sides="both")
        grid = detect_structure(mesh)
        for p in build_patches(mesh):
            if mesh.is_boundary_node[p.node_id]:
                continue
            for g in GBAR_FIELDS:
                rec = check_gbar_bounds(p, grid, g)
                worst1 = max(worst1, rec.ratio1)
                worst2 = max(worst2, rec.ratio2)
                count += 1
    return {"count": count, "max_ratio1": worst1, "max_ratio2": worst2}


def build_calibration(fuzz_config: FuzzConfig | None = None, factor: float = DEFAULT_FACTOR) -> dict:
    """Run every calibration benchmark and return the frozen-threshold document."""
    config = fuzz_config or FuzzConfig()
    report = run_fuzz(config)
    out = {"version": __version__, "factor": factor, "seed": config.seed}
    out["families"] = calibration_from_report(report, factor)
    rep = representation_sweep()
    rep_max = max(r["ratio"] for r in rep)
    out["representation_ratio"] = {"observed_max": rep_max, "threshold": factor * rep_max}
    gb = gbar_sweep()
    out["gbar"] = {
        name: {"observed_max": gb[key], "threshold": factor * gb[key]}
        for name, key in (("bound1", "max_ratio1"), ("bound2", "max_ratio2"))
    }
    return out


def calibration_json(calibration: dict) -> str:
    return json.dumps(calibration, indent=2, sort_keys=True) + "\n"


def load_calibration(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
