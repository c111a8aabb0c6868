"""Command-line harness: mesh generation, solves, estimates, verification suites and sweeps.

Configuration is a JSON document (see :data:`DEFAULTS`). Values are resolved
with the precedence command-line flags > config file > defaults. Every report
embeds the resolved config and a version string; report bodies carry no
timestamps.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import (
    AnisoFemError,
    ConfigError,
    InvalidParams,
    MeshIOError,
    ParseError,
)
from .estimator import WeightScheme, compare_weights, quadrature_term, total_estimator
from .fem import energy_error, solve, write_solution
from .mesh.generators import generate_patch, generate_shishkin, generate_uniform
from .mesh.io import read_mesh, write_mesh
from .mesh.patches import build_patches
from .mesh.triangulation import Triangulation
from .problems import (
    BoundaryLayer,
    ProblemSpec,
    SinSin,
    ZeroSolution,
    cubic_problem,
    linear_problem,
    zero_problem,
)
from .quadrature import triangle_rule

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS: dict[str, Any] = {
    "problem": {"epsilon": 1.0, "reaction": {"id": "linear", "c": 1.0}, "solution": "sinsin"},
    "mesh": {"generator": "uniform", "n": 16, "sigma": 2.0, "sides": "both", "path": None},
    "estimator": {"schemes": [s.value for s in WeightScheme], "quadrature_degree": 6},
    "sweep": None,
    "output": {"directory": "out", "formats": ["json", "csv"]},
}

SOLUTIONS: dict[str, Callable[[float], Any]] = {
    "sinsin": lambda eps: SinSin(),
    "layer": BoundaryLayer,
    "zero": lambda eps: ZeroSolution(),
}

REACTIONS = ("linear", "cubic", "zero")
GENERATORS = ("uniform", "shishkin", "file")
FORMATS = ("json", "csv")

SWEEP_COLUMNS = (
    "epsilon",
    "n",
    "scheme",
    "n_nodes",
    "energy_error",
    "estimator",
    "effectivity",
    "jump_total",
    "interior_total",
    "quad_total",
)


def version_string() -> str:
    """``git describe`` output when run from a checkout, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# ----------------------------------------------------------------------
# configuration


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class ExperimentConfig:
    problem: dict
    mesh: dict
    estimator: dict
    sweep: dict | None
    output: dict

    @classmethod
    def resolve(cls, file_values: dict | None = None, flags: dict | None = None) -> "ExperimentConfig":
        data = _merge(DEFAULTS, file_values or {})
        data = _merge(data, flags or {})
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        p = self.problem
        try:
            eps = float(p["epsilon"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("problem.epsilon must be a number") from None
        if not 0.0 < eps <= 1.0:
            raise ConfigError(f"problem.epsilon must lie in (0, 1], got {eps}")
        reaction = p.get("reaction")
        if isinstance(reaction, str):
            reaction = p["reaction"] = {"id": reaction}
        if not isinstance(reaction, dict) or reaction.get("id") not in REACTIONS:
            raise ConfigError(f"unknown reaction {reaction!r}; registered: {list(REACTIONS)}")
        if p.get("solution") is not None and p["solution"] not in SOLUTIONS:
            raise ConfigError(f"unknown solution {p['solution']!r}; registered: {sorted(SOLUTIONS)}")
        m = self.mesh
        if m.get("generator") not in GENERATORS:
            raise ConfigError(f"unknown mesh generator {m.get('generator')!r}; registered: {list(GENERATORS)}")
        if m["generator"] == "file" and not m.get("path"):
            raise ConfigError("mesh.generator 'file' needs mesh.path")
        schemes = self.estimator.get("schemes") or []
        if not schemes:
            raise ConfigError("estimator.schemes must be nonempty")
        for s in schemes:
            try:
                WeightScheme.parse(s)
            except (ValueError, KeyError):
                raise ConfigError(f"unknown weight scheme {s!r}") from None
        try:
            triangle_rule(int(self.estimator.get("quadrature_degree", 6)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        fmts = self.output.get("formats") or []
        if not set(fmts) <= set(FORMATS):
            raise ConfigError(f"unknown output formats {sorted(set(fmts) - set(FORMATS))}")
        if self.sweep is not None:
            for key in ("epsilon", "n"):
                vals = self.sweep.get(key)
                if not isinstance(vals, list) or not vals:
                    raise ConfigError(f"sweep.{key} must be a nonempty list")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def schemes(self) -> list[WeightScheme]:
        return [WeightScheme.parse(s) for s in self.estimator["schemes"]]

    def with_point(self, epsilon: float, n: int) -> "ExperimentConfig":
        cfg = copy.deepcopy(self)
        cfg.problem["epsilon"] = float(epsilon)
        cfg.mesh["n"] = int(n)
        cfg.sweep = None
        return cfg


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return data


def _flag_overrides(args: argparse.Namespace) -> dict:
    """Nested config fragment built from the flags that were given."""
    out: dict[str, dict] = {}

    def put(section: str, key: str, value):
        if value is not None:
            out.setdefault(section, {})[key] = value

    put("problem", "epsilon", getattr(args, "epsilon", None))
    if getattr(args, "reaction", None) is not None:
        put("problem", "reaction", {"id": args.reaction})
    put("problem", "solution", getattr(args, "solution", None))
    put("mesh", "generator", getattr(args, "mesh_kind", None))
    put("mesh", "n", getattr(args, "n", None))
    put("mesh", "sigma", getattr(args, "sigma", None))
    put("mesh", "sides", getattr(args, "sides", None))
    if getattr(args, "mesh_file", None) is not None:
        put("mesh", "generator", "file")
        put("mesh", "path", args.mesh_file)
    if getattr(args, "schemes", None) is not None:
        put("estimator", "schemes", _split_list(args.schemes))
    put("estimator", "quadrature_degree", getattr(args, "quad_degree", None))
    put("output", "directory", getattr(args, "out_dir", None))
    for key in ("sweep_epsilon", "sweep_n"):
        raw = getattr(args, key, None)
        if raw is not None:
            conv = float if key == "sweep_epsilon" else int
            try:
                vals = [conv(v) for v in _split_list(raw)]
            except ValueError:
                raise ConfigError(f"--{key.replace('_', '-')} must be a comma-separated list") from None
            out.setdefault("sweep", {})[key.split("_")[1]] = vals
    return out


def _split_list(raw: str) -> list[str]:
    return [s.strip() for s in raw.split(",") if s.strip()]


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    return ExperimentConfig.resolve(file_values, _flag_overrides(args))


# ----------------------------------------------------------------------
# pipeline


def build_mesh(mesh_cfg: dict, epsilon: float) -> Triangulation:
    kind = mesh_cfg["generator"]
    if kind == "file":
        return read_mesh(mesh_cfg["path"])
    n = int(mesh_cfg["n"])
    if kind == "uniform":
        return generate_uniform(n)
    return generate_shishkin(n, epsilon, float(mesh_cfg.get("sigma", 2.0)), mesh_cfg.get("sides", "both"))


def build_problem(problem_cfg: dict) -> ProblemSpec:
    eps = float(problem_cfg["epsilon"])
    reaction = problem_cfg["reaction"]
    if reaction["id"] == "zero":
        return zero_problem(eps)
    sol_id = problem_cfg.get("solution")
    if sol_id is None:
        raise ConfigError(f"reaction {reaction['id']!r} needs a manufactured solution")
    solution = SOLUTIONS[sol_id](eps)
    if reaction["id"] == "linear":
        return linear_problem(solution, eps, float(reaction.get("c", 1.0)))
    return cubic_problem(solution, eps)


def mesh_stats(mesh: Triangulation, patches) -> dict:
    counts: dict[str, int] = {}
    for p in patches:
        counts[p.classification.value] = counts.get(p.classification.value, 0) + 1
    aspects = [p.aspect for p in patches]
    return {
        "n_nodes": mesh.n_nodes,
        "n_triangles": mesh.n_triangles,
        "n_edges": mesh.n_edges,
        "min_area": float(mesh.areas.min()),
        "max_patch_aspect": float(max(aspects)),
        "classification_counts": dict(sorted(counts.items())),
    }


class PhaseError(Exception):
    def __init__(self, phase: str, error: Exception):
        super().__init__(f"[{phase}] {error}")
        self.phase = phase
        self.error = error


class _Timer:
    def __init__(self):
        self.times: dict[str, float] = {}

    def run(self, phase: str, fn, *args, **kwargs):
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except AnisoFemError as exc:
            raise PhaseError(phase, exc) from exc
        finally:
            self.times[phase] = self.times.get(phase, 0.0) + time.perf_counter() - start


@dataclass
class RunRecord:
    config: dict
    version: str
    mesh_stats: dict
    solve: dict
    estimators: dict = field(default_factory=dict)
    energy_error: float | None = None
    effectivity: dict | None = None
    wall_times: dict = field(default_factory=dict)

    def to_dict(self, per_node: bool = False) -> dict:
        d = asdict(self)
        if not per_node:
            for rep in d["estimators"].values():
                rep.pop("per_node", None)
        return d


def run_pipeline(cfg: ExperimentConfig, estimate: bool = True):
    """Mesh, solve and (optionally) estimate. Returns (record, reports, solution)."""
    timer = _Timer()
    spec = timer.run("problem", build_problem, cfg.problem)
    mesh = timer.run("mesh", build_mesh, cfg.mesh, spec.epsilon)
    patches = timer.run("patches", build_patches, mesh)
    sol = timer.run("solve", solve, mesh, spec)
    record = RunRecord(
        config=cfg.to_dict(),
        version=version_string(),
        mesh_stats=mesh_stats(mesh, patches),
        solve={"residual": sol.residual, "iterations": sol.iterations},
    )
    reports = {}
    if estimate:
        rule = triangle_rule(int(cfg.estimator["quadrature_degree"]))
        err = None
        if spec.exact_solution is not None:
            err = timer.run("error", energy_error, sol, spec, mesh, rule)
        qt = timer.run("estimate", quadrature_term, sol, spec, mesh, rule)
        for s in cfg.schemes:
            reports[s] = timer.run(
                "estimate", total_estimator, mesh, patches, sol, spec, s, rule, qt, err
            )
        record.estimators = {s.value: r.to_dict() for s, r in reports.items()}
        record.energy_error = err
        if err is not None:
            record.effectivity = {s.value: r.effectivity for s, r in reports.items()}
    record.wall_times = dict(timer.times)
    return record, reports, sol


# ----------------------------------------------------------------------
# output helpers


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _ensure_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MeshIOError(f"cannot create output directory {p}: {exc}") from None
    return p


# ----------------------------------------------------------------------
# subcommands


def cmd_generate_mesh(args) -> int:
    if args.kind == "patch":
        mesh = generate_patch(args.H, args.h, args.n, style=args.style)
    elif args.kind == "uniform":
        mesh = generate_uniform(args.n)
    else:
        mesh = generate_shishkin(args.n, args.epsilon, args.sigma, args.sides)
    write_mesh(mesh, args.out)
    read_mesh(args.out)  # round-trip check
    print(f"wrote {args.out}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = config_from_args(args)
    out = _ensure_dir(cfg.output["directory"])
    record, _, sol = run_pipeline(cfg, estimate=False)
    write_solution(sol, out / "solution.json")
    _dump_json(record.to_dict(), out / "run.json")
    print(f"solved: residual {sol.residual:.3e}, {sol.iterations} iterations -> {out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = config_from_args(args)
    out = _ensure_dir(cfg.output["directory"])
    record, reports, _ = run_pipeline(cfg)
    fmts = cfg.output["formats"]
    if "json" in fmts:
        _dump_json(record.to_dict(), out / "run.json")
    if "csv" in fmts:
        for s, rep in reports.items():
            (out / f"estimator_{s.value}.csv").write_text(rep.to_csv())
    for s, rep in reports.items():
        eff = "n/a" if rep.effectivity is None else f"{rep.effectivity:.4g}"
        print(f"{s.value}: total {rep.total:.6e}, effectivity {eff}")
    return EXIT_OK


def cmd_compare_weights(args) -> int:
    cfg = config_from_args(args)
    out = _ensure_dir(cfg.output["directory"])
    spec = build_problem(cfg.problem)
    mesh = build_mesh(cfg.mesh, spec.epsilon)
    patches = build_patches(mesh)
    sol = solve(mesh, spec)
    cmp = compare_weights(mesh, patches, sol, spec, epsilon=args.weight_epsilon)
    body = {"config": cfg.to_dict(), "version": version_string(), "comparison": cmp.to_dict()}
    _dump_json(body, out / "compare_weights.json")
    print(f"jump totals: old {cmp.old.sum():.6e}, new {cmp.new.sum():.6e}, split {cmp.split.sum():.6e}")
    return EXIT_OK


def cmd_verify_trace(args) -> int:
    from .analysis.calibration import build_calibration, calibration_json
    from .analysis.fuzz import FAMILIES, FuzzConfig, report_json, run_fuzz, slope_ok

    fams = FAMILIES if args.families == "all" else tuple(_split_list(args.families))
    unknown = set(fams) - set(FAMILIES)
    if unknown:
        raise ConfigError(f"unknown families {sorted(unknown)}; known: {list(FAMILIES)}")
    try:
        aspects = tuple(float(a) for a in _split_list(args.aspects))
    except ValueError:
        raise ConfigError("--aspects must be a comma-separated list of numbers") from None
    if not aspects or min(aspects) < 1.0:
        raise ConfigError("--aspects must be a nonempty list of values >= 1")
    config = FuzzConfig(seed=args.seed, aspects=aspects, families=fams, n_random=args.n_random)
    if args.calibrate:
        text = calibration_json(build_calibration(config))
        Path(args.calibrate).write_text(text)
        print(f"wrote calibration {args.calibrate}")
        return EXIT_OK
    report = run_fuzz(config)
    report["version"] = version_string()
    report["slope_within_bound"] = slope_ok(report)
    text = report_json(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _sweep_task(cfg: ExperimentConfig, out: Path) -> list[dict]:
    eps, n = cfg.problem["epsilon"], cfg.mesh["n"]
    record, reports, _ = run_pipeline(cfg)
    _dump_json(record.to_dict(), out / "points" / f"eps{eps:g}_n{n}.json")
    rows = []
    for s, rep in reports.items():
        rows.append(
            {
                "epsilon": eps,
                "n": n,
                "scheme": s.value,
                "n_nodes": record.mesh_stats["n_nodes"],
                "energy_error": rep.energy_error,
                "estimator": rep.total,
                "effectivity": rep.effectivity,
                "jump_total": rep.jump_total,
                "interior_total": rep.interior_total,
                "quad_total": rep.quad_total,
            }
        )
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def run_sweep(cfg: ExperimentConfig, out: Path, threads: int | None = None) -> list[dict]:
    from .analysis.fuzz import thread_count

    if cfg.sweep is None:
        raise ConfigError("sweep needs sweep.epsilon and sweep.n lists")
    points = [(e, n) for e in cfg.sweep["epsilon"] for n in cfg.sweep["n"]]
    tasks = [cfg.with_point(e, n) for e, n in points]
    # validate every point before starting work
    for t in tasks:
        t.validate()
    with ThreadPoolExecutor(max_workers=thread_count(threads)) as pool:
        results = list(pool.map(lambda c: _sweep_task(c, out), tasks))
    rows = [r for chunk in results for r in chunk]
    rows.sort(key=lambda r: (r["scheme"], -r["epsilon"], r["n"]))
    return rows


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    out = _ensure_dir(cfg.output["directory"])
    rows = run_sweep(cfg, out, args.threads)
    (out / "sweep.csv").write_text(sweep_csv(rows))
    _dump_json({"config": cfg.to_dict(), "version": version_string()}, out / "sweep_config.json")
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'}")
    return EXIT_OK


# ----------------------------------------------------------------------
# argument parsing


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--reaction", help=f"one of {', '.join(REACTIONS)}")
    p.add_argument("--solution", help=f"one of {', '.join(sorted(SOLUTIONS))}")
    p.add_argument("--mesh-kind", choices=("uniform", "shishkin"))
    p.add_argument("--mesh-file")
    p.add_argument("--n", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--sides", choices=("one", "both"))
    p.add_argument("--schemes", help="comma-separated weight schemes")
    p.add_argument("--quad-degree", type=int)
    p.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisofem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-mesh", help="write a generated mesh to JSON")
    g.add_argument("--kind", choices=("uniform", "shishkin", "patch"), default="uniform")
    g.add_argument("--n", type=int, default=8)
    g.add_argument("--epsilon", type=float, default=1e-2)
    g.add_argument("--sigma", type=float, default=2.0)
    g.add_argument("--sides", choices=("one", "both"), default="one")
    g.add_argument("--H", type=float, default=1.0)
    g.add_argument("--h", type=float, default=1e-2)
    g.add_argument("--style", choices=("strip", "fan"), default="strip")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate_mesh)

    s = sub.add_parser("solve", help="solve the discrete problem")
    _add_config_flags(s)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("estimate", help="solve and evaluate the estimator")
    _add_config_flags(e)
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("compare-weights", help="per-node jump terms under all weight schemes")
    _add_config_flags(c)
    c.add_argument("--weight-epsilon", type=float, help="epsilon used in the weights only")
    c.set_defaults(func=cmd_compare_weights)

    v = sub.add_parser("verify-trace", help="fuzz the trace-type inequalities")
    v.add_argument("--families", default="all", help="comma-separated families or 'all'")
    v.add_argument("--aspects", default="1,10,100,1000,10000")
    v.add_argument("--seed", type=int, default=7)
    v.add_argument("--n-random", type=int, default=200)
    v.add_argument("--out")
    v.add_argument("--calibrate", metavar="PATH", help="write frozen thresholds instead of a report")
    v.set_defaults(func=cmd_verify_trace)

    w = sub.add_parser("sweep", help="estimator and error over epsilon x n")
    _add_config_flags(w)
    w.add_argument("--sweep-epsilon", help="comma-separated epsilon values")
    w.add_argument("--sweep-n", help="comma-separated mesh sizes")
    w.add_argument("--threads", type=int)
    w.set_defaults(func=cmd_sweep)
    return parser


_CONFIG_ERRORS = (ConfigError, InvalidParams, ParseError, MeshIOError, OSError)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PhaseError as exc:
        code = EXIT_CONFIG if isinstance(exc.error, _CONFIG_ERRORS) else EXIT_NUMERICAL
        print(f"error {exc}", file=sys.stderr)
        return code
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnisoFemError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
