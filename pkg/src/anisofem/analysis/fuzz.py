"""Seeded fuzz corpus for the trace-type inequalities.

For every aspect ratio in the sweep the corpus holds random triangles (for
the divergence identity and the auxiliary bounds) and node patches (for the
scaled trace bounds). Each geometry is paired with the ten cubic monomials
and ``n_random`` random cubics written in a frame aligned with the geometry.

Per family the report gives the number of checks, the maximum ratio, the
maximum ratio per aspect, the least-squares slope of log(max ratio) against
log(aspect) and the worst case found. All randomness derives from one seed,
so reports are reproducible byte for byte.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..mesh.generators import generate_patch
from ..mesh.patches import Classification, ClassificationParams, node_patch
from .testfunctions import LocalFrame, PolynomialFamily, standard_family
from .trace import (
    aux_a_terms,
    aux_b_terms,
    corner,
    divergence_identity_terms,
    nonnegative_shift,
    patch_norms,
    scaled_trace_terms,
    trace_L1_sides,
    trace_sq_sides,
    triangle_norms,
)

FAMILIES = ("divergence", "aux_a", "aux_b", "trace_L1", "trace_sq")
RATIO_FAMILIES = FAMILIES[1:]
DEFAULT_ASPECTS = (1.0, 10.0, 100.0, 1000.0, 10000.0)


@dataclass(frozen=True)
class FuzzConfig:
    seed: int = 7
    aspects: tuple = DEFAULT_ASPECTS
    families: tuple = FAMILIES
    n_random: int = 200
    triangles_per_aspect: int = 6
    divergence_triangles_per_aspect: int = 200
    divergence_random: int = 10
    patch_sizes: tuple = (4, 6, 8)
    obtuseness: tuple = (0.0, 0.5)
    threads: int | None = None


@dataclass
class FamilyResult:
    family: str
    count: int = 0
    max_ratio: float = 0.0
    per_aspect: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)

    def add(self, aspect: float, values: np.ndarray, case: dict) -> None:
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return
        self.count += int(values.size)
        i = int(np.argmax(values))
        key = f"{aspect:g}"
        self.per_aspect[key] = max(self.per_aspect.get(key, 0.0), float(values[i]))
        if values[i] > self.max_ratio or not self.worst:
            self.max_ratio = max(self.max_ratio, float(values[i]))
            self.worst = dict(case, index=i, value=float(values[i]))

    @property
    def aspect_slope(self) -> float | None:
        keys = [k for k, v in self.per_aspect.items() if v > 0]
        if len(keys) < 2:
            return None
        x = np.log([float(k) for k in keys])
        y = np.log([self.per_aspect[k] for k in keys])
        return float(np.polyfit(x, y, 1)[0])

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "max_ratio": self.max_ratio,
            "per_aspect_max": dict(sorted(self.per_aspect.items(), key=lambda kv: float(kv[0]))),
            "aspect_slope": self.aspect_slope,
            "worst_case": self.worst,
        }

    def merge(self, other: "FamilyResult") -> None:
        self.count += other.count
        for k, v in other.per_aspect.items():
            self.per_aspect[k] = max(self.per_aspect.get(k, 0.0), v)
        if other.max_ratio > self.max_ratio or not self.worst:
            self.max_ratio = max(self.max_ratio, other.max_ratio)
            self.worst = other.worst


# ----------------------------------------------------------------------
# geometry generators


def random_triangle(aspect: float, rng: np.random.Generator) -> np.ndarray:
    """Triangle with ``H_T / h_T`` equal to ``aspect`` (clamped to >= ~1), random shape and pose.

    Alternates between flat triangles (a long base with a low apex, possibly
    very obtuse) and needles (two long sides meeting at a small angle).
    """
    H = 10.0 ** rng.uniform(-1.0, 1.0)
    h = H / aspect
    if aspect <= 1.5:
        # well-shaped: random apex above the base
        pts = np.array([[0.0, 0.0], [H, 0.0], [H * rng.uniform(0.2, 0.8), H * rng.uniform(0.5, 0.9)]])
    elif rng.random() < 0.5:
        pts = np.array([[0.0, 0.0], [H, 0.0], [H * rng.uniform(0.0, 1.0), h]])
    else:
        off = rng.uniform(0.0, 1.0) * h
        pts = np.array([[0.0, 0.0], [H, off], [H, off - h]])
    theta = rng.uniform(0.0, 2.0 * math.pi)
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return pts @ R.T + rng.uniform(-1.0, 1.0, size=2)


def patch_corpus(aspect: float, config: FuzzConfig, rng: np.random.Generator):
    """Classified node patches (strip and fan styles) of the requested aspect."""
    params = ClassificationParams()
    out = []
    styles = [("strip", k) for k in config.patch_sizes]
    if aspect <= 10.0:
        styles += [("fan", k) for k in (5, 6, 8)]
    for style, k in styles:
        for ob in config.obtuseness:
            rot = rng.uniform(0.0, 2.0 * math.pi)
            mesh = generate_patch(1.0, 1.0 / aspect, k, style=style, obtuseness=ob, rotation=rot)
            patch = node_patch(0, mesh, params)
            if patch.classification is Classification.UNCLASSIFIED:
                continue
            out.append((mesh, patch, {"style": style, "n_triangles": k, "obtuseness": ob, "rotation": rot}))
    return out


# ----------------------------------------------------------------------
# per-geometry work units


def _case(geometry: np.ndarray, fam: PolynomialFamily, extra: dict) -> dict:
    return dict(extra, vertices=np.asarray(geometry).tolist())


def _coeff_case(case: dict, fam: PolynomialFamily) -> dict:
    i = case["index"]
    case["coefficients"] = fam.coeffs[i].tolist()
    case["shift"] = float(fam.shift[i])
    case["frame_origin"] = fam.frame.origin.tolist()
    case["frame_matrix"] = fam.frame.L.tolist()
    return case


def _divergence_unit(aspect, config, seed) -> FamilyResult:
    rng = np.random.default_rng(seed)
    res = FamilyResult("divergence")
    for _ in range(config.divergence_triangles_per_aspect):
        T = random_triangle(aspect, rng)
        fam = standard_family(LocalFrame.for_points(T), config.divergence_random, rng)
        for k in range(3):
            lhs, rhs = divergence_identity_terms(T, k, fam)
            scaled = np.abs(lhs - rhs) / (np.abs(lhs) + np.abs(rhs) + 1.0)
            before = res.max_ratio
            res.add(aspect, scaled, _case(T, fam, {"vertex": k, "aspect": corner(T, k).aspect}))
            if res.max_ratio > before or res.count == scaled.size:
                _coeff_case(res.worst, fam)
    return res


def _aux_unit(aspect, config, seed, families) -> dict:
    rng = np.random.default_rng(seed)
    out = {f: FamilyResult(f) for f in families}
    for _ in range(config.triangles_per_aspect):
        T = random_triangle(aspect, rng)
        fam = standard_family(LocalFrame.for_points(T), config.n_random, rng)
        fam = fam.with_shift(nonnegative_shift(fam, T))
        norms = triangle_norms(fam, T)
        for k in range(3):
            c = corner(T, k)
            extra = {"vertex": k, "aspect": c.aspect}
            # norms are invariant under the vertex relabelling done by corner()
            if "aux_a" in out:
                lhs, rhs, _ = aux_a_terms(T, k, fam, check_sign=True, norms=norms)
                r = out["aux_a"]
                before = r.max_ratio
                r.add(aspect, lhs / rhs, _case(T, fam, extra))
                if r.max_ratio > before or r.count == lhs.size:
                    _coeff_case(r.worst, fam)
            if "aux_b" in out:
                lhs, rhs, _ = aux_b_terms(T, k, fam, check_sign=False, norms=norms)
                r = out["aux_b"]
                before = r.max_ratio
                r.add(aspect, lhs / rhs, _case(T, fam, extra))
                if r.max_ratio > before or r.count == lhs.size:
                    _coeff_case(r.worst, fam)
    return out


def _trace_unit(aspect, config, seed, families) -> dict:
    rng = np.random.default_rng(seed)
    out = {f: FamilyResult(f) for f in families}
    for mesh, patch, info in patch_corpus(aspect, config, rng):
        verts = mesh.points
        fam = standard_family(LocalFrame.for_points(verts), config.n_random, rng)
        norms = patch_norms(fam, patch, mesh)
        for e in patch.gamma_z:
            e_int, _, weight, tag = scaled_trace_terms(patch, mesh, fam, e, norms)
            extra = dict(info, edge=int(e), case_tag=tag, aspect=patch.aspect, H_z=patch.H_z, h_z=patch.h_z)
            sides = {
                "trace_L1": trace_L1_sides(e_int, norms, weight),
                "trace_sq": trace_sq_sides(e_int, norms, weight, float(mesh.edge_lengths[e])),
            }
            for name in families:
                lhs, rhs = sides[name]
                r = out[name]
                before = r.max_ratio
                r.add(aspect, lhs / rhs, _case(verts, fam, extra))
                if r.max_ratio > before or r.count == lhs.size:
                    _coeff_case(r.worst, fam)
    return out


def thread_count(requested: int | None = None) -> int:
    cap = os.environ.get("ANISO_THREADS")
    n = requested or (int(cap) if cap and cap.isdigit() and int(cap) > 0 else os.cpu_count() or 1)
    if cap and cap.isdigit() and int(cap) > 0:
        n = min(n, int(cap))
    return max(1, n)


def run_fuzz(config: FuzzConfig | None = None) -> dict:
    """Run the corpus and return the verification report as a dict."""
    config = config or FuzzConfig()
    unknown = set(config.families) - set(FAMILIES)
    if unknown:
        raise ValueError(f"unknown families: {sorted(unknown)}")
    aspects = [float(a) for a in config.aspects]
    seeds = np.random.SeedSequence(config.seed).spawn(3 * len(aspects))
    jobs = []
    aux_f = tuple(f for f in ("aux_a", "aux_b") if f in config.families)
    trace_f = tuple(f for f in ("trace_L1", "trace_sq") if f in config.families)
    for i, a in enumerate(aspects):
        if "divergence" in config.families:
            jobs.append((_divergence_unit, (a, config, seeds[3 * i])))
        if aux_f:
            jobs.append((_aux_unit, (a, config, seeds[3 * i + 1], aux_f)))
        if trace_f:
            jobs.append((_trace_unit, (a, config, seeds[3 * i + 2], trace_f)))

    with ThreadPoolExecutor(max_workers=thread_count(config.threads)) as pool:
        results = list(pool.map(lambda job: job[0](*job[1]), jobs))

    merged = {f: FamilyResult(f) for f in config.families}
    for r in results:
        parts = {"divergence": r} if isinstance(r, FamilyResult) else r
        for name, fr in parts.items():
            merged[name].merge(fr)
    report = {
        "seed": config.seed,
        "aspects": aspects,
        "n_random": config.n_random,
        "families": {name: merged[name].to_dict() for name in config.families},
    }
    if "divergence" in report["families"]:
        d = report["families"]["divergence"]
        d["max_scaled_residual"] = d.pop("max_ratio")
        d.pop("per_aspect_max")
        d.pop("aspect_slope")
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def calibration_from_report(report: dict, factor: float = 1.5) -> dict:
    """Frozen regression thresholds: ``factor`` times the observed maximum ratio."""
    fams = report["families"]
    return {
        name: {"observed_max": fams[name]["max_ratio"], "threshold": factor * fams[name]["max_ratio"]}
        for name in RATIO_FAMILIES
        if name in fams
    }


def slope_ok(report: dict, bound: float = 0.2) -> dict[str, bool]:
    out = {}
    for name in RATIO_FAMILIES:
        fam = report["families"].get(name)
        if fam is not None and fam["aspect_slope"] is not None:
            out[name] = abs(fam["aspect_slope"]) <= bound
    return out
