"""Residual a posteriori error estimator with node-patch weights.

For every node z the estimator combines a weighted jump residual over the
interior edges ``gamma_z`` emanating from z and a weighted interior residual
of the interpolated reaction over the patch ``omega_z``::

    total^2 = sum_z min{|omega_z|, lambda_z} (eps * max_{gamma_z} |jump|)^2
            + sum_z min{1, H_z/eps}^2 ||f_h^I||^2_{omega_z}
            + ||f_h - f_h^I||^2

Three choices of ``lambda_z`` are available through :class:`WeightScheme`.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fem import FemSolution, edge_jumps, energy_error, reaction_nodal, _unpack
from .fields import eval_on_triangles
from .mesh.patches import Classification, NodePatch
from .mesh.triangulation import Triangulation
from .problems import ProblemSpec
from .quadrature import TriangleRule, triangle_rule

CSV_COLUMNS = (
    "node_id",
    "H_z",
    "h_z",
    "area",
    "class",
    "J_ring",
    "J_long",
    "jump_term",
    "interior_term",
)


class WeightScheme(str, enum.Enum):
    NEW = "NewEtaH"  # lambda_z = eps * H_z
    OLD = "OldEtaH2h"  # lambda_z = eps * H_z^2 / h_z
    SPLIT = "SplitShortLong"  # eps*h_z on short edges, eps*H_z on long edges

    @classmethod
    def parse(cls, name: str) -> "WeightScheme":
        for s in cls:
            if name in (s.value, s.name, s.value.lower(), s.name.lower()):
                return s
        raise ValueError(f"unknown weight scheme {name!r}")


@dataclass(frozen=True)
class NodeEstimate:
    node_id: int
    jump_term: float
    interior_term: float
    J_ring: float
    J_long: float


@dataclass
class EstimatorReport:
    scheme: WeightScheme
    per_node: list[NodeEstimate]
    jump_total: float
    interior_total: float
    quad_total: float
    total: float
    energy_error: Optional[float] = None
    effectivity: Optional[float] = None
    has_unclassified: bool = False
    patches: Sequence[NodePatch] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "total": self.total,
            "jump_total": self.jump_total,
            "interior_total": self.interior_total,
            "quad_total": self.quad_total,
            "energy_error": self.energy_error,
            "effectivity": self.effectivity,
            "has_unclassified": self.has_unclassified,
            "per_node": [asdict(n) for n in self.per_node],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_rows(self) -> list[dict]:
        by_id = {p.node_id: p for p in self.patches}
        rows = []
        for n in self.per_node:
            p = by_id.get(n.node_id)
            rows.append(
                {
                    "node_id": n.node_id,
                    "H_z": p.H_z if p else "",
                    "h_z": p.h_z if p else "",
                    "area": p.area if p else "",
                    "class": p.classification.value if p else "",
                    "J_ring": n.J_ring,
                    "J_long": n.J_long,
                    "jump_term": n.jump_term,
                    "interior_term": n.interior_term,
                }
            )
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()


def _edge_max(jumps: np.ndarray, edges: Sequence[int]) -> float:
    if not len(edges):
        return 0.0
    return float(np.abs(jumps[list(edges)]).max())


def jump_term(patch: NodePatch, jumps: np.ndarray, epsilon: float, scheme: WeightScheme) -> float:
    """Weighted jump residual of one node. ``jumps`` holds one value per mesh edge."""
    scheme = WeightScheme(scheme)
    if scheme is WeightScheme.SPLIT:
        j_ring = _edge_max(jumps, patch.ring_gamma_z)
        j_long = _edge_max(jumps, patch.long_gamma_z)
        return min(patch.area, epsilon * patch.h_z) * (epsilon * j_ring) ** 2 + min(
            patch.area, epsilon * patch.H_z
        ) * (epsilon * j_long) ** 2
    j = _edge_max(jumps, patch.gamma_z)
    lam = epsilon * patch.H_z
    if scheme is WeightScheme.OLD:
        # eps*H^2/h written as lam*(H/h) so that lam_old >= lam_new holds in floating point
        lam = lam * (patch.H_z / patch.h_z)
    return min(patch.area, lam) * (epsilon * j) ** 2


def _triangle_mass_forms(mesh: Triangulation, nodal: np.ndarray) -> np.ndarray:
    """Exact ``||v||^2_T`` per triangle for the P1 field with the given nodal values."""
    f = nodal[mesh.triangles]
    return mesh.areas * (np.sum(f**2, axis=1) + np.sum(f, axis=1) ** 2) / 12.0


def interior_term(
    patch: NodePatch,
    f_nodal: np.ndarray,
    epsilon: float,
    mesh: Triangulation,
    tri_forms: np.ndarray | None = None,
) -> float:
    """``min{1, H_z/eps}^2 ||f_h^I||^2_{omega_z}`` using exact P1 mass forms."""
    if tri_forms is None:
        tri_forms = _triangle_mass_forms(mesh, np.asarray(f_nodal, dtype=float))
    weight = min(1.0, patch.H_z / epsilon)
    return weight**2 * float(tri_forms[list(patch.omega_triangles)].sum())


def quadrature_term(u_h, spec: ProblemSpec, mesh: Triangulation | None = None, rule: TriangleRule | None = None) -> float:
    """``||f_h - f_h^I||^2`` with ``f_h = f(.; u_h)`` sampled at quadrature points."""
    values, mesh = _unpack(u_h, mesh)
    rule = rule or triangle_rule(6)
    pts = np.einsum("qa,mad->mqd", rule.points, mesh.points[mesh.triangles])
    uq, _ = eval_on_triangles(values, mesh, rule.points, need_grad=False)
    fh = np.asarray(spec.reaction(pts[..., 0], pts[..., 1], uq), dtype=float)
    fI, _ = eval_on_triangles(reaction_nodal(spec, mesh, values), mesh, rule.points, need_grad=False)
    w = rule.weights[None, :] * mesh.areas[:, None]
    return float(np.sum(w * (fh - fI) ** 2))


def total_estimator(
    mesh: Triangulation,
    patches: Sequence[NodePatch],
    u_h,
    spec: ProblemSpec,
    scheme: WeightScheme = WeightScheme.NEW,
    rule: TriangleRule | None = None,
    quad_total: float | None = None,
    error: float | None = None,
) -> EstimatorReport:
    """Per-node and global estimator. Effectivity is filled when an exact solution exists.

    ``quad_total`` and ``error`` may be passed in to avoid recomputation when
    several schemes are evaluated for the same solution.
    """
    scheme = WeightScheme(scheme)
    values, mesh = _unpack(u_h, mesh)
    eps = spec.epsilon
    jumps = edge_jumps(values, mesh)
    tri_forms = _triangle_mass_forms(mesh, reaction_nodal(spec, mesh, values))
    per_node = []
    for p in patches:
        per_node.append(
            NodeEstimate(
                node_id=p.node_id,
                jump_term=jump_term(p, jumps, eps, scheme),
                interior_term=interior_term(p, None, eps, mesh, tri_forms),
                J_ring=_edge_max(jumps, p.ring_gamma_z),
                J_long=_edge_max(jumps, p.long_gamma_z),
            )
        )
    per_node.sort(key=lambda n: n.node_id)
    jt = float(sum(n.jump_term for n in per_node))
    it = float(sum(n.interior_term for n in per_node))
    qt = quadrature_term(values, spec, mesh, rule) if quad_total is None else float(quad_total)
    total = float(np.sqrt(jt + it + qt))
    if error is None and spec.exact_solution is not None:
        error = energy_error(values, spec, mesh)
    effectivity = None
    if error is not None and error > 0:
        effectivity = total / error
    return EstimatorReport(
        scheme=scheme,
        per_node=per_node,
        jump_total=jt,
        interior_total=it,
        quad_total=qt,
        total=total,
        energy_error=error,
        effectivity=effectivity,
        has_unclassified=any(p.classification is Classification.UNCLASSIFIED for p in patches),
        patches=tuple(patches),
    )


@dataclass
class WeightComparison:
    node_ids: np.ndarray
    old: np.ndarray
    new: np.ndarray
    split: np.ndarray

    @staticmethod
    def _ratio(a: float, b: float) -> Optional[float]:
        return a / b if b > 0 else None

    @property
    def new_over_old(self) -> Optional[float]:
        return self._ratio(float(self.new.sum()), float(self.old.sum()))

    @property
    def old_over_new(self) -> Optional[float]:
        return self._ratio(float(self.old.sum()), float(self.new.sum()))

    @property
    def split_over_new(self) -> Optional[float]:
        return self._ratio(float(self.split.sum()), float(self.new.sum()))

    def to_dict(self) -> dict:
        return {
            "jump_total_old": float(self.old.sum()),
            "jump_total_new": float(self.new.sum()),
            "jump_total_split": float(self.split.sum()),
            "new_over_old": self.new_over_old,
            "split_over_new": self.split_over_new,
            "per_node": [
                {"node_id": int(z), "old": float(o), "new": float(n), "split": float(s)}
                for z, o, n, s in zip(self.node_ids, self.old, self.new, self.split)
            ],
        }


def compare_weights(
    mesh: Triangulation,
    patches: Sequence[NodePatch],
    u_h,
    spec: ProblemSpec,
    epsilon: float | None = None,
) -> WeightComparison:
    """Per-node jump terms under all three weight schemes.

    ``epsilon`` overrides the problem's value, which is useful for studying
    the weights on a fixed mesh and solution.
    """
    values, mesh = _unpack(u_h, mesh)
    eps = spec.epsilon if epsilon is None else epsilon
    jumps = edge_jumps(values, mesh)
    cols = {
        s: np.array([jump_term(p, jumps, eps, s) for p in patches])
        for s in WeightScheme
    }
    return WeightComparison(
        np.array([p.node_id for p in patches]),
        cols[WeightScheme.OLD],
        cols[WeightScheme.NEW],
        cols[WeightScheme.SPLIT],
    )


def estimate_all(
    mesh: Triangulation,
    patches: Sequence[NodePatch],
    u_h: FemSolution | np.ndarray,
    spec: ProblemSpec,
    schemes: Sequence[WeightScheme] = tuple(WeightScheme),
) -> dict[WeightScheme, EstimatorReport]:
    """Reports for several schemes, sharing the quadrature term and energy error."""
    values, mesh = _unpack(u_h, mesh)
    qt = quadrature_term(values, spec, mesh)
    err = energy_error(values, spec, mesh) if spec.exact_solution is not None else None
    return {
        WeightScheme(s): total_estimator(mesh, patches, values, spec, s, quad_total=qt, error=err)
        for s in schemes
    }
