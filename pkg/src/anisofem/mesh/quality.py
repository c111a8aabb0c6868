"""Mesh validation: maximum angle, node valence, local element orientation."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .patches import ClassificationParams, NodePatch, build_patches
from .triangulation import Triangulation


@dataclass(frozen=True)
class QualityParams:
    alpha0: float = 0.9 * math.pi  # maximum interior angle
    max_valence: int = 12
    kappa: float = 4.0  # |R_z| <= kappa * |omega_z|
    parallel_tol: float = 1e-9  # radians
    classification: ClassificationParams = field(default_factory=ClassificationParams)


@dataclass(frozen=True)
class Violation:
    kind: str  # "max_angle" | "valence" | "orientation"
    index: int  # triangle id for max_angle, node id otherwise
    value: float
    limit: float


@dataclass
class MeshQualityReport:
    max_interior_angle: float
    max_valence: int
    orientation_ok: bool
    rect_ratios: np.ndarray  # |R_z| / |omega_z| per node
    classification_counts: dict[str, int]
    violations: list[Violation]
    unclassified_nodes: list[int]

    @property
    def ok(self) -> bool:
        return not self.violations


def _box_area(pts: np.ndarray, direction: np.ndarray) -> float:
    u = direction / np.linalg.norm(direction)
    n = np.array([-u[1], u[0]])
    a = pts @ u
    b = pts @ n
    return float((a.max() - a.min()) * (b.max() - b.min()))


def min_area_rectangle(pts: np.ndarray) -> float:
    """Area of the smallest enclosing rectangle of any orientation.

    An optimal rectangle has a side collinear with a convex hull edge, so it
    suffices to try every hull edge direction.
    """
    pts = np.asarray(pts, dtype=float)
    hull = ConvexHull(pts)
    h = pts[hull.vertices]
    dirs = np.roll(h, -1, axis=0) - h
    return min(_box_area(h, d) for d in dirs)


def boundary_direction(z: int, mesh: Triangulation, tol: float) -> np.ndarray | None:
    """Unit direction of S_z ∩ ∂Ω when z is a non-corner boundary node."""
    bedges = [e for e in mesh.node_to_edges[z] if mesh.edge_is_boundary[e]]
    if len(bedges) != 2:
        return None
    p = mesh.points
    dirs = []
    for e in bedges:
        a, b = mesh.edges[e]
        other = b if a == z else a
        d = p[other] - p[z]
        dirs.append(d / np.linalg.norm(d))
    cross = dirs[0][0] * dirs[1][1] - dirs[0][1] * dirs[1][0]
    dot = float(dirs[0] @ dirs[1])
    angle = math.atan2(abs(cross), dot)  # pi for a straight boundary
    if abs(math.pi - angle) <= tol:
        return dirs[0]
    return None


def rectangle_ratio(patch: NodePatch, mesh: Triangulation, tol: float = 1e-9) -> float:
    verts = np.unique(mesh.triangles[list(patch.omega_triangles)].ravel())
    pts = mesh.points[verts]
    direction = None
    if mesh.is_boundary_node[patch.node_id]:
        direction = boundary_direction(patch.node_id, mesh, tol)
    if direction is not None:
        return _box_area(pts, direction) / patch.area
    return min_area_rectangle(pts) / patch.area


def validate_mesh(
    mesh: Triangulation,
    params: QualityParams | None = None,
    patches: list[NodePatch] | None = None,
) -> MeshQualityReport:
    params = params or QualityParams()
    patches = patches if patches is not None else build_patches(mesh, params.classification)
    violations: list[Violation] = []

    tri_max_angle = mesh.angles.max(axis=1)
    for t in np.nonzero(tri_max_angle > params.alpha0)[0]:
        violations.append(Violation("max_angle", int(t), float(tri_max_angle[t]), params.alpha0))

    valence = mesh.valence
    for z in np.nonzero(valence > params.max_valence)[0]:
        violations.append(Violation("valence", int(z), float(valence[z]), params.max_valence))

    ratios = np.array([rectangle_ratio(p, mesh, params.parallel_tol) for p in patches])
    for z in np.nonzero(ratios > params.kappa)[0]:
        violations.append(Violation("orientation", int(z), float(ratios[z]), params.kappa))

    counts = Counter(p.classification.value for p in patches)
    unclassified = [p.node_id for p in patches if p.classification.value == "unclassified"]
    return MeshQualityReport(
        max_interior_angle=float(tri_max_angle.max()),
        max_valence=int(valence.max()),
        orientation_ok=bool(np.all(ratios <= params.kappa)),
        rect_ratios=ratios,
        classification_counts=dict(counts),
        violations=violations,
        unclassified_nodes=unclassified,
    )


def quasi_non_obtuse_violations(mesh: Triangulation, alpha1: float = 1.0) -> np.ndarray:
    """Triangles whose largest angle exceeds pi/2 + alpha1 * h_T / H_T."""
    limit = 0.5 * math.pi + alpha1 * mesh.min_heights / mesh.max_edges
    return np.nonzero(mesh.angles.max(axis=1) > limit + 1e-14)[0]
