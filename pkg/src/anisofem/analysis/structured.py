"""Partially structured meshes: x-line detection, line averages and patch sums.

A mesh is *partially structured* when there is a grid ``x_0 < ... < x_n`` such
that every triangle has its shortest edge on some line ``x = x_i`` and its
remaining vertex on ``x = x_{i-1}`` or ``x = x_{i+1}``. Each triangle then
lies in a vertical strip between two neighbouring lines, which also gives a
cheap point-location scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import DegenerateSupport, NonPositiveInput, UnstructuredMesh
from ..fields import Field, eval_on_triangles, p1_gradients
from ..mesh.patches import NodePatch
from ..mesh.triangulation import Triangulation
from ..quadrature import TriangleRule, gauss_rule, triangle_rule


@dataclass
class StructuredGrid:
    mesh: Triangulation
    xs: np.ndarray  # sorted distinct x-lines
    node_line: np.ndarray  # line index of each node
    tri_strip: np.ndarray  # strip index of each triangle (between xs[j], xs[j+1])

    def __post_init__(self):
        tri_y = self.mesh.points[self.mesh.triangles][..., 1]
        self._strip_tris = []
        for j in range(len(self.xs) - 1):
            ids = np.nonzero(self.tri_strip == j)[0]
            self._strip_tris.append((ids, tri_y[ids].min(axis=1), tri_y[ids].max(axis=1)))
        self._grads = p1_gradients(self.mesh)

    def x_triple(self, z: int) -> tuple[float, float, float]:
        """``(x_{i-1}, x_i, x_{i+1})`` with the end lines repeated at the boundary."""
        i = int(self.node_line[z])
        n = len(self.xs) - 1
        return float(self.xs[max(i - 1, 0)]), float(self.xs[i]), float(self.xs[min(i + 1, n)])

    def y_range(self, patch: NodePatch) -> tuple[float, float]:
        verts = np.unique(self.mesh.triangles[list(patch.omega_triangles)].ravel())
        y = self.mesh.points[verts, 1]
        return float(y.min()), float(y.max())

    def omega_star(self, patch: NodePatch) -> tuple[float, float, float, float]:
        """The rectangle ``(x_{i-1}, x_{i+1}) x (y_z^-, y_z^+)`` containing the patch."""
        x0, _, x2 = self.x_triple(patch.node_id)
        y0, y1 = self.y_range(patch)
        return x0, x2, y0, y1

    def locate(self, pts: np.ndarray, chunk: int = 2048):
        """Containing triangle and barycentric coordinates for each point."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        n_strips = len(self.xs) - 1
        strip = np.clip(np.searchsorted(self.xs, pts[:, 0], side="right") - 1, 0, n_strips - 1)
        tri = np.full(len(pts), -1, dtype=np.int64)
        bary = np.zeros((len(pts), 3))
        P = self.mesh.points
        T = self.mesh.triangles
        for j in np.unique(strip):
            ids, ymin, ymax = self._strip_tris[j]
            q_idx = np.nonzero(strip == j)[0]
            for start in range(0, len(q_idx), chunk):
                qi = q_idx[start : start + chunk]
                q = pts[qi]
                v0 = P[T[ids, 0]]
                v1 = P[T[ids, 1]]
                v2 = P[T[ids, 2]]
                det = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v2[:, 0] - v0[:, 0]) * (
                    v1[:, 1] - v0[:, 1]
                )
                dx = q[:, None, 0] - v0[None, :, 0]
                dy = q[:, None, 1] - v0[None, :, 1]
                l1 = (dx * (v2[:, 1] - v0[:, 1]) - dy * (v2[:, 0] - v0[:, 0])) / det
                l2 = (dy * (v1[:, 0] - v0[:, 0]) - dx * (v1[:, 1] - v0[:, 1])) / det
                l0 = 1.0 - l1 - l2
                score = np.minimum(np.minimum(l0, l1), l2)
                # points outside a triangle's y-range cannot be inside it
                outside = (q[:, None, 1] < ymin[None] - 1e-15) | (q[:, None, 1] > ymax[None] + 1e-15)
                score = np.where(outside, -np.inf, score)
                best = np.argmax(score, axis=1)
                rows = np.arange(len(qi))
                tri[qi] = ids[best]
                bary[qi] = np.column_stack([l0[rows, best], l1[rows, best], l2[rows, best]])
        if np.any(bary.min(axis=1) < -1e-9):
            raise ValueError("some points lie outside the mesh")
        return tri, bary

    def eval_p1(self, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
        tri, bary = self.locate(pts)
        return np.einsum("pa,pa->p", values[self.mesh.triangles[tri]], bary)

    def p1_field(self, values: np.ndarray) -> "P1Field":
        return P1Field(self, np.asarray(values, dtype=float))

    def line_breakpoints(self, y: float, x0: float, x1: float) -> np.ndarray:
        """x-coordinates in (x0, x1) where the line at height y crosses a mesh edge."""
        P = self.mesh.points
        E = self.mesh.edges
        a, b = P[E[:, 0]], P[E[:, 1]]
        lo, hi = np.minimum(a[:, 1], b[:, 1]), np.maximum(a[:, 1], b[:, 1])
        sel = (lo < y) & (hi > y)
        a, b = a[sel], b[sel]
        t = (y - a[:, 1]) / (b[:, 1] - a[:, 1])
        x = a[:, 0] + t * (b[:, 0] - a[:, 0])
        return np.unique(x[(x > x0) & (x < x1)])


class P1Field:
    """Point evaluation of a P1 function on a structured mesh."""

    def __init__(self, grid: StructuredGrid, values: np.ndarray):
        self.grid = grid
        self.values = values
        self._tri_grad = np.einsum("ma,mad->md", values[grid.mesh.triangles], p1_gradients(grid.mesh))

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        pts = np.column_stack([x.ravel(), np.asarray(y, dtype=float).ravel()])
        return self.grid.eval_p1(self.values, pts).reshape(x.shape)

    def grad(self, x, y):
        x = np.asarray(x, dtype=float)
        pts = np.column_stack([x.ravel(), np.asarray(y, dtype=float).ravel()])
        tri, _ = self.grid.locate(pts)
        g = self._tri_grad[tri]
        return g[:, 0].reshape(x.shape), g[:, 1].reshape(x.shape)


def detect_structure(mesh: Triangulation, rel_tol: float = 1e-10) -> StructuredGrid:
    """Find the x-lines of a partially structured mesh or raise :class:`UnstructuredMesh`."""
    P = mesh.points
    scale = max(float(np.ptp(P[:, 0])), 1e-300)
    tol = rel_tol * scale
    xs_sorted = np.sort(P[:, 0])
    breaks = np.nonzero(np.diff(xs_sorted) > tol)[0]
    groups = np.split(xs_sorted, breaks + 1)
    xs = np.array([g.mean() for g in groups])
    node_line = np.clip(np.searchsorted(xs, P[:, 0] - tol), 0, len(xs) - 1)
    if np.any(np.abs(xs[node_line] - P[:, 0]) > tol):
        raise UnstructuredMesh("node x-coordinates do not cluster onto lines")
    if len(xs) < 2:
        raise UnstructuredMesh("need at least two x-lines")

    lines = node_line[mesh.triangles]  # (m, 3)
    lengths = mesh.tri_edge_lengths  # edge k opposite vertex k
    strip = np.empty(mesh.n_triangles, dtype=np.int64)
    for t in range(mesh.n_triangles):
        L = lines[t]
        lt = lengths[t]
        shortest = lt.min()
        ok = False
        for k in np.nonzero(lt <= shortest * (1 + 1e-9))[0]:
            a, b = L[(k + 1) % 3], L[(k + 2) % 3]
            if a == b and abs(int(L[k]) - int(a)) == 1:
                ok = True
                break
        if not ok:
            raise UnstructuredMesh(
                f"triangle {t}: shortest edge is not on an x-line with the third vertex on a neighbour"
            )
        strip[t] = int(L.min())
    return StructuredGrid(mesh, xs, node_line, strip)


# ----------------------------------------------------------------------
# line averages


@dataclass
class GbarRecord:
    node_id: int
    gbar: float
    lhs1: Optional[float] = None  # H_z |gbar|
    rhs1: Optional[float] = None  # ||grad g||_1 + ||g||_1 / h_z on omega_z*
    lhs2: Optional[float] = None  # H_z |gbar|^2
    rhs2: Optional[float] = None  # ||g||_2 (||grad g||_2 + ||g||_2 / h_z)

    @staticmethod
    def _ratio(lhs, rhs):
        if lhs is None or rhs is None:
            return None
        if rhs == 0.0:
            return 0.0 if lhs == 0.0 else float("inf")
        return lhs / rhs

    @property
    def ratio1(self):
        return self._ratio(self.lhs1, self.rhs1)

    @property
    def ratio2(self):
        return self._ratio(self.lhs2, self.rhs2)


def _value_fn(g) -> Callable:
    return g.value if hasattr(g, "value") else g


def hat_line_pieces(x_triple, breakpoints=None, n_gauss: int = 6):
    """Gauss points and weights for ``int g(x) phi_i(x) dx`` split at all breakpoints."""
    x0, x1, x2 = x_triple
    knots = [x0, x1, x2]
    if breakpoints is not None and len(breakpoints):
        knots.extend(float(b) for b in breakpoints if x0 < b < x2)
    knots = np.unique(knots)
    rule = gauss_rule(n_gauss)
    a, b = knots[:-1], knots[1:]
    x = a[:, None] + rule.points[None, :] * (b - a)[:, None]
    w = rule.weights[None, :] * (b - a)[:, None]
    x, w = x.ravel(), w.ravel()
    phi = np.where(
        x <= x1,
        (x - x0) / (x1 - x0) if x1 > x0 else 1.0,
        (x2 - x) / (x2 - x1) if x2 > x1 else 1.0,
    )
    return x, w * phi


def compute_gbar_struct(
    g,
    z: int,
    x_triple: Sequence[float],
    y_z: float,
    is_boundary: bool = False,
    breakpoints=None,
    n_gauss: int = 6,
) -> GbarRecord:
    """Weighted line average ``int g(x, y_z) phi_i dx / int phi_i dx``; zero on the boundary."""
    x0, x1, x2 = map(float, x_triple)
    if not (x0 <= x1 <= x2):
        raise ValueError("x-triple must be non-decreasing")
    if x2 - x0 <= 0.0:
        raise DegenerateSupport(f"hat support ({x0}, {x2}) is empty")
    if is_boundary:
        return GbarRecord(int(z), 0.0)
    x, w = hat_line_pieces((x0, x1, x2), breakpoints, n_gauss)
    vals = np.asarray(_value_fn(g)(x, np.full_like(x, y_z)), dtype=float)
    return GbarRecord(int(z), float(w @ vals / w.sum()))


def _rect_rule(x0, x1, y0, y1, nx: int, ny: int, n_gauss: int, x_knots=()):
    rule = gauss_rule(n_gauss)

    def axis(a, b, n, extra):
        knots = np.unique(np.concatenate([np.linspace(a, b, n + 1), [k for k in extra if a < k < b]]))
        lo, hi = knots[:-1], knots[1:]
        p = lo[:, None] + rule.points[None, :] * (hi - lo)[:, None]
        w = rule.weights[None, :] * (hi - lo)[:, None]
        return p.ravel(), w.ravel()

    px, wx = axis(x0, x1, nx, x_knots)
    py, wy = axis(y0, y1, ny, ())
    X, Y = np.meshgrid(px, py, indexing="ij")
    W = np.outer(wx, wy)
    return X.ravel(), Y.ravel(), W.ravel()


def check_gbar_bounds(
    patch: NodePatch,
    grid: StructuredGrid,
    g,
    n_sub: int = 16,
    n_gauss: int = 4,
) -> GbarRecord:
    """Evaluate both bounds on ``|gbar_z|`` over the rectangle ``omega_z*``.

    ``g`` needs ``value`` and ``grad``.
    """
    mesh = grid.mesh
    z = patch.node_id
    triple = grid.x_triple(z)
    y_z = float(mesh.points[z, 1])
    rec = compute_gbar_struct(g, z, triple, y_z, bool(mesh.is_boundary_node[z]))
    x0, x2, y0, y1 = grid.omega_star(patch)
    X, Y, W = _rect_rule(x0, x2, y0, y1, n_sub, n_sub, n_gauss, x_knots=(triple[1],))
    v = np.asarray(g.value(X, Y), dtype=float)
    gx, gy = g.grad(X, Y)
    gn = np.hypot(gx, gy)
    g_l1, grad_l1 = float(W @ np.abs(v)), float(W @ gn)
    g_l2, grad_l2 = float(np.sqrt(W @ v**2)), float(np.sqrt(W @ gn**2))
    H, h = patch.H_z, patch.h_z
    rec.lhs1 = H * abs(rec.gbar)
    rec.rhs1 = grad_l1 + g_l1 / h
    rec.lhs2 = H * rec.gbar**2
    rec.rhs2 = g_l2 * (grad_l2 + g_l2 / h)
    return rec


# ----------------------------------------------------------------------
# min-inequality and Theta


@dataclass(frozen=True)
class MinInequality:
    lhs: float
    rhs: float
    holds: bool


def check_min_inequality(a: float, a1: float, b: float, b1: float) -> MinInequality:
    """``min{a a', b b'} / min{a', b'} <= a + b`` for positive inputs."""
    vals = np.array([a, a1, b, b1], dtype=float)
    if not np.all(vals > 0):
        raise NonPositiveInput(f"all inputs must be positive, got {vals.tolist()}")
    lhs = min(a * a1, b * b1) / min(a1, b1)
    rhs = a + b
    return MinInequality(lhs, rhs, bool(lhs <= rhs + 1e-15 * rhs))


def min_inequality_violations(quads: np.ndarray) -> np.ndarray:
    """Indices of rows (a, a', b, b') violating the min-inequality."""
    q = np.asarray(quads, dtype=float)
    if np.any(q <= 0):
        raise NonPositiveInput("all inputs must be positive")
    a, a1, b, b1 = q.T
    lhs = np.minimum(a * a1, b * b1) / np.minimum(a1, b1)
    rhs = a + b
    return np.nonzero(lhs > rhs + 1e-15 * rhs)[0]


@dataclass(frozen=True)
class ThetaRecord:
    theta: float
    gradient_part: float  # eps^2 ||grad g||^2
    patch_part: float  # sum_z (1 + eps^2 H_z^-2) ||g||^2_{omega_z}


def compute_theta(
    g: Field,
    mesh: Triangulation,
    patches: Sequence[NodePatch],
    epsilon: float,
    rule: TriangleRule | None = None,
) -> ThetaRecord:
    rule = rule or triangle_rule(6)
    vals, grads = eval_on_triangles(g, mesh, rule.points)
    w = rule.weights[None, :] * mesh.areas[:, None]
    l2_tri = np.sum(w * vals**2, axis=1)
    h1 = float(np.sum(w * np.sum(grads**2, axis=-1)))
    patch_part = 0.0
    for p in patches:
        patch_part += (1.0 + epsilon**2 / p.H_z**2) * float(l2_tri[list(p.omega_triangles)].sum())
    grad_part = epsilon**2 * h1
    return ThetaRecord(grad_part + patch_part, grad_part, patch_part)
