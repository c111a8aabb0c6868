"""Numerical checks of the divergence identity, the auxiliary triangle bounds
and the scaled trace inequalities with the hat-function weight.

Notation for a triangle with vertices ``z, z', z''``: ``S``, ``S'``, ``S''`` are
the edges opposite these vertices, so ``S'`` joins z and z'' and ``S''`` joins
z and z'. ``phi_z`` is the barycentric coordinate of z.

Every check exists in a batched form taking a :class:`PolynomialFamily`
(returning arrays) and a single-function form returning a
:class:`RatioReport`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DegenerateTriangle, EdgeNotInPatch, NegativeTestFunction
from ..mesh.patches import NodePatch
from ..mesh.triangulation import Triangulation
from ..quadrature import composite_rule, gauss_rule, triangle_rule
from .testfunctions import PolynomialFamily, TestFunction

# L1 norms of |v| and |grad v| have kinks, so they use a composite rule on a
# 32 x 32 refinement; squared L2 norms of polynomials use the exact rule.
L1_LEVELS = 32
_EDGE_SAMPLES = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
_VANDER_INV = np.linalg.inv(np.vander(_EDGE_SAMPLES, 4, increasing=True))


@dataclass(frozen=True)
class RatioReport:
    lhs: float
    rhs: float
    ratio: float
    aspect: float
    case_tag: str  # "short-edge" | "long-edge" | "triangle-aux"
    flagged: bool = False  # rhs == 0 < lhs
    both_zero: bool = False


def make_report(lhs: float, rhs: float, aspect: float, tag: str) -> RatioReport:
    if rhs == 0.0:
        if lhs == 0.0:
            return RatioReport(0.0, 0.0, 0.0, aspect, tag, both_zero=True)
        return RatioReport(lhs, rhs, math.inf, aspect, tag, flagged=True)
    return RatioReport(lhs, rhs, lhs / rhs, aspect, tag)


def _as_family(v) -> PolynomialFamily:
    if isinstance(v, PolynomialFamily):
        return v
    if isinstance(v, TestFunction):
        return v.family
    raise TypeError(f"expected a TestFunction or PolynomialFamily, got {type(v).__name__}")


# ----------------------------------------------------------------------
# geometry helpers


@dataclass(frozen=True)
class Corner:
    """Triangle seen from vertex z: z' and z'' follow counter-clockwise order in ``T``."""

    z: np.ndarray
    z1: np.ndarray  # z'
    z2: np.ndarray  # z''
    area: float

    @property
    def len_S(self) -> float:
        return float(np.linalg.norm(self.z2 - self.z1))

    @property
    def len_S1(self) -> float:  # |S'|, edge z -- z''
        return float(np.linalg.norm(self.z2 - self.z))

    @property
    def len_S2(self) -> float:  # |S''|, edge z -- z'
        return float(np.linalg.norm(self.z1 - self.z))

    @property
    def sin_angle(self) -> float:
        a, b = self.z1 - self.z, self.z2 - self.z
        return abs(a[0] * b[1] - a[1] * b[0]) / (np.linalg.norm(a) * np.linalg.norm(b))

    @property
    def mu2(self) -> np.ndarray:
        """Unit vector along S'' pointing from z' to z."""
        d = self.z - self.z1
        return d / np.linalg.norm(d)

    @property
    def aspect(self) -> float:
        lengths = [self.len_S, self.len_S1, self.len_S2]
        H = max(lengths)
        return H * H / (2.0 * self.area)

    def vertices(self) -> np.ndarray:
        """Vertices ordered (z, z', z'') so that phi_z is barycentric coordinate 0."""
        return np.array([self.z, self.z1, self.z2])


def corner(T, k: int) -> Corner:
    T = np.asarray(T, dtype=float)
    if T.shape != (3, 2):
        raise ValueError("triangle must be a (3, 2) array")
    if k not in (0, 1, 2):
        raise ValueError("vertex index must be 0, 1 or 2")
    z, z1, z2 = T[k], T[(k + 1) % 3], T[(k + 2) % 3]
    e1, e2 = z1 - z, z2 - z
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    H = max(np.linalg.norm(e1), np.linalg.norm(e2), np.linalg.norm(z2 - z1))
    if not area > 1e-14 * H * H:
        raise DegenerateTriangle(f"triangle {T.tolist()} is degenerate")
    return Corner(z, z1, z2, area)


def triangle_norms(fam: PolynomialFamily, verts: np.ndarray, levels: int = L1_LEVELS) -> dict:
    """Per-polynomial L1 and squared L2 norms of v and |grad v| on one triangle."""
    verts = np.asarray(verts, dtype=float)
    e1, e2 = verts[1] - verts[0], verts[2] - verts[0]
    area = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    out = {}
    r1 = composite_rule(levels, 2)
    x = r1.points @ verts
    v, g = fam.evaluate(x[:, 0], x[:, 1])
    w = r1.weights * area
    out["v_l1"] = w @ np.abs(v)
    out["grad_l1"] = w @ np.hypot(g[..., 0], g[..., 1])
    out["v_min"] = v.min(axis=0)
    r2 = triangle_rule(6)
    x = r2.points @ verts
    v, g = fam.evaluate(x[:, 0], x[:, 1])
    w = r2.weights * area
    out["v_l2sq"] = w @ v**2
    out["grad_l2sq"] = w @ np.sum(g**2, axis=-1)
    return out


def edge_cubic_coeffs(fam: PolynomialFamily, a, b) -> np.ndarray:
    """Power-basis coefficients (k, 4) of t -> v(a + t (b - a)), t in [0, 1]."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    pts = a + _EDGE_SAMPLES[:, None] * (b - a)
    vals, _ = fam.evaluate(pts[:, 0], pts[:, 1], need_grad=False)  # (4, k)
    return (_VANDER_INV @ vals).T


def edge_abs_phi_integral(fam: PolynomialFamily, a, b, signed: bool = False) -> np.ndarray:
    """``int_S |v| phi`` over the segment a -> b where phi = 1 at a and 0 at b.

    v restricted to the segment is a cubic in t, so the integrand on each
    interval between consecutive real roots is a sign-definite quartic and is
    integrated exactly through its antiderivative. ``signed=True`` returns
    ``int_S v phi`` instead.
    """
    length = float(np.linalg.norm(np.asarray(b, dtype=float) - np.asarray(a, dtype=float)))
    c = edge_cubic_coeffs(fam, a, b)
    # q(t) = p(t) (1 - t), degree 4; Q = antiderivative, degree 5
    q = np.zeros((len(c), 5))
    q[:, :4] += c
    q[:, 1:] -= c
    Q = np.zeros((len(c), 6))
    Q[:, 1:] = q / np.arange(1, 6)

    # sign-definite members (the common case) use Gauss directly, which is
    # more accurate than the monomial coefficients
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    g = gauss_rule(6)
    pts = a + g.points[:, None] * (b - a)
    vals, _ = fam.evaluate(pts[:, 0], pts[:, 1], need_grad=False)
    total = (g.weights * (1.0 - g.points)) @ vals
    if signed:
        return length * total
    out = np.abs(total)
    scale = np.abs(c).max(axis=1)
    for i in range(len(c)):
        if scale[i] == 0.0:
            continue
        coeffs = c[i] / scale[i]
        coeffs = np.where(np.abs(coeffs) < 1e-14, 0.0, coeffs)
        if not np.any(coeffs[1:]):
            continue
        roots = np.roots(coeffs[::-1])
        real = roots[np.abs(roots.imag) <= 1e-12 * (1 + np.abs(roots.real))].real
        inner = np.unique(real[(real > 0.0) & (real < 1.0)])
        if inner.size == 0:
            continue
        knots = np.concatenate([[0.0], inner, [1.0]])
        vals = (Q[i][None, :] * knots[:, None] ** np.arange(6)).sum(axis=1)
        out[i] = np.abs(np.diff(vals)).sum()
    return length * out


def _sign_samples(fam: PolynomialFamily, verts: np.ndarray, levels: int = L1_LEVELS) -> np.ndarray:
    """Values at the composite quadrature points, the vertices and along the edges."""
    r = composite_rule(levels, 2)
    t = np.linspace(0.0, 1.0, 4 * levels + 1)[:, None]
    pts = np.vstack(
        [r.points @ verts]
        + [verts[i] + t * (verts[(i + 1) % 3] - verts[i]) for i in range(3)]
    )
    v, _ = fam.evaluate(pts[:, 0], pts[:, 1], need_grad=False)
    return v


def nonnegative_shift(fam: PolynomialFamily, verts, levels: int = L1_LEVELS) -> np.ndarray:
    """Constants that make every member non-negative on the sampled triangle."""
    v = _sign_samples(fam, np.asarray(verts, dtype=float), levels)
    return np.maximum(0.0, -v.min(axis=0))


def _check_nonnegative(fam: PolynomialFamily, verts: np.ndarray, levels: int = L1_LEVELS) -> None:
    v = _sign_samples(fam, verts, levels)
    tol = 1e-12 * (np.abs(v).max(axis=0) + 1e-300)
    bad = np.nonzero(v.min(axis=0) < -tol)[0]
    if bad.size:
        raise NegativeTestFunction(
            f"test function {int(bad[0])} takes the value {v[:, bad[0]].min():.3e} < 0"
        )


# ----------------------------------------------------------------------
# divergence identity and auxiliary bounds


def divergence_identity_terms(T, k: int, v) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of ``sin(S',S'') int_{S'} v phi_z = int_T (phi_z grad v . mu'' + v / |S''|)``.

    For a thin triangle, rounding in the physical coordinates is amplified by
    the aspect ratio. The geometric factors and the local coordinates of the
    vertices are therefore formed in extended precision, and the polynomial
    is evaluated in its local frame, where all quantities are O(1).
    """
    fam = _as_family(v)
    corner(T, k)  # validates the triangle
    ld = np.longdouble
    T = np.asarray(T, dtype=ld)
    z, z1, z2 = T[k], T[(k + 1) % 3], T[(k + 2) % 3]
    e1, e2 = z1 - z, z2 - z
    cross = abs(e1[0] * e2[1] - e1[1] * e2[0])
    len1 = np.sqrt(e2 @ e2)  # |S'|
    len2 = np.sqrt(e1 @ e1)  # |S''|
    sin_angle = cross / (len1 * len2)
    area = cross / 2
    mu2 = -e1 / len2
    L = fam.frame.L.astype(ld)
    loc = ((np.stack([z, z1, z2]) - fam.frame.origin.astype(ld)) @ L.T).astype(float)
    mu_loc = (L @ mu2).astype(float)

    g = gauss_rule(6)
    pts = loc[0] + g.points[:, None] * (loc[2] - loc[0])
    vals, _ = fam.evaluate_local(pts[:, 0], pts[:, 1])
    lhs = float(sin_angle * len1) * ((g.weights * (1.0 - g.points)) @ vals)

    rule = triangle_rule(6)
    q = rule.points @ loc
    vals, grads = fam.evaluate_local(q[:, 0], q[:, 1])
    phi = rule.points[:, 0]
    integrand = phi[:, None] * (grads @ mu_loc) + vals / float(len2)
    rhs = float(area) * (rule.weights @ integrand)
    return lhs, rhs


def divergence_identity_residual(T, k: int, v) -> float | np.ndarray:
    """``|LHS - RHS|`` of the divergence identity; an array for a family."""
    lhs, rhs = divergence_identity_terms(T, k, v)
    res = np.abs(lhs - rhs)
    return float(res[0]) if isinstance(v, TestFunction) else res


def aux_a_terms(T, k: int, v, check_sign: bool = True, norms: Optional[dict] = None):
    """lhs = sin(S',S'') ||v phi_z||_{1;S'}, rhs = ||grad v||_{1;T} + ||v||_{1;T} / |S''|."""
    fam = _as_family(v)
    c = corner(T, k)
    verts = c.vertices()
    if check_sign:
        _check_nonnegative(fam, verts)
    n = norms if norms is not None else triangle_norms(fam, verts)
    lhs = c.sin_angle * edge_abs_phi_integral(fam, c.z, c.z2)
    rhs = n["grad_l1"] + n["v_l1"] / c.len_S2
    return lhs, rhs, c.aspect


def aux_b_terms(T, k: int, v, check_sign: bool = True, norms: Optional[dict] = None):
    """lhs = |S'|^-1 ||v phi_z||_{1;S'},
    rhs = |S''|^-1 ||v phi_z||_{1;S''} + |S| |T|^-1 ||grad v||_{1;T}."""
    fam = _as_family(v)
    c = corner(T, k)
    verts = c.vertices()
    if check_sign:
        _check_nonnegative(fam, verts)
    n = norms if norms is not None else triangle_norms(fam, verts)
    lhs = edge_abs_phi_integral(fam, c.z, c.z2) / c.len_S1
    rhs = edge_abs_phi_integral(fam, c.z, c.z1) / c.len_S2 + c.len_S / c.area * n["grad_l1"]
    return lhs, rhs, c.aspect


def check_aux_a(T, k: int, v: TestFunction) -> RatioReport:
    lhs, rhs, aspect = aux_a_terms(T, k, v)
    return make_report(float(lhs[0]), float(rhs[0]), aspect, "triangle-aux")


def check_aux_b(T, k: int, v: TestFunction) -> RatioReport:
    lhs, rhs, aspect = aux_b_terms(T, k, v)
    return make_report(float(lhs[0]), float(rhs[0]), aspect, "triangle-aux")


# ----------------------------------------------------------------------
# scaled trace inequalities on node patches


def patch_norms(fam: PolynomialFamily, patch: NodePatch, mesh: Triangulation) -> dict:
    total: dict = {}
    for t in patch.omega_triangles:
        n = triangle_norms(fam, mesh.points[mesh.triangles[t]])
        for key, val in n.items():
            if key == "v_min":
                total[key] = np.minimum(total.get(key, np.inf), val)
            else:
                total[key] = total.get(key, 0.0) + val
    return total


def _edge_from_z(patch: NodePatch, mesh: Triangulation, edge: int):
    if edge not in patch.gamma_z:
        raise EdgeNotInPatch(f"edge {edge} is not an interior edge at node {patch.node_id}")
    a, b = mesh.edges[edge]
    other = b if a == patch.node_id else a
    return mesh.points[patch.node_id], mesh.points[other]


def trace_edge_weight(patch: NodePatch, edge: int) -> tuple[float, str]:
    """H_z^-1 on short edges and h_z^-1 on long edges, as in the inequality."""
    if patch.is_short(edge):
        return 1.0 / patch.H_z, "short-edge"
    return 1.0 / patch.h_z, "long-edge"


def scaled_trace_terms(
    patch: NodePatch, mesh: Triangulation, v, edge: int, norms: Optional[dict] = None
):
    """Return (edge integral ||v phi_z||_{1;S}, patch norms, weight, tag)."""
    fam = _as_family(v)
    z, other = _edge_from_z(patch, mesh, edge)
    norms = norms if norms is not None else patch_norms(fam, patch, mesh)
    weight, tag = trace_edge_weight(patch, edge)
    return edge_abs_phi_integral(fam, z, other), norms, weight, tag


def trace_L1_sides(edge_int, norms, weight):
    return edge_int, norms["grad_l1"] + norms["v_l1"] * weight


def trace_sq_sides(edge_int, norms, weight, edge_length):
    lhs = edge_int**2 / edge_length
    v2 = np.sqrt(norms["v_l2sq"])
    g2 = np.sqrt(norms["grad_l2sq"])
    return lhs, v2 * g2 + norms["v_l2sq"] * weight


def check_scaled_trace_L1(patch: NodePatch, mesh: Triangulation, v: TestFunction, edge: int) -> RatioReport:
    """``||v phi_z||_{1;S}`` against ``||grad v||_{1;omega_z} + ||v||_{1;omega_z} * weight``."""
    e_int, norms, weight, tag = scaled_trace_terms(patch, mesh, v, edge)
    lhs, rhs = trace_L1_sides(e_int, norms, weight)
    return make_report(float(lhs[0]), float(rhs[0]), patch.aspect, tag)


def check_scaled_trace_sq(patch: NodePatch, mesh: Triangulation, v: TestFunction, edge: int) -> RatioReport:
    """``|S|^-1 ||v phi_z||^2_{1;S}`` against ``||v|| ||grad v|| + ||v||^2 * weight`` (L2 norms)."""
    e_int, norms, weight, tag = scaled_trace_terms(patch, mesh, v, edge)
    lhs, rhs = trace_sq_sides(e_int, norms, weight, float(mesh.edge_lengths[edge]))
    return make_report(float(lhs[0]), float(rhs[0]), patch.aspect, tag)
