"""Fixed quadrature rules on triangles and edges.

Triangle rules are stored in barycentric coordinates with weights that sum
to one, so the integral over a triangle T is ``|T| * sum(w * f(points))``.
Edge rules live on [0, 1] and are likewise normalised to unit total weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

DEFAULT_DEGREE = 6


@dataclass(frozen=True)
class TriangleRule:
    points: np.ndarray  # (n, 3) barycentric
    weights: np.ndarray  # (n,)
    exactness_degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def physical_points(self, vertices: np.ndarray) -> np.ndarray:
        """Map the rule to a triangle (or a stack of triangles).

        ``vertices`` has shape (3, 2) or (m, 3, 2); the result has shape
        (n, 2) or (m, n, 2).
        """
        return np.einsum("qa,...ad->...qd", self.points, vertices)


@dataclass(frozen=True)
class EdgeRule:
    points: np.ndarray  # (n,) in [0, 1]
    weights: np.ndarray
    exactness_degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)


def _orbit_s3(a: float, b: float) -> list[tuple[float, float, float]]:
    c = 1.0 - a - b
    perms = {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}
    return sorted(perms)


def _symmetric_rule(orbits, degree: int) -> TriangleRule:
    pts, wts = [], []
    for weight, a, b in orbits:
        if b is None:
            if a is None:
                group = [(1 / 3, 1 / 3, 1 / 3)]
            else:
                c = 1.0 - 2.0 * a
                group = [(a, a, c), (a, c, a), (c, a, a)]
        else:
            group = _orbit_s3(a, b)
        pts.extend(group)
        wts.extend([weight] * len(group))
    return TriangleRule(np.array(pts), np.array(wts), degree)


# Strang-Fix / Dunavant symmetric rules.
TRI_DEGREE_2 = _symmetric_rule([(1 / 3, 1 / 6, None)], 2)
TRI_DEGREE_4 = _symmetric_rule(
    [
        (0.223381589678011465944640, 0.445948490915964886318329, None),
        (0.109951743655321867388693, 0.091576213509770743459571, None),
    ],
    4,
)
TRI_DEGREE_6 = _symmetric_rule(
    [
        (0.116786275726379366030690, 0.249286745170910421291639, None),
        (0.050844906370206816920937, 0.063089014491502228340332, None),
        (0.082851075618373575193553, 0.053145049844816947353250, 0.310352451033784405416607),
    ],
    6,
)

_TRIANGLE_RULES = {2: TRI_DEGREE_2, 4: TRI_DEGREE_4, 6: TRI_DEGREE_6}


def triangle_rule(degree: int = DEFAULT_DEGREE) -> TriangleRule:
    """Cheapest shipped rule exact to at least ``degree``."""
    for d in sorted(_TRIANGLE_RULES):
        if d >= degree:
            return _TRIANGLE_RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}; max is {max(_TRIANGLE_RULES)}")


@lru_cache(maxsize=None)
def gauss_rule(n_points: int) -> EdgeRule:
    if not 1 <= n_points <= 6:
        raise ValueError("edge rules ship with 1 to 6 Gauss points")
    x, w = leggauss(n_points)
    return EdgeRule((x + 1.0) / 2.0, w / 2.0, 2 * n_points - 1)


def edge_rule(degree: int = DEFAULT_DEGREE) -> EdgeRule:
    return gauss_rule(min(6, max(1, (degree + 2) // 2)))


def triangle_area(vertices: np.ndarray) -> np.ndarray:
    """Unsigned area of one (3, 2) triangle or a stack (m, 3, 2)."""
    v = np.asarray(vertices, dtype=float)
    d1 = v[..., 1, :] - v[..., 0, :]
    d2 = v[..., 2, :] - v[..., 0, :]
    return 0.5 * np.abs(d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])


def integrate_triangle(f, vertices, rule: TriangleRule | None = None) -> float:
    """Integrate ``f(x, y)`` (vectorised) over the triangle ``vertices``."""
    rule = rule or triangle_rule()
    v = np.asarray(vertices, dtype=float)
    q = rule.physical_points(v)
    vals = np.asarray(f(q[:, 0], q[:, 1]), dtype=float)
    vals = np.broadcast_to(vals, rule.weights.shape)
    return float(triangle_area(v) * np.dot(rule.weights, vals))


def integrate_edge(f, a, b, rule: EdgeRule | None = None) -> float:
    """Integrate ``f(x, y)`` along the segment from ``a`` to ``b``."""
    rule = rule or edge_rule()
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = a[None, :] + rule.points[:, None] * (b - a)[None, :]
    vals = np.broadcast_to(np.asarray(f(q[:, 0], q[:, 1]), dtype=float), rule.weights.shape)
    return float(np.linalg.norm(b - a) * np.dot(rule.weights, vals))


def integrate_patch(f, patch, mesh, rule: TriangleRule | None = None) -> float:
    """Sum of triangle integrals over the member triangles of a node patch."""
    return sum(
        integrate_triangle(f, mesh.points[mesh.triangles[t]], rule) for t in patch.omega_triangles
    )


def subdivide_barycentric(levels: int) -> np.ndarray:
    """Uniform refinement of the reference triangle into ``levels**2`` pieces.

    Returns barycentric vertex coordinates with shape (levels**2, 3, 3).
    """
    k = levels
    tris = []
    for i in range(k):
        for j in range(k - i):
            p0 = (i, j)
            p1 = (i + 1, j)
            p2 = (i, j + 1)
            tris.append((p0, p1, p2))
            if j < k - i - 1:
                tris.append(((i + 1, j), (i + 1, j + 1), (i, j + 1)))
    out = np.empty((len(tris), 3, 3))
    for n, tri in enumerate(tris):
        for a, (i, j) in enumerate(tri):
            s, t = i / k, j / k
            out[n, a] = (1.0 - s - t, s, t)
    return out


@lru_cache(maxsize=8)
def composite_rule(levels: int, degree: int = DEFAULT_DEGREE) -> TriangleRule:
    """Base rule repeated on a uniform ``levels``-fold refinement.

    Useful for integrands with kinks (``|v|``, ``|grad v|``) where a single
    polynomial rule loses accuracy.
    """
    base = triangle_rule(degree)
    sub = subdivide_barycentric(levels)
    pts = np.einsum("qa,sab->sqb", base.points, sub).reshape(-1, 3)
    wts = np.tile(base.weights, len(sub)) / len(sub)
    return TriangleRule(pts, wts, base.exactness_degree)
