"""Triangulation container, element geometry and edge topology."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DanglingNode, DegenerateTriangle, MeshError, NonConforming

DUPLICATE_TOL = 1e-14
DEGENERACY_TOL = 1e-14


@dataclass(frozen=True)
class Point2:
    x: float
    y: float


@dataclass(frozen=True)
class TriangleGeometry:
    area: float
    max_edge: float  # H_T
    min_height: float  # h_T = 2|T| / H_T
    angles: tuple[float, float, float]  # interior angle at each vertex
    edge_lengths: tuple[float, float, float]  # edge k is opposite vertex k


@dataclass(frozen=True)
class Edge:
    endpoint_ids: tuple[int, int]
    adjacent_triangles: tuple[int, ...]
    is_boundary: bool
    length: float


def _signed_areas(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = points[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _angles_from_vertices(P: np.ndarray) -> np.ndarray:
    """Interior angles at the three vertices of triangles ``P`` shaped (..., 3, 2).

    ``atan2(|cross|, dot)`` of the two edge vectors is accurate for needles
    and nearly flat triangles alike.
    """
    e1 = np.roll(P, -1, axis=-2) - P
    e2 = np.roll(P, -2, axis=-2) - P
    cross = np.abs(e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])
    dot = np.sum(e1 * e2, axis=-1)
    return np.arctan2(cross, dot)


class Triangulation:
    """Conforming triangulation of a polygonal domain.

    Arrays are read-only after construction. ``edges[k]`` holds sorted node
    ids; ``edge_triangles[k]`` holds the one or two adjacent triangle ids with
    ``-1`` padding in the second slot for boundary edges.
    """

    def __init__(self, points, triangles, boundary_nodes=None, *, check_duplicates=True):
        points = np.array(points, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        n = len(points)
        if not np.all(np.isfinite(points)):
            raise MeshError("point coordinates must be finite")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= n):
            bad = triangles[(triangles < 0) | (triangles >= n)][0]
            raise MeshError(f"triangle references invalid node id {bad}")
        if np.any(
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 0] == triangles[:, 2])
        ):
            raise DegenerateTriangle("triangle with repeated vertex id")
        if check_duplicates and n > 1:
            pairs = cKDTree(points).query_pairs(DUPLICATE_TOL)
            if pairs:
                i, j = sorted(next(iter(pairs)))
                raise MeshError(f"duplicate points {i} and {j}")

        signed = _signed_areas(points, triangles)
        flip = signed < 0
        if np.any(flip):
            triangles = triangles.copy()
            triangles[flip] = triangles[flip][:, [0, 2, 1]]
        p = points[triangles]
        lengths = np.linalg.norm(p[:, [1, 2, 0]] - p[:, [2, 0, 1]], axis=2)
        hmax = lengths.max(axis=1)
        area = np.abs(signed)
        bad = np.nonzero(area <= DEGENERACY_TOL * hmax**2)[0]
        if bad.size:
            raise DegenerateTriangle(f"triangle {bad[0]} has area {area[bad[0]]:.3e}")

        used = np.zeros(n, dtype=bool)
        used[triangles.ravel()] = True
        if not used.all():
            raise DanglingNode(f"node {np.nonzero(~used)[0][0]} belongs to no triangle")

        # local edge k is opposite local vertex k
        local = triangles[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
        local_sorted = np.sort(local, axis=1)
        edges, inverse, counts = np.unique(
            local_sorted, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.ravel()
        if np.any(counts > 2):
            k = int(np.nonzero(counts > 2)[0][0])
            raise NonConforming(f"edge {tuple(edges[k])} shared by {counts[k]} triangles")
        tri_of_local = np.repeat(np.arange(len(triangles)), 3)
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        sorted_edge = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edge[1:] != sorted_edge[:-1]
        edge_tris[sorted_edge[first], 0] = tri_of_local[order[first]]
        edge_tris[sorted_edge[~first], 1] = tri_of_local[order[~first]]

        is_boundary = edge_tris[:, 1] < 0
        derived = np.unique(edges[is_boundary].ravel())
        if boundary_nodes is not None:
            given = np.unique(np.asarray(list(boundary_nodes), dtype=np.int64))
            if not np.array_equal(given, derived):
                extra = np.setdiff1d(given, derived)
                missing = np.setdiff1d(derived, given)
                raise MeshError(
                    f"boundary_nodes disagree with boundary edges "
                    f"(not on boundary: {extra[:5].tolist()}, missing: {missing[:5].tolist()})"
                )

        self.points = points
        self.triangles = triangles
        self.edges = edges
        self.edge_triangles = edge_tris
        self.edge_is_boundary = is_boundary
        self.boundary_nodes = derived
        self.triangle_edges = inverse.reshape(-1, 3)  # edge id opposite each local vertex
        self.areas = area
        self.tri_edge_lengths = lengths
        self.reoriented = np.nonzero(flip)[0]
        for arr in (
            self.points,
            self.triangles,
            self.edges,
            self.edge_triangles,
            self.edge_is_boundary,
            self.boundary_nodes,
            self.triangle_edges,
            self.areas,
            self.tri_edge_lengths,
        ):
            arr.setflags(write=False)

    # ------------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.points
        out = np.linalg.norm(p[self.edges[:, 1]] - p[self.edges[:, 0]], axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def is_boundary_node(self) -> np.ndarray:
        out = np.zeros(self.n_nodes, dtype=bool)
        out[self.boundary_nodes] = True
        out.setflags(write=False)
        return out

    @cached_property
    def free_nodes(self) -> np.ndarray:
        out = np.nonzero(~self.is_boundary_node)[0]
        out.setflags(write=False)
        return out

    @cached_property
    def node_to_triangles(self) -> tuple[tuple[int, ...], ...]:
        buckets: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for t, tri in enumerate(self.triangles.tolist()):
            for v in tri:
                buckets[v].append(t)
        return tuple(tuple(b) for b in buckets)

    @cached_property
    def node_to_edges(self) -> tuple[tuple[int, ...], ...]:
        buckets: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for e, (a, b) in enumerate(self.edges.tolist()):
            buckets[a].append(e)
            buckets[b].append(e)
        return tuple(tuple(b) for b in buckets)

    @cached_property
    def valence(self) -> np.ndarray:
        return np.bincount(self.triangles.ravel(), minlength=self.n_nodes)

    @cached_property
    def max_edges(self) -> np.ndarray:
        return self.tri_edge_lengths.max(axis=1)

    @cached_property
    def min_heights(self) -> np.ndarray:
        return 2.0 * self.areas / self.max_edges

    @cached_property
    def angles(self) -> np.ndarray:
        return _angles_from_vertices(self.points[self.triangles])

    def edge(self, k: int) -> Edge:
        tris = tuple(int(t) for t in self.edge_triangles[k] if t >= 0)
        a, b = self.edges[k]
        return Edge((int(a), int(b)), tris, bool(self.edge_is_boundary[k]), float(self.edge_lengths[k]))

    def point(self, i: int) -> Point2:
        return Point2(float(self.points[i, 0]), float(self.points[i, 1]))

    def vertices(self, t: int) -> np.ndarray:
        return self.points[self.triangles[t]]

    def geometry(self, t: int) -> TriangleGeometry:
        return triangle_geometry(self.vertices(t))

    def __repr__(self):
        return f"Triangulation(nodes={self.n_nodes}, triangles={self.n_triangles}, edges={self.n_edges})"


def build_triangulation(points, triangles, boundary_nodes=None) -> Triangulation:
    return Triangulation(points, triangles, boundary_nodes)


def triangle_geometry(vertices) -> TriangleGeometry:
    """Area, H_T, h_T, angles and edge lengths of a single triangle."""
    v = np.asarray(vertices, dtype=float).reshape(3, 2)
    lengths = np.linalg.norm(v[[1, 2, 0]] - v[[2, 0, 1]], axis=1)
    d1, d2 = v[1] - v[0], v[2] - v[0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    H = float(lengths.max())
    if area <= DEGENERACY_TOL * H**2:
        raise DegenerateTriangle(f"triangle area {area:.3e} is degenerate")
    angles = _angles_from_vertices(v)
    return TriangleGeometry(
        area=float(area),
        max_edge=H,
        min_height=2.0 * float(area) / H,
        angles=tuple(float(a) for a in angles),
        edge_lengths=tuple(float(x) for x in lengths),
    )
