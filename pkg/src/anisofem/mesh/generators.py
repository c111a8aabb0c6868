"""Mesh generators: uniform, Shishkin layer-adapted, and isolated node patches."""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidParams
from .triangulation import Triangulation


def tensor_mesh(xs, ys) -> Triangulation:
    """Tensor-product mesh with every cell split along its SW-NE diagonal.

    Node ``(i, j)`` (x index i, y index j) gets id ``j * len(xs) + i``.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys)
    points = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    a = (j * (nx + 1) + i).ravel()
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    return Triangulation(points, tris, check_duplicates=False)


def generate_uniform(n: int) -> Triangulation:
    if n < 1:
        raise InvalidParams(f"n must be >= 1, got {n}")
    grid = np.linspace(0.0, 1.0, n + 1)
    return tensor_mesh(grid, grid)


def shishkin_transition(n: int, epsilon: float, sigma: float, sides: str = "one") -> float:
    cap = 0.5 if sides == "one" else 0.25
    return min(cap, sigma * epsilon * math.log(n))


def shishkin_grid(n: int, epsilon: float, sigma: float, sides: str = "one") -> np.ndarray:
    """Piecewise-uniform layer-adapted 1-D grid on [0, 1] with ``n`` cells.

    ``sides="one"``: n/2 cells on [0, tau], n/2 on [tau, 1].
    ``sides="both"``: n/4 cells on each of [0, tau] and [1 - tau, 1].
    """
    tau = shishkin_transition(n, epsilon, sigma, sides)
    if sides == "one":
        m = n // 2
        return np.concatenate([np.linspace(0.0, tau, m + 1), np.linspace(tau, 1.0, m + 1)[1:]])
    m = n // 4
    return np.concatenate(
        [
            np.linspace(0.0, tau, m + 1),
            np.linspace(tau, 1.0 - tau, 2 * m + 1)[1:],
            np.linspace(1.0 - tau, 1.0, m + 1)[1:],
        ]
    )


def generate_shishkin(n: int, epsilon: float, sigma: float = 2.0, sides: str = "one") -> Triangulation:
    """Layer-adapted mesh of the unit square for layers along y = 0 (and y = 1).

    The y-grid is a Shishkin grid with ``n`` cells and transition point
    ``tau = min{1/2, sigma*eps*ln n}`` (``min{1/4, ...}`` when ``sides="both"``).
    The x-grid is uniform with ``n/2`` cells, so ``h_x = 2/n`` exceeds every
    y-spacing. Every triangle is then a right triangle whose shortest edge is
    vertical and lies on a grid line ``x = x_i``, with its third vertex on a
    neighbouring line; elements are elongated along x.
    """
    if sides not in ("one", "both"):
        raise InvalidParams(f"sides must be 'one' or 'both', got {sides!r}")
    step = 2 if sides == "one" else 4
    if n < 4 or n % step:
        raise InvalidParams(f"n must be >= 4 and divisible by {step}, got {n}")
    if not 0.0 < epsilon <= 1.0:
        raise InvalidParams(f"epsilon must lie in (0, 1], got {epsilon}")
    if sigma <= 0:
        raise InvalidParams(f"sigma must be positive, got {sigma}")
    ys = shishkin_grid(n, epsilon, sigma, sides)
    xs = np.linspace(0.0, 1.0, n // 2 + 1)
    return tensor_mesh(xs, ys)


def generate_patch(
    H: float,
    h: float,
    n_triangles: int,
    style: str = "strip",
    obtuseness: float = 0.0,
    rotation: float = 0.0,
) -> Triangulation:
    """A single node patch: node 0 is the only interior node.

    ``fan``: the vertices of a polygon inscribed in an ellipse with axes
    ``H`` and ``2b``, where b is chosen so that ``area / H`` is about ``h``
    (clamped to a regular polygon when h is large).

    ``strip``: node 0 sits on the line x = 0 between two close nodes at
    distance ~h (the short edges); the remaining vertices lie on x = +-H/2.
    ``obtuseness`` shears the patch so the angles at node 0 exceed pi/2 by
    about ``obtuseness * h_T / H_T``.
    """
    if not 0 < h <= H:
        raise InvalidParams(f"need 0 < h <= H, got h={h}, H={H}")
    if style == "fan":
        if n_triangles < 3:
            raise InvalidParams("a fan patch needs at least 3 triangles")
        k = n_triangles
        theta = 2.0 * np.pi * np.arange(k) / k
        b = min(H / 2.0, 4.0 * h / (k * math.sin(2.0 * math.pi / k)))
        ring = np.column_stack([H / 2.0 * np.cos(theta), b * np.sin(theta)])
        thin = 2.0 * b / H
    elif style == "strip":
        if n_triangles < 4 or n_triangles % 2:
            raise InvalidParams("a strip patch needs an even number >= 4 of triangles")
        k = n_triangles // 2
        delta = h * k / (2.0 * (k - 1))
        inner = -delta + 2.0 * delta * np.arange(1, k) / k
        right = np.column_stack([np.full(k - 1, H / 2.0), inner])
        left = np.column_stack([np.full(k - 1, -H / 2.0), inner[::-1]])
        ring = np.vstack([[[0.0, -delta]], right, [[0.0, delta]], left])
        thin = 2.0 * delta / H
    else:
        raise InvalidParams(f"unknown patch style {style!r}")
    if obtuseness:
        # y += s*x turns the right angle between (0,-1) and (1,0) into pi/2 + atan(s)
        ring = ring.copy()
        ring[:, 1] += math.tan(obtuseness * min(thin, 1.0)) * ring[:, 0]
    points = np.vstack([[[0.0, 0.0]], ring])
    if rotation:
        c, s = math.cos(rotation), math.sin(rotation)
        points = points @ np.array([[c, s], [-s, c]])
    m = len(ring)
    tris = [(0, 1 + i, 1 + (i + 1) % m) for i in range(m)]
    return Triangulation(points, tris)
