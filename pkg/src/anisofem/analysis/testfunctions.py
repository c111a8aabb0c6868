"""Cubic test polynomials in a local, anisotropically scaled frame.

A test function is ``v(x) = p(L (x - origin))`` where ``p`` is a bivariate
polynomial of total degree <= 3 in local coordinates ``(xi, eta)``. Choosing
``L`` as a rotation followed by the scaling ``diag(2/H, 1/h)`` gives
functions that vary on the natural length scales of an anisotropic element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# (power of xi, power of eta) for each coefficient slot
MONOMIAL_POWERS = np.array(
    [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]
)
N_COEFFS = len(MONOMIAL_POWERS)


def monomial_basis(xi: np.ndarray, eta: np.ndarray):
    """Values and local partial derivatives of all monomials, each shaped (..., 10)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    # powers 0..3 of each coordinate, stacked on the last axis
    xp = np.stack([np.ones_like(xi), xi, xi**2, xi**3], axis=-1)
    ep = np.stack([np.ones_like(eta), eta, eta**2, eta**3], axis=-1)
    a, b = MONOMIAL_POWERS[:, 0], MONOMIAL_POWERS[:, 1]
    val = xp[..., a] * ep[..., b]
    dxi = np.where(a > 0, a * xp[..., np.maximum(a - 1, 0)], 0.0) * ep[..., b]
    deta = xp[..., a] * np.where(b > 0, b * ep[..., np.maximum(b - 1, 0)], 0.0)
    return val, dxi, deta


@dataclass(frozen=True)
class LocalFrame:
    """Affine map ``x -> L (x - origin)`` to local coordinates."""

    origin: np.ndarray
    L: np.ndarray

    @staticmethod
    def identity() -> "LocalFrame":
        return LocalFrame(np.zeros(2), np.eye(2))

    @staticmethod
    def aligned(origin, direction, long_scale: float, short_scale: float) -> "LocalFrame":
        """Frame with xi along ``direction`` scaled by ``long_scale``, eta across it."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        n = np.array([-d[1], d[0]])
        L = np.vstack([d / long_scale, n / short_scale])
        return LocalFrame(np.asarray(origin, dtype=float), L)

    @staticmethod
    def for_points(pts) -> "LocalFrame":
        """Frame fitted to a point cloud: xi along its diameter, eta scaled by area/diameter."""
        pts = np.asarray(pts, dtype=float)
        d = pts[:, None, :] - pts[None, :, :]
        dist = np.hypot(d[..., 0], d[..., 1])
        i, j = np.unravel_index(np.argmax(dist), dist.shape)
        H = dist[i, j]
        direction = pts[j] - pts[i]
        u = direction / H
        n = np.array([-u[1], u[0]])
        width = np.ptp(pts @ n)
        return LocalFrame.aligned(pts.mean(axis=0), direction, H / 2.0, max(width, 1e-300))

    def to_local(self, x, y):
        p = np.stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)], axis=-1) - self.origin
        q = p @ self.L.T
        return q[..., 0], q[..., 1]


class PolynomialFamily:
    """Several cubic polynomials sharing one local frame; coefficients (k, 10)."""

    def __init__(self, coeffs, frame: LocalFrame | None = None, shift=None):
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if c.shape[1] > N_COEFFS:
            raise ValueError("at most 10 coefficients (total degree 3)")
        if c.shape[1] < N_COEFFS:
            c = np.pad(c, ((0, 0), (0, N_COEFFS - c.shape[1])))
        self.coeffs = c
        self.frame = frame or LocalFrame.identity()
        self.shift = np.zeros(len(c)) if shift is None else np.asarray(shift, dtype=float)

    def __len__(self) -> int:
        return len(self.coeffs)

    def evaluate(self, x, y, need_grad: bool = True):
        """Values (..., k) and physical gradients (..., k, 2)."""
        xi, eta = self.frame.to_local(x, y)
        val, dxi, deta = monomial_basis(xi, eta)
        v = val @ self.coeffs.T + self.shift
        if not need_grad:
            return v, None
        gl = np.stack([dxi @ self.coeffs.T, deta @ self.coeffs.T], axis=-1)
        return v, gl @ self.frame.L  # chain rule: grad_x = L^T grad_local

    def evaluate_local(self, xi, eta):
        """Values (..., k) and local partial derivatives (..., k, 2) at local coordinates."""
        val, dxi, deta = monomial_basis(xi, eta)
        v = val @ self.coeffs.T + self.shift
        return v, np.stack([dxi @ self.coeffs.T, deta @ self.coeffs.T], axis=-1)

    def with_shift(self, shift) -> "PolynomialFamily":
        return PolynomialFamily(self.coeffs, self.frame, self.shift + np.asarray(shift, dtype=float))

    def member(self, i: int) -> "TestFunction":
        return TestFunction(self.coeffs[i], self.frame, float(self.shift[i]))


class TestFunction:
    """A single cubic test polynomial with value and analytic gradient."""

    __test__ = False  # not a pytest class

    def __init__(self, coeffs, frame: LocalFrame | None = None, shift: float = 0.0):
        self.family = PolynomialFamily(np.atleast_2d(coeffs), frame, [shift])

    @property
    def coeffs(self) -> np.ndarray:
        return self.family.coeffs[0]

    @property
    def degree(self) -> int:
        nz = np.nonzero(self.coeffs)[0]
        return int(MONOMIAL_POWERS[nz].sum(axis=1).max()) if len(nz) else 0

    def value(self, x, y):
        return self.family.evaluate(x, y, need_grad=False)[0][..., 0]

    def grad(self, x, y):
        g = self.family.evaluate(x, y)[1][..., 0, :]
        return g[..., 0], g[..., 1]

    @staticmethod
    def constant(c: float = 1.0) -> "TestFunction":
        return TestFunction([c])

    @staticmethod
    def linear(a: float, b: float, c: float = 0.0) -> "TestFunction":
        """``c + a x + b y`` in physical coordinates."""
        return TestFunction([c, a, b])


def standard_family(frame: LocalFrame, n_random: int, rng: np.random.Generator) -> PolynomialFamily:
    """All ten monomials followed by ``n_random`` random cubics."""
    rand = rng.standard_normal((n_random, N_COEFFS))
    return PolynomialFamily(np.vstack([np.eye(N_COEFFS), rand]), frame)


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])
