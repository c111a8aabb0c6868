"""Problem definitions and manufactured solutions for -eps^2 Δu + f(x, y; u) = 0."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParams

Reaction = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """Homogeneous Dirichlet problem ``-eps^2 Δu + f(x, y; u) = 0`` on Ω.

    ``reaction(x, y, u)`` must be vectorised. ``C_f`` is the one-sided
    Lipschitz constant of the reaction in u; we require ``C_f + eps^2 >= 1``.
    """

    epsilon: float
    reaction: Reaction
    C_f: float
    reaction_du: Optional[Reaction] = None
    exact_solution: Optional[object] = None
    name: str = ""

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise InvalidParams(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.C_f < 0:
            raise InvalidParams("C_f must be non-negative")
        if self.C_f + self.epsilon**2 < 1.0 - 1e-14:
            raise InvalidParams(
                f"need C_f + eps^2 >= 1 (got {self.C_f} + {self.epsilon**2}); rescale the problem"
            )


class LinearReaction:
    """f(x, y; u) = c(x, y) u - F(x, y)."""

    def __init__(self, c, F):
        self.c = c if callable(c) else (lambda x, y, _c=float(c): np.full(np.shape(x), _c))
        self.F = F if callable(F) else (lambda x, y, _F=float(F): np.full(np.shape(x), _F))

    def __call__(self, x, y, u):
        return self.c(x, y) * u - self.F(x, y)

    def du(self, x, y, u):
        return np.broadcast_to(self.c(x, y), np.shape(u)).astype(float)


class CubicReaction:
    """f(x, y; u) = u^3 + u - F(x, y); one-sided Lipschitz with C_f = 1."""

    def __init__(self, F):
        self.F = F

    def __call__(self, x, y, u):
        return u**3 + u - self.F(x, y)

    def du(self, x, y, u):
        return 3.0 * u**2 + 1.0


# ----------------------------------------------------------------------
# manufactured solutions: value, grad, laplacian (all vectorised)


class ZeroSolution:
    name = "zero"

    def value(self, x, y):
        return np.zeros(np.shape(x))

    def grad(self, x, y):
        z = np.zeros(np.shape(x))
        return z, z.copy()

    def laplacian(self, x, y):
        return np.zeros(np.shape(x))


class SinSin:
    """u = sin(pi x) sin(pi y)."""

    name = "sinsin"

    def value(self, x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def grad(self, x, y):
        return (
            np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
        )

    def laplacian(self, x, y):
        return -2.0 * np.pi**2 * self.value(x, y)


class BoundaryLayer:
    """u = sin(pi x) v(y) with layers of width eps at y = 0 and y = 1.

    ``v(y) = 1 - (e^{-y/eps} + e^{-(1-y)/eps}) / (1 + e^{-1/eps})`` solves
    ``-eps^2 v'' + v = 1`` with ``v(0) = v(1) = 0``.
    """

    name = "layer"

    def __init__(self, epsilon: float):
        self.epsilon = float(epsilon)
        self._scale = 1.0 + math.exp(-1.0 / self.epsilon)

    def _v(self, y):
        e = self.epsilon
        return 1.0 - (np.exp(-y / e) + np.exp(-(1.0 - y) / e)) / self._scale

    def _dv(self, y):
        e = self.epsilon
        return (np.exp(-y / e) - np.exp(-(1.0 - y) / e)) / (e * self._scale)

    def value(self, x, y):
        return np.sin(np.pi * x) * self._v(y)

    def grad(self, x, y):
        return (
            np.pi * np.cos(np.pi * x) * self._v(y),
            np.sin(np.pi * x) * self._dv(y),
        )

    def laplacian(self, x, y):
        v = self._v(y)
        return np.sin(np.pi * x) * (-(np.pi**2) * v + (v - 1.0) / self.epsilon**2)


def forcing_for(solution, epsilon: float, reaction_of_u: Callable[[np.ndarray], np.ndarray]):
    """F(x, y) = -eps^2 Δu + g(u) so that f = g(u) - F vanishes at the exact u."""

    def F(x, y):
        u = solution.value(x, y)
        return -(epsilon**2) * solution.laplacian(x, y) + reaction_of_u(u)

    return F


def linear_problem(solution, epsilon: float, c: float = 1.0) -> ProblemSpec:
    """f = c u - F with F manufactured from ``solution``."""
    if c < 0:
        raise InvalidParams("reaction coefficient c must be >= 0")
    F = forcing_for(solution, epsilon, lambda u: c * u)
    if isinstance(solution, BoundaryLayer) and c == 1.0:
        # closed form avoids cancellation in -eps^2 Δu for tiny eps
        def F(x, y, _s=solution, _e=epsilon):
            return np.sin(np.pi * x) * (1.0 + _e**2 * np.pi**2 * _s._v(y))

    reaction = LinearReaction(c, F)
    return ProblemSpec(
        epsilon=epsilon,
        reaction=reaction,
        C_f=c,
        reaction_du=reaction.du,
        exact_solution=solution,
        name=f"linear(c={c})/{getattr(solution, 'name', 'custom')}",
    )


def cubic_problem(solution, epsilon: float) -> ProblemSpec:
    F = forcing_for(solution, epsilon, lambda u: u**3 + u)
    reaction = CubicReaction(F)
    return ProblemSpec(
        epsilon=epsilon,
        reaction=reaction,
        C_f=1.0,
        reaction_du=reaction.du,
        exact_solution=solution,
        name=f"cubic/{getattr(solution, 'name', 'custom')}",
    )


def zero_problem(epsilon: float = 1.0) -> ProblemSpec:
    """f ≡ 0; admissible only for eps = 1 because C_f = 0."""

    def f(x, y, u):
        return np.zeros(np.shape(u))

    def df(x, y, u):
        return np.zeros(np.shape(u))

    return ProblemSpec(epsilon, f, 0.0, df, ZeroSolution(), "zero")
