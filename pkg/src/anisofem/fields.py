"""Scalar fields evaluated on triangles: P1 nodal vectors or analytic callables."""

from __future__ import annotations

from typing import Protocol, Union, runtime_checkable

import numpy as np

from .mesh.triangulation import Triangulation


@runtime_checkable
class AnalyticField(Protocol):
    def value(self, x: np.ndarray, y: np.ndarray) -> np.ndarray: ...

    def grad(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


Field = Union[np.ndarray, AnalyticField]


class FunctionField:
    """Wrap plain callables ``value(x, y)`` and ``grad(x, y)`` as a field."""

    def __init__(self, value, grad=None):
        self._value = value
        self._grad = grad

    def value(self, x, y):
        return np.broadcast_to(np.asarray(self._value(x, y), dtype=float), np.shape(x))

    def grad(self, x, y):
        if self._grad is None:
            raise TypeError("this field has no gradient")
        gx, gy = self._grad(x, y)
        shape = np.shape(x)
        return np.broadcast_to(gx, shape), np.broadcast_to(gy, shape)


class Constant:
    def __init__(self, c: float):
        self.c = float(c)

    def value(self, x, y):
        return np.full(np.shape(x), self.c)

    def grad(self, x, y):
        z = np.zeros(np.shape(x))
        return z, z.copy()


def p1_gradients(mesh: Triangulation) -> np.ndarray:
    """Gradients of the three barycentric coordinates on every triangle, (m, 3, 2)."""
    p = mesh.points[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # rows of inverse Jacobian give grad(lambda_1), grad(lambda_2)
    g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
    return np.stack([-g1 - g2, g1, g2], axis=1)


def eval_on_triangles(
    field: Field,
    mesh: Triangulation,
    bary: np.ndarray,
    triangles: np.ndarray | None = None,
    need_grad: bool = True,
):
    """Values (m, q) and gradients (m, q, 2) of ``field`` at barycentric points.

    ``bary`` has shape (q, 3). A 1-D array is read as P1 nodal values.
    """
    tris = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    if isinstance(field, np.ndarray):
        nodal = field[mesh.triangles[tris]]  # (m, 3)
        vals = nodal @ bary.T
        if not need_grad:
            return vals, None
        g = np.einsum("ma,mad->md", nodal, p1_gradients(mesh)[tris])
        grads = np.broadcast_to(g[:, None, :], vals.shape + (2,))
        return vals, grads
    q = np.einsum("qa,mad->mqd", bary, mesh.points[mesh.triangles[tris]])
    x, y = q[..., 0], q[..., 1]
    vals = np.asarray(field.value(x, y), dtype=float)
    if not need_grad:
        return vals, None
    gx, gy = field.grad(x, y)
    return vals, np.stack([gx, gy], axis=-1)
