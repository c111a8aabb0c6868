"""P1 Galerkin discretisation: assembly, linear and Newton solvers, jumps, norms.

The discrete problem is ``eps^2 A u + M w(u) = 0`` on the free nodes, where
``w(u)_z = f(z; u_z)`` is the nodal interpolant of the reaction. Dirichlet
conditions are imposed by eliminating boundary rows and columns.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BoundaryEdge,
    InvalidParams,
    MissingExactSolution,
    NewtonDivergence,
    ParseError,
    SolverFailure,
)
from .fields import Field, eval_on_triangles, p1_gradients
from .mesh.triangulation import Triangulation
from .problems import LinearReaction, ProblemSpec
from .quadrature import TriangleRule, triangle_rule

log = logging.getLogger(__name__)

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


@dataclass(frozen=True)
class SparseSystem:
    """Full stiffness and mass matrices plus the free-node index set."""

    A: sp.csr_matrix
    M: sp.csr_matrix
    free: np.ndarray

    @property
    def A_ff(self) -> sp.csr_matrix:
        return self.A[self.free][:, self.free]

    @property
    def M_ff(self) -> sp.csr_matrix:
        return self.M[self.free][:, self.free]


@dataclass(frozen=True)
class FemSolution:
    mesh: Triangulation = field(repr=False)
    nodal_values: np.ndarray
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        vals = np.asarray(self.nodal_values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "nodal_values", vals)

    def to_json(self) -> str:
        return json.dumps({"nodal_values": [float(v) for v in self.nodal_values]})


@dataclass(frozen=True)
class EdgeJump:
    edge_id: int
    jump_value: float
    magnitude: float


@dataclass(frozen=True)
class NewtonParams:
    max_iter: int = 50
    min_damping: float = 2.0**-10
    rel_tol: float = 1e-10
    fd_fallback: bool = True


def element_stiffness(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    e1, e2 = v[1] - v[0], v[2] - v[0]
    det = e1[0] * e2[1] - e1[1] * e2[0]
    inv = np.array([[e2[1], -e2[0]], [-e1[1], e1[0]]]) / det
    G = np.vstack([-inv.sum(axis=0), inv])
    return 0.5 * abs(det) * G @ G.T


def element_mass(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    e1, e2 = v[1] - v[0], v[2] - v[0]
    return 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0]) * _MASS_REF


def assemble(mesh: Triangulation, spec: ProblemSpec | None = None) -> SparseSystem:
    """Assemble P1 stiffness and mass matrices with closed-form element matrices."""
    G = p1_gradients(mesh)
    area = mesh.areas
    Ke = area[:, None, None] * np.einsum("mad,mbd->mab", G, G)
    Me = area[:, None, None] * _MASS_REF[None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    A = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    # remove round-off asymmetry from the scatter
    A = ((A + A.T) * 0.5).tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    return SparseSystem(A, M, mesh.free_nodes)


def interpolate_nodal(g, mesh: Triangulation) -> np.ndarray:
    """Nodal values of ``g`` (a callable ``g(x, y)`` or an object with ``value``)."""
    x, y = mesh.points[:, 0], mesh.points[:, 1]
    fn = g.value if hasattr(g, "value") else g
    return np.broadcast_to(np.asarray(fn(x, y), dtype=float), (mesh.n_nodes,)).copy()


def reaction_nodal(spec: ProblemSpec, mesh: Triangulation, values: np.ndarray) -> np.ndarray:
    """Nodal values of the interpolated reaction f_h^I = I_h f(.; u_h)."""
    x, y = mesh.points[:, 0], mesh.points[:, 1]
    return np.asarray(spec.reaction(x, y, np.asarray(values, dtype=float)), dtype=float)


def _reaction_derivative(spec: ProblemSpec, x, y, u, fd_fallback: bool) -> np.ndarray:
    if spec.reaction_du is not None:
        return np.asarray(spec.reaction_du(x, y, u), dtype=float)
    if not fd_fallback:
        raise InvalidParams("reaction_du missing and finite-difference fallback disabled")
    step = 1e-7 * (1.0 + np.abs(u))
    return (spec.reaction(x, y, u + step) - spec.reaction(x, y, u - step)) / (2.0 * step)


def _sparse_solve(K: sp.spmatrix, b: np.ndarray) -> np.ndarray:
    K = K.tocsc()
    try:
        x = spla.splu(K).solve(b)
        if np.all(np.isfinite(x)):
            return x
    except RuntimeError as exc:
        log.warning("direct factorisation failed (%s); trying GMRES", exc)
    d = K.diagonal()
    if np.any(d == 0):
        raise SolverFailure("zero diagonal entry, cannot precondition")
    P = spla.LinearOperator(K.shape, matvec=lambda v: v / d)
    x, info = spla.gmres(K, b, M=P, rtol=1e-13, atol=0.0, restart=200, maxiter=50)
    if info != 0 or not np.all(np.isfinite(x)):
        raise SolverFailure(f"GMRES did not converge (info={info})")
    return x


def discrete_residual(
    spec: ProblemSpec, mesh: Triangulation, system: SparseSystem, values: np.ndarray
) -> np.ndarray:
    """``eps^2 A u + M w(u)`` restricted to the free rows."""
    w = reaction_nodal(spec, mesh, values)
    r = spec.epsilon**2 * (system.A @ values) + system.M @ w
    return r[system.free]


def solve_linear(
    mesh: Triangulation, spec: ProblemSpec, system: SparseSystem | None = None
) -> FemSolution:
    """Solve for an affine reaction ``f = c u - F``.

    c and F are read off the reaction as ``f(z, 1) - f(z, 0)`` and ``-f(z, 0)``.
    """
    system = system or assemble(mesh)
    x, y = mesh.points[:, 0], mesh.points[:, 1]
    n = mesh.n_nodes
    f0 = np.asarray(spec.reaction(x, y, np.zeros(n)), dtype=float)
    f1 = np.asarray(spec.reaction(x, y, np.ones(n)), dtype=float)
    c, F = f1 - f0, -f0
    f2 = np.asarray(spec.reaction(x, y, np.full(n, 2.0)), dtype=float)
    if not np.allclose(f2 - f0, 2.0 * c, rtol=1e-10, atol=1e-12 * (1 + np.abs(f0).max())):
        raise InvalidParams("reaction is not affine in u; use solve_semilinear")
    if np.any(c < 0):
        raise InvalidParams("reaction coefficient c must be >= 0 at every node")
    free = system.free
    K = spec.epsilon**2 * system.A_ff + system.M_ff @ sp.diags(c[free])
    MF = system.M @ F
    u = np.zeros(n)
    if len(free):
        u[free] = _sparse_solve(K, MF[free])
    res = float(np.abs(discrete_residual(spec, mesh, system, u)).max(initial=0.0))
    tol = 1e-10 * (1.0 + float(np.abs(MF).max(initial=0.0)))
    if not np.isfinite(res) or res > tol:
        raise SolverFailure(f"linear solve residual {res:.3e} exceeds {tol:.3e}")
    return FemSolution(mesh, u, res, 1)


def solve_semilinear(
    mesh: Triangulation,
    spec: ProblemSpec,
    params: NewtonParams | None = None,
    system: SparseSystem | None = None,
    initial: np.ndarray | None = None,
) -> FemSolution:
    """Damped Newton iteration with residual-halving line search."""
    params = params or NewtonParams()
    system = system or assemble(mesh)
    x, y = mesh.points[:, 0], mesh.points[:, 1]
    free = system.free
    eps2 = spec.epsilon**2
    A_ff, M_ff = system.A_ff, system.M_ff
    u = np.zeros(mesh.n_nodes) if initial is None else np.array(initial, dtype=float)
    u[mesh.is_boundary_node] = 0.0

    r = discrete_residual(spec, mesh, system, u)
    rnorm = float(np.abs(r).max(initial=0.0))
    tol = params.rel_tol * (rnorm + 1.0)
    it = 0
    while rnorm > tol:
        if it >= params.max_iter:
            raise NewtonDivergence(f"no convergence after {it} Newton steps (residual {rnorm:.3e})")
        dw = _reaction_derivative(spec, x[free], y[free], u[free], params.fd_fallback)
        J = eps2 * A_ff + M_ff @ sp.diags(dw)
        du = _sparse_solve(J, -r)
        lam = 1.0
        while True:
            trial = u.copy()
            trial[free] += lam * du
            r_new = discrete_residual(spec, mesh, system, trial)
            new_norm = float(np.abs(r_new).max(initial=0.0))
            if np.isfinite(new_norm) and (new_norm < rnorm or new_norm <= tol):
                break
            lam *= 0.5
            if lam < params.min_damping:
                raise NewtonDivergence(
                    f"line search failed at step {it + 1} (residual {rnorm:.3e})"
                )
        u, r, rnorm = trial, r_new, new_norm
        it += 1
        log.debug("newton step %d: residual %.3e damping %.3g", it, rnorm, lam)
    return FemSolution(mesh, u, rnorm, it)


def solve(mesh: Triangulation, spec: ProblemSpec, system: SparseSystem | None = None) -> FemSolution:
    """Linear solve for :class:`LinearReaction`, Newton otherwise."""
    if isinstance(spec.reaction, LinearReaction):
        return solve_linear(mesh, spec, system)
    return solve_semilinear(mesh, spec, system=system)


# ----------------------------------------------------------------------
# post-processing


def _unpack(u_h, mesh):
    if isinstance(u_h, FemSolution):
        return u_h.nodal_values, mesh or u_h.mesh
    if mesh is None:
        raise TypeError("a mesh is required when u_h is a plain array")
    return np.asarray(u_h, dtype=float), mesh


def gradient_per_triangle(u_h, mesh: Triangulation | None = None) -> np.ndarray:
    """Constant gradient of the P1 function on each triangle, shape (m, 2)."""
    values, mesh = _unpack(u_h, mesh)
    return np.einsum("ma,mad->md", values[mesh.triangles], p1_gradients(mesh))


def edge_normals(mesh: Triangulation) -> np.ndarray:
    """Unit normals per edge pointing from the lower-id to the higher-id triangle.

    Boundary edges get the outward normal of their single triangle.
    """
    p = mesh.points
    a, b = p[mesh.edges[:, 0]], p[mesh.edges[:, 1]]
    t = b - a
    n = np.column_stack([t[:, 1], -t[:, 0]]) / np.linalg.norm(t, axis=1)[:, None]
    t1 = mesh.edge_triangles[:, 0]
    centroid = p[mesh.triangles[t1]].mean(axis=1)
    flip = np.einsum("ij,ij->i", centroid - a, n) > 0
    n[flip] *= -1.0
    return n


def edge_jumps(u_h, mesh: Triangulation | None = None) -> np.ndarray:
    """Signed normal-derivative jump per edge; zero on boundary edges."""
    values, mesh = _unpack(u_h, mesh)
    g = gradient_per_triangle(values, mesh)
    et = mesh.edge_triangles
    interior = et[:, 1] >= 0
    jumps = np.zeros(mesh.n_edges)
    nu = edge_normals(mesh)
    diff = g[et[interior, 0]] - g[et[interior, 1]]
    jumps[interior] = np.einsum("ij,ij->i", diff, nu[interior])
    return jumps


def edge_normal_jump(u_h, edge: int, mesh: Triangulation | None = None) -> EdgeJump:
    values, mesh = _unpack(u_h, mesh)
    if mesh.edge_is_boundary[edge]:
        raise BoundaryEdge(f"edge {edge} lies on the boundary")
    t1, t2 = mesh.edge_triangles[edge]
    g = gradient_per_triangle(values, mesh)[[t1, t2]]
    nu = edge_normals(mesh)[edge]
    value = float((g[0] - g[1]) @ nu)
    return EdgeJump(int(edge), value, abs(value))


def _norm_parts(v: Field, mesh: Triangulation, rule: TriangleRule, triangles=None):
    tris = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    vals, grads = eval_on_triangles(v, mesh, rule.points, tris)
    w = rule.weights[None, :] * mesh.areas[tris][:, None]
    l2 = float(np.sum(w * vals**2))
    h1 = float(np.sum(w * np.sum(grads**2, axis=-1)))
    return l2, h1


def energy_norm(
    v: Field,
    mesh: Triangulation,
    epsilon: float,
    rule: TriangleRule | None = None,
    triangles=None,
) -> float:
    """``{eps^2 |v|_1^2 + |v|_0^2}^{1/2}`` over the mesh (or a subset of triangles)."""
    l2, h1 = _norm_parts(v, mesh, rule or triangle_rule(), triangles)
    return float(np.sqrt(epsilon**2 * h1 + l2))


def energy_error(
    u_h,
    spec: ProblemSpec,
    mesh: Triangulation | None = None,
    rule: TriangleRule | None = None,
) -> float:
    """``|||u_h - u|||`` using the analytic exact solution and its gradient."""
    if spec.exact_solution is None:
        raise MissingExactSolution("problem has no exact solution")
    values, mesh = _unpack(u_h, mesh)
    rule = rule or triangle_rule()
    vh, gh = eval_on_triangles(values, mesh, rule.points)
    ve, ge = eval_on_triangles(spec.exact_solution, mesh, rule.points)
    w = rule.weights[None, :] * mesh.areas[:, None]
    l2 = np.sum(w * (vh - ve) ** 2)
    h1 = np.sum(w * np.sum((gh - ge) ** 2, axis=-1))
    return float(np.sqrt(spec.epsilon**2 * h1 + l2))


def write_solution(solution: FemSolution, path) -> None:
    Path(path).write_text(solution.to_json() + "\n")


def read_solution(path, mesh: Triangulation) -> FemSolution:
    try:
        data = json.loads(Path(path).read_text())
        values = np.asarray(data["nodal_values"], dtype=float)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot read solution {path}: {exc}") from exc
    if values.shape != (mesh.n_nodes,):
        raise ParseError(f"solution has {values.size} values for {mesh.n_nodes} nodes")
    return FemSolution(mesh, values)
