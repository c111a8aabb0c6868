import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisofem.errors import BoundaryEdge, InvalidParams, MissingExactSolution, ParseError
from anisofem.fem import (
    assemble,
    discrete_residual,
    edge_jumps,
    edge_normals,
    edge_normal_jump,
    element_mass,
    element_stiffness,
    energy_error,
    energy_norm,
    gradient_per_triangle,
    interpolate_nodal,
    read_solution,
    reaction_nodal,
    solve,
    solve_linear,
    solve_semilinear,
    write_solution,
)
from anisofem.fields import Constant, FunctionField
from anisofem.mesh import Triangulation, generate_shishkin, generate_uniform
from anisofem.problems import (
    CubicReaction,
    LinearReaction,
    ProblemSpec,
    SinSin,
    cubic_problem,
    linear_problem,
)

from conftest import REFERENCE_TRIANGLE, center_node

X_FIELD = FunctionField(lambda x, y: x, lambda x, y: (np.ones_like(x), np.zeros_like(x)))


def affine_spec(c, F, eps=1.0, exact=None):
    r = LinearReaction(c, F)
    return ProblemSpec(eps, r, float(np.min(c)) if np.ndim(c) == 0 else 1.0, r.du, exact)


# ---------------------------------------------------------------- problem data


def test_problem_normalisation():
    with pytest.raises(InvalidParams):
        ProblemSpec(0.1, LinearReaction(0.5, 0.0), 0.5)
    with pytest.raises(InvalidParams):
        ProblemSpec(0.0, LinearReaction(1.0, 0.0), 1.0)
    ProblemSpec(1.0, LinearReaction(0.0, 0.0), 0.0)


# ---------------------------------------------------------------- assembly


def test_reference_element_matrices():
    K = element_stiffness(REFERENCE_TRIANGLE)
    M = element_mass(REFERENCE_TRIANGLE)
    assert np.allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)
    assert np.allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-15)


def test_assembled_matrices():
    mesh = generate_shishkin(8, 1e-2)
    sys_ = assemble(mesh)
    A, M = sys_.A.toarray(), sys_.M.toarray()
    assert np.array_equal(A, A.T) and np.array_equal(M, M.T)
    assert np.abs(A.sum(axis=1)).max() <= 1e-13 * np.abs(A).max()
    assert M.sum() == pytest.approx(1.0, rel=1e-13)
    assert np.linalg.eigvalsh(sys_.M_ff.toarray()).min() > 0
    assert np.linalg.eigvalsh(A).min() > -1e-10 * np.abs(A).max()


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=25, max_size=25))
def test_bilinear_form_matches_energy_norm(vals):
    mesh = generate_uniform(4)
    v = np.array(vals)
    eps = 0.3
    sys_ = assemble(mesh)
    form = eps**2 * v @ (sys_.A @ v) + v @ (sys_.M @ v)
    assert energy_norm(v, mesh, eps) ** 2 == pytest.approx(form, rel=1e-12, abs=1e-14)


# ---------------------------------------------------------------- linear solves


def test_zero_forcing_gives_zero():
    mesh = generate_uniform(4)
    sol = solve_linear(mesh, affine_spec(1.0, 0.0))
    assert np.all(sol.nodal_values == 0.0)


def test_single_free_node_against_dense_oracle():
    mesh = generate_uniform(2)
    sol = solve_linear(mesh, affine_spec(1.0, 1.0))
    z = center_node(mesh)
    assert len(mesh.free_nodes) == 1
    # centre node: 6 right triangles of area 1/8; A_zz = 4, M_zz = 6*(2/8)/12, (M 1)_z = 6*(1/8)/3
    oracle = 0.25 / (4.0 + 0.125)
    assert sol.nodal_values[z] == pytest.approx(oracle, rel=1e-13)
    assert oracle == pytest.approx(2 / 33)


def test_boundary_values_are_zero():
    mesh = generate_shishkin(16, 1e-2, sides="both")
    sol = solve(mesh, linear_problem(SinSin(), 1e-2))
    assert np.all(sol.nodal_values[mesh.boundary_nodes] == 0.0)


def test_linear_residual_postcondition():
    mesh = generate_uniform(8)
    spec = linear_problem(SinSin(), 1.0)
    sol = solve_linear(mesh, spec)
    sys_ = assemble(mesh)
    F = -np.asarray(spec.reaction(mesh.points[:, 0], mesh.points[:, 1], np.zeros(mesh.n_nodes)))
    res = np.abs(discrete_residual(spec, mesh, sys_, sol.nodal_values)).max()
    assert res <= 1e-10 * (1 + np.abs(sys_.M @ F).max())


def test_smooth_convergence_rate():
    spec = linear_problem(SinSin(), 1.0)
    ns = [8, 16, 32, 64]
    errs = [energy_error(solve(generate_uniform(n), spec), spec) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert -1.1 < slope < -0.9


def test_non_affine_reaction_rejected_by_linear_solver():
    with pytest.raises(InvalidParams):
        solve_linear(generate_uniform(2), cubic_problem(SinSin(), 1.0))


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0.05, 1.0))
def test_monotone_in_forcing(a, b, eps):
    mesh = generate_uniform(6)
    F = lambda x, y: a + b * np.sin(3 * x) ** 2 * y
    r = LinearReaction(1.0, F)
    sol = solve_linear(mesh, ProblemSpec(eps, r, 1.0, r.du))
    assert sol.nodal_values.min() >= -1e-12


# ---------------------------------------------------------------- semilinear solves


def test_newton_matches_linear_solve():
    mesh = generate_uniform(8)
    spec = linear_problem(SinSin(), 0.5)
    lin = solve_linear(mesh, spec)
    newton = solve_semilinear(mesh, spec)
    assert np.abs(lin.nodal_values - newton.nodal_values).max() <= 1e-12


def test_newton_affine_single_step():
    mesh = generate_uniform(4)
    sol = solve_semilinear(mesh, affine_spec(1.0, 1.0))
    assert sol.iterations == 1


def test_newton_cubic_converges():
    mesh = generate_uniform(8)
    spec = cubic_problem(SinSin(), 1.0)
    sol = solve_semilinear(mesh, spec)
    r0 = np.abs(discrete_residual(spec, mesh, assemble(mesh), np.zeros(mesh.n_nodes))).max()
    assert sol.residual <= 1e-10 * (r0 + 1)


def test_newton_finite_difference_fallback():
    mesh = generate_uniform(6)
    spec = cubic_problem(SinSin(), 1.0)
    bare = ProblemSpec(spec.epsilon, spec.reaction, spec.C_f, None, spec.exact_solution)
    a, b = solve_semilinear(mesh, spec), solve_semilinear(mesh, bare)
    assert np.abs(a.nodal_values - b.nodal_values).max() <= 1e-10


# ---------------------------------------------------------------- interpolation and gradients


def test_interpolation_examples():
    mesh = generate_uniform(2)
    vals = interpolate_nodal(FunctionField(lambda x, y: x**2), mesh)
    assert np.allclose(vals, mesh.points[:, 0] ** 2)
    assert set(np.round(vals, 12)) == {0.0, 0.25, 1.0}
    lin = interpolate_nodal(FunctionField(lambda x, y: 2 * x - y + 3), mesh)
    g = gradient_per_triangle(lin, mesh)
    assert np.allclose(g, [2.0, -1.0])
    spec = affine_spec(2.0, lambda x, y: x + 1)
    u = np.linspace(0, 1, mesh.n_nodes)
    assert np.allclose(reaction_nodal(spec, mesh, u), 2 * u - (mesh.points[:, 0] + 1))


def test_gradient_examples():
    mesh = generate_uniform(4)
    assert np.allclose(gradient_per_triangle(mesh.points[:, 0].copy(), mesh), [1.0, 0.0])
    assert np.allclose(gradient_per_triangle(np.full(mesh.n_nodes, 3.0), mesh), 0.0)


def test_hat_gradient_against_finite_differences():
    mesh = generate_uniform(4)
    z = center_node(mesh)
    hat = np.zeros(mesh.n_nodes)
    hat[z] = 1.0
    g = gradient_per_triangle(hat, mesh)
    h = 1e-6
    for t in mesh.node_to_triangles[z]:
        V = mesh.points[mesh.triangles[t]]
        vals = hat[mesh.triangles[t]]

        def p1(p):
            lam = np.linalg.solve(np.vstack([V.T, np.ones(3)]), np.array([p[0], p[1], 1.0]))
            return lam @ vals

        c = V.mean(axis=0)
        fd = [(p1(c + h * e) - p1(c - h * e)) / (2 * h) for e in np.eye(2)]
        assert np.allclose(g[t], fd, atol=1e-8)


# ---------------------------------------------------------------- jumps


def test_jump_on_diagonal_square(diagonal_square):
    u = np.array([1.0, 0.0, 0.0, 0.0])
    e = int(np.nonzero(~diagonal_square.edge_is_boundary)[0][0])
    j = edge_normal_jump(u, e, diagonal_square)
    assert j.magnitude == pytest.approx(math.sqrt(2), rel=1e-14)
    assert edge_normal_jump(3.5 * u, e, diagonal_square).jump_value == pytest.approx(3.5 * j.jump_value)
    lin = np.array([0.0, 1.0, 2.0, 3.0])  # u = x + 2y
    assert edge_normal_jump(lin, e, diagonal_square).magnitude == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(BoundaryEdge):
        edge_normal_jump(u, int(np.nonzero(diagonal_square.edge_is_boundary)[0][0]), diagonal_square)


def test_jump_orientation_consistency():
    """The two normal orientations give opposite signs; relabelling keeps the magnitude."""
    pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    a = Triangulation(pts, [[0, 1, 2], [1, 3, 2]])
    b = Triangulation(pts, [[1, 3, 2], [0, 1, 2]])
    u = np.array([1.0, 0.2, -0.3, 0.7])
    e = int(np.nonzero(~a.edge_is_boundary)[0][0])
    g = gradient_per_triangle(u, a)
    t1, t2 = a.edge_triangles[e]
    nu = edge_normals(a)[e]
    forward = (g[t1] - g[t2]) @ nu
    backward = (g[t1] - g[t2]) @ (-nu)
    assert forward + backward == 0.0
    ja, jb = edge_normal_jump(u, e, a), edge_normal_jump(u, e, b)
    assert ja.jump_value == pytest.approx(forward, rel=1e-14)
    assert ja.magnitude == pytest.approx(jb.magnitude, rel=1e-14)
    # the normal points from the lower triangle id into the higher one
    centroid = a.points[a.triangles].mean(axis=1)
    assert (centroid[t2] - centroid[t1]) @ nu > 0 and t1 < t2
    assert np.all(edge_jumps(u, a)[a.edge_is_boundary] == 0.0)


# ---------------------------------------------------------------- norms and errors


def test_energy_norm_examples():
    mesh = generate_uniform(4)
    assert energy_norm(Constant(1.0), mesh, 0.01) == pytest.approx(1.0, rel=1e-13)
    assert energy_norm(X_FIELD, mesh, 1.0) == pytest.approx(math.sqrt(4 / 3), rel=1e-13)
    assert energy_norm(X_FIELD, mesh, 1.0) == pytest.approx(1.154700, abs=1e-6)
    assert energy_norm(Constant(0.0), mesh, 1.0) == 0.0


def test_energy_error_of_zero_against_sinsin():
    # eps^2 |grad u|^2 = pi^2/2 and |u|^2 = 1/4 on the unit square
    mesh = generate_uniform(16)
    spec = linear_problem(SinSin(), 1.0)
    err = energy_error(np.zeros(mesh.n_nodes), spec, mesh)
    assert err == pytest.approx(math.sqrt(math.pi**2 / 2 + 0.25), rel=1e-6)
    assert err == pytest.approx(2.277016, abs=5e-6)


def test_energy_error_examples():
    mesh = generate_uniform(4)
    lin = FunctionField(lambda x, y: x + 2 * y, lambda x, y: (np.ones_like(x), 2 * np.ones_like(x)))
    spec = ProblemSpec(1.0, LinearReaction(1.0, 0.0), 1.0, exact_solution=lin)
    assert energy_error(interpolate_nodal(lin, mesh), spec, mesh) <= 1e-13
    shifted = FunctionField(lambda x, y: x + 2 * y + 5, lin.grad)
    spec2 = ProblemSpec(1.0, LinearReaction(1.0, 0.0), 1.0, exact_solution=shifted)
    u = np.sin(np.arange(mesh.n_nodes))
    assert energy_error(u + 5, spec2, mesh) == pytest.approx(energy_error(u, spec, mesh), rel=1e-12)
    with pytest.raises(MissingExactSolution):
        energy_error(u, ProblemSpec(1.0, LinearReaction(1.0, 0.0), 1.0), mesh)


def test_solution_round_trip(tmp_path):
    mesh = generate_uniform(4)
    sol = solve(mesh, linear_problem(SinSin(), 1.0))
    path = tmp_path / "u.json"
    write_solution(sol, path)
    assert np.array_equal(read_solution(path, mesh).nodal_values, sol.nodal_values)
    assert set(json.loads(path.read_text())) == {"nodal_values"}
    with pytest.raises(ParseError):
        read_solution(path, generate_uniform(2))
