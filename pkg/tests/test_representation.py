import numpy as np
import pytest

from anisofem.analysis.calibration import shishkin_benchmark
from anisofem.analysis.representation import verify_error_representation
from anisofem.errors import UnstructuredMesh, ZeroError
from anisofem.fem import solve
from anisofem.fields import FunctionField
from anisofem.mesh import build_patches, generate_patch, generate_shishkin
from anisofem.problems import BoundaryLayer, LinearReaction, ProblemSpec, linear_problem


def test_zero_error_guard():
    # f = u - F with u linear in x: u vanishes nowhere on the boundary, so use u = 0
    mesh = generate_shishkin(8, 1e-1)
    zero = FunctionField(lambda x, y: np.zeros_like(x), lambda x, y: (np.zeros_like(x), np.zeros_like(x)))
    spec = ProblemSpec(1e-1, LinearReaction(1.0, 0.0), 1.0, exact_solution=zero)
    sol = solve(mesh, spec)
    with pytest.raises(ZeroError):
        verify_error_representation(mesh, build_patches(mesh), sol, spec)


def test_unstructured_mesh_rejected():
    mesh = generate_patch(1.0, 0.5, 6, style="fan")
    spec = linear_problem(BoundaryLayer(0.5), 0.5)
    with pytest.raises(UnstructuredMesh):
        verify_error_representation(mesh, build_patches(mesh), np.zeros(mesh.n_nodes), spec)


def test_benchmark_ratio_and_identity(calibration):
    mesh, patches, spec, sol = shishkin_benchmark(1e-2, 16)
    rec = verify_error_representation(mesh, patches, sol, spec)
    assert rec.ratio <= calibration["representation_ratio"]["threshold"]
    assert rec.E_quad <= rec.quad_bound + 1e-12
    # the layer profile is integrated by a fixed degree-6 rule, so the identity
    # holds up to that quadrature error only
    assert rec.identity_residual <= 1e-4 * rec.error


def test_ratio_invariant_under_rescaling():
    """Scaling the manufactured solution and forcing by s scales u - u_h by s; the ratio is unchanged."""
    eps, s = 1e-1, 7.0
    mesh = generate_shishkin(16, eps, sides="both")
    patches = build_patches(mesh)
    base = BoundaryLayer(eps)

    class Scaled:
        def value(self, x, y):
            return s * base.value(x, y)

        def grad(self, x, y):
            gx, gy = base.grad(x, y)
            return s * gx, s * gy

        def laplacian(self, x, y):
            return s * base.laplacian(x, y)

    a_spec = linear_problem(base, eps)
    b_spec = linear_problem(Scaled(), eps)
    a = verify_error_representation(mesh, patches, solve(mesh, a_spec), a_spec)
    b = verify_error_representation(mesh, patches, solve(mesh, b_spec), b_spec)
    assert b.error == pytest.approx(s * a.error, rel=1e-9)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-9)
