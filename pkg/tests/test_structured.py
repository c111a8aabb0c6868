import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisofem.analysis.structured import (
    check_gbar_bounds,
    check_min_inequality,
    compute_gbar_struct,
    compute_theta,
    detect_structure,
    min_inequality_violations,
)
from anisofem.errors import DegenerateSupport, NonPositiveInput, UnstructuredMesh
from anisofem.fields import Constant, FunctionField
from anisofem.mesh import build_patches, generate_patch, generate_shishkin, generate_uniform

X_FIELD = FunctionField(lambda x, y: x, lambda x, y: (np.ones_like(x), np.zeros_like(x)))


# ---------------------------------------------------------------- structure detection


def test_detect_structure_on_shishkin():
    mesh = generate_shishkin(16, 1e-3)
    grid = detect_structure(mesh)
    assert np.allclose(grid.xs, np.linspace(0, 1, 9))
    pts = np.random.default_rng(0).random((200, 2))
    u = 3 * mesh.points[:, 0] - mesh.points[:, 1]
    assert np.allclose(grid.eval_p1(u, pts), 3 * pts[:, 0] - pts[:, 1], atol=1e-13)
    with pytest.raises(UnstructuredMesh):
        detect_structure(generate_patch(1.0, 0.5, 6, style="fan"))


def test_boundary_triple_convention():
    mesh = generate_shishkin(8, 1e-2)
    grid = detect_structure(mesh)
    left = int(np.nonzero((mesh.points[:, 0] == 0) & (mesh.points[:, 1] > 0.5))[0][0])
    x0, x1, x2 = grid.x_triple(left)
    assert x0 == x1 == 0.0 and x2 == pytest.approx(0.25)


# ---------------------------------------------------------------- line averages


def test_gbar_examples():
    assert compute_gbar_struct(Constant(2.5), 0, (0.0, 0.5, 1.0), 0.3).gbar == pytest.approx(2.5, rel=1e-14)
    assert compute_gbar_struct(X_FIELD, 0, (0.0, 0.5, 1.0), 0.3).gbar == pytest.approx(0.5, rel=1e-14)
    g = compute_gbar_struct(X_FIELD, 0, (0.0, 0.25, 1.0), 0.3).gbar
    assert g == pytest.approx(5 / 12, rel=1e-14)
    assert g == pytest.approx(0.4166667, abs=5e-8)
    assert compute_gbar_struct(X_FIELD, 0, (0.0, 0.25, 1.0), 0.3, is_boundary=True).gbar == 0.0
    with pytest.raises(DegenerateSupport):
        compute_gbar_struct(X_FIELD, 0, (0.5, 0.5, 0.5), 0.3)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 0.49), st.floats(0.51, 0.99))
def test_gbar_is_linear_in_g(a, b, x0, x2):
    f = lambda x, y: np.sin(4 * x) + y
    g = lambda x, y: x**3
    triple = (x0, 0.5, x2)
    lhs = compute_gbar_struct(lambda x, y: a * f(x, y) + b * g(x, y), 0, triple, 0.2).gbar
    rhs = a * compute_gbar_struct(f, 0, triple, 0.2).gbar + b * compute_gbar_struct(g, 0, triple, 0.2).gbar
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-13)


def test_gbar_bounds_examples(calibration):
    mesh = generate_shishkin(16, 1e-2)
    grid = detect_structure(mesh)
    patches = [p for p in build_patches(mesh) if not mesh.is_boundary_node[p.node_id]]
    for p in patches:
        zero = check_gbar_bounds(p, grid, Constant(0.0))
        assert zero.gbar == zero.lhs1 == zero.rhs1 == zero.lhs2 == zero.rhs2 == 0.0
        one = check_gbar_bounds(p, grid, Constant(1.0))
        assert one.lhs1 == pytest.approx(p.H_z, rel=1e-12)
        x0, x2, y0, y1 = grid.omega_star(p)
        assert (x2 - x0) * (y1 - y0) >= p.area * (1 - 1e-12)
        assert one.rhs1 >= p.H_z * (1 - 1e-12)
        assert one.ratio1 <= 1.0 + 1e-12
        lin = check_gbar_bounds(p, grid, X_FIELD)
        assert lin.ratio1 <= calibration["gbar"]["bound1"]["threshold"]
        assert lin.ratio2 <= calibration["gbar"]["bound2"]["threshold"]


# ---------------------------------------------------------------- min-inequality


def test_min_inequality_examples():
    r = check_min_inequality(1, 1, 1, 1)
    assert (r.lhs, r.rhs, r.holds) == (1.0, 2.0, True)
    r = check_min_inequality(2, 3, 5, 1)
    assert (r.lhs, r.rhs, r.holds) == (5.0, 7.0, True)
    with pytest.raises(NonPositiveInput):
        check_min_inequality(1, 0, 1, 1)
    with pytest.raises(NonPositiveInput):
        min_inequality_violations(np.array([[1.0, 1.0, -1.0, 1.0]]))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(1e-12, 1e12), min_size=4, max_size=4))
def test_min_inequality_property(q):
    assert check_min_inequality(*q).holds


# ---------------------------------------------------------------- Theta


def brute_force_patch_sum(mesh, epsilon):
    """Sum over nodes of (1 + eps^2 H_z^-2) |omega_z| for g = 1, by explicit loops."""
    total = 0.0
    for z in range(mesh.n_nodes):
        member = [t for t in range(mesh.n_triangles) if z in mesh.triangles[t]]
        verts = {int(v) for t in member for v in mesh.triangles[t]}
        H = 0.0
        for a in verts:
            for b in verts:
                H = max(H, math.dist(mesh.points[a], mesh.points[b]))
        area = 0.0
        for t in member:
            (x0, y0), (x1, y1), (x2, y2) = mesh.points[mesh.triangles[t]]
            area += abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)) / 2
        total += (1 + epsilon**2 / H**2) * area
    return total


def test_theta_examples():
    mesh = generate_uniform(4)
    patches = build_patches(mesh)
    assert compute_theta(Constant(0.0), mesh, patches, 1.0).theta == 0.0
    rec = compute_theta(Constant(1.0), mesh, patches, 1.0)
    assert rec.gradient_part == 0.0
    assert rec.theta == pytest.approx(brute_force_patch_sum(mesh, 1.0), rel=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.floats(-10, 10), st.floats(1e-3, 1.0))
def test_theta_homogeneous(s, eps):
    mesh = generate_shishkin(8, 1e-2)
    patches = build_patches(mesh)
    g = FunctionField(lambda x, y: np.sin(3 * x) * y, lambda x, y: (3 * np.cos(3 * x) * y, np.sin(3 * x)))
    gs = FunctionField(lambda x, y: s * g.value(x, y), lambda x, y: tuple(s * c for c in g.grad(x, y)))
    a = compute_theta(g, mesh, patches, eps)
    b = compute_theta(gs, mesh, patches, eps)
    assert a.theta > 0 and a.theta >= a.gradient_part >= 0
    assert b.theta == pytest.approx(s**2 * a.theta, rel=1e-12, abs=1e-300)
