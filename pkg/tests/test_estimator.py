import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisofem.estimator import (
    CSV_COLUMNS,
    WeightScheme,
    compare_weights,
    edge_jumps,
    estimate_all,
    interior_term,
    jump_term,
    quadrature_term,
    total_estimator,
)
from anisofem.fem import solve
from anisofem.mesh import Triangulation, build_patches, generate_patch, generate_shishkin, generate_uniform, node_patch
from anisofem.problems import BoundaryLayer, LinearReaction, ProblemSpec, SinSin, linear_problem, zero_problem

from conftest import REFERENCE_TRIANGLE, center_node

SCHEMES = tuple(WeightScheme)


@pytest.fixture(scope="module")
def shishkin_case():
    eps = 1e-2
    mesh = generate_shishkin(32, eps, sides="both")
    spec = linear_problem(BoundaryLayer(eps), eps)
    sol = solve(mesh, spec)
    return mesh, build_patches(mesh), spec, sol


def patch_jumps(mesh, patch, value):
    jumps = np.zeros(mesh.n_edges)
    jumps[list(patch.gamma_z)] = value
    return jumps


# ---------------------------------------------------------------- jump term


def test_scheme_parsing():
    assert WeightScheme.parse("NewEtaH") is WeightScheme.NEW
    assert WeightScheme.parse("old") is WeightScheme.OLD
    with pytest.raises(ValueError):
        WeightScheme.parse("nope")


def test_jump_term_zero_for_linear_u(uniform4):
    u = uniform4.points @ np.array([0.3, -1.2]) + 0.5
    jumps = edge_jumps(u, uniform4)
    p = node_patch(center_node(uniform4), uniform4)
    for s in SCHEMES:
        assert jump_term(p, jumps, 1.0, s) == pytest.approx(0.0, abs=1e-28)


def test_jump_term_hand_values(uniform4):
    p = node_patch(center_node(uniform4), uniform4)
    jumps = patch_jumps(uniform4, p, math.sqrt(2))
    assert jump_term(p, jumps, 1.0, WeightScheme.NEW) == pytest.approx(0.375, rel=1e-12)
    # min{0.1875, 7.0711e-5} * (1e-4 sqrt 2)^2
    assert jump_term(p, jumps, 1e-4, WeightScheme.NEW) == pytest.approx(1.41421e-12, rel=5e-6)


def test_jump_term_empty_gamma():
    mesh = Triangulation(REFERENCE_TRIANGLE, [[0, 1, 2]])
    p = node_patch(0, mesh)
    assert p.gamma_z == ()
    for s in SCHEMES:
        assert jump_term(p, np.ones(mesh.n_edges), 1.0, s) == 0.0


def test_old_over_new_equals_aspect_when_weights_active():
    mesh = generate_patch(1.0, 1e-3, 4, style="strip")
    p = node_patch(0, mesh)
    assert p.H_z / p.h_z == pytest.approx(1e3, rel=0.05)
    jumps = patch_jumps(mesh, p, 1.0)
    eps = 1e-8
    new = jump_term(p, jumps, eps, WeightScheme.NEW)
    old = jump_term(p, jumps, eps, WeightScheme.OLD)
    assert old / new == pytest.approx(p.H_z / p.h_z, rel=1e-12)


# ---------------------------------------------------------------- interior and quadrature terms


def test_interior_term_examples(uniform4):
    p = node_patch(center_node(uniform4), uniform4)
    zero, one = np.zeros(uniform4.n_nodes), np.ones(uniform4.n_nodes)
    assert interior_term(p, zero, 1.0, uniform4) == 0.0
    assert interior_term(p, one, 0.5, uniform4) == pytest.approx(p.area, rel=1e-14)
    assert interior_term(p, one, 10 * p.H_z, uniform4) == pytest.approx(0.01 * p.area, rel=1e-13)


def test_interior_term_matches_quadrature(uniform4):
    from anisofem.quadrature import integrate_patch

    p = node_patch(center_node(uniform4), uniform4)
    f = np.cos(3 * uniform4.points[:, 0]) + uniform4.points[:, 1]
    from anisofem.fields import eval_on_triangles
    from anisofem.quadrature import triangle_rule

    rule = triangle_rule(4)
    vals, _ = eval_on_triangles(f, uniform4, rule.points, list(p.omega_triangles), need_grad=False)
    quad = float(np.sum(rule.weights * uniform4.areas[list(p.omega_triangles)][:, None] * vals**2))
    assert interior_term(p, f, 0.5, uniform4) == pytest.approx(quad, rel=1e-13)


def test_quadrature_term_examples():
    mesh = generate_uniform(4)
    affine = ProblemSpec(1.0, lambda x, y, u: 1 + 2 * x - y, 0.0)
    assert quadrature_term(np.zeros(mesh.n_nodes), affine, mesh) <= 1e-24
    f_is_u = ProblemSpec(1.0, lambda x, y, u: u, 1.0)
    u = np.random.default_rng(0).standard_normal(mesh.n_nodes)
    assert quadrature_term(u, f_is_u, mesh) <= 1e-24

    # f = x^2 on the reference triangle: its interpolant is x, and
    # int (x^2 - x)^2 over the triangle = int_0^1 x^2 (1 - x)^3 dx = 1/60
    single = Triangulation(REFERENCE_TRIANGLE, [[0, 1, 2]])
    square = ProblemSpec(1.0, lambda x, y, u: x**2, 0.0)
    assert quadrature_term(np.zeros(3), square, single) == pytest.approx(1 / 60, rel=1e-13)


# ---------------------------------------------------------------- totals and reports


def test_zero_problem_total_is_zero():
    mesh = generate_uniform(4)
    spec = zero_problem(1.0)
    sol = solve(mesh, spec)
    rep = total_estimator(mesh, build_patches(mesh), sol, spec)
    assert rep.total == 0.0
    assert rep.energy_error == 0.0
    assert rep.effectivity is None


def test_report_invariants(shishkin_case):
    mesh, patches, spec, sol = shishkin_case
    reports = estimate_all(mesh, patches, sol, spec)
    for rep in reports.values():
        assert rep.total**2 == pytest.approx(rep.jump_total + rep.interior_total + rep.quad_total, rel=1e-12)
        assert [n.node_id for n in rep.per_node] == list(range(mesh.n_nodes))
        assert rep.effectivity is not None and rep.effectivity > 0
        for n in rep.per_node:
            assert min(n.jump_term, n.interior_term, n.J_ring, n.J_long) >= 0
    assert reports[WeightScheme.NEW].jump_total <= reports[WeightScheme.OLD].jump_total


def test_report_serialisation(shishkin_case):
    mesh, patches, spec, sol = shishkin_case
    rep = total_estimator(mesh, patches, sol, spec, WeightScheme.SPLIT)
    d = json.loads(rep.to_json())
    assert d["scheme"] == "SplitShortLong" and len(d["per_node"]) == mesh.n_nodes
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == mesh.n_nodes
    assert float(rows[5]["jump_term"]) == rep.per_node[5].jump_term


def test_per_node_dominance_and_split_bounds(shishkin_case):
    mesh, patches, spec, sol = shishkin_case
    jumps = edge_jumps(sol, mesh)
    for eps in (spec.epsilon, 1e-6, 1.0):
        for p in patches:
            new = jump_term(p, jumps, eps, WeightScheme.NEW)
            old = jump_term(p, jumps, eps, WeightScheme.OLD)
            split = jump_term(p, jumps, eps, WeightScheme.SPLIT)
            long_piece = min(p.area, eps * p.H_z) * (eps * max((abs(jumps[e]) for e in p.long_gamma_z), default=0.0)) ** 2
            assert new <= old
            assert split <= 2 * new * (1 + 1e-15)
            assert split >= long_piece


@settings(max_examples=20, deadline=None)
@given(st.floats(-50, 50).filter(lambda s: abs(s) > 1e-3))
def test_jump_total_scales_quadratically(s):
    mesh = generate_shishkin(8, 1e-2)
    patches = build_patches(mesh)
    u = np.sin(7 * mesh.points[:, 0]) * mesh.points[:, 1]
    spec = ProblemSpec(1e-2, LinearReaction(1.0, 0.0), 1.0)
    a = total_estimator(mesh, patches, u, spec).jump_total
    b = total_estimator(mesh, patches, s * u, spec).jump_total
    assert b == pytest.approx(s**2 * a, rel=1e-12)


def test_compare_weights(shishkin_case):
    mesh, patches, spec, sol = shishkin_case
    cmp = compare_weights(mesh, patches, sol, spec)
    assert np.all(cmp.new <= cmp.old)
    assert cmp.new_over_old <= 1.0
    d = cmp.to_dict()
    assert d["jump_total_new"] == pytest.approx(cmp.new.sum())
    zero = compare_weights(mesh, patches, np.zeros(mesh.n_nodes), spec)
    assert zero.old.sum() == zero.new.sum() == zero.split.sum() == 0.0
    assert zero.new_over_old is None


def test_compare_weights_uniform_mesh_ratio():
    mesh = generate_uniform(8)
    spec = linear_problem(SinSin(), 1.0)
    sol = solve(mesh, spec)
    ratio = compare_weights(mesh, build_patches(mesh), sol, spec).new_over_old
    assert 0 < ratio <= 1.0


def test_old_over_new_large_when_eps_below_layer_width():
    """With eps far below the mesh layer width, |omega_z| no longer caps the weights and old/new grows like H/h."""
    mesh = generate_shishkin(16, 1e-4, sides="both")
    patches = build_patches(mesh)
    spec = linear_problem(BoundaryLayer(1e-8), 1e-8)
    reports = estimate_all(mesh, patches, solve(mesh, spec), spec, (WeightScheme.NEW, WeightScheme.OLD))
    layer = {p.node_id for p in patches if p.H_z / p.h_z >= 1e3}
    new = sum(r.jump_term for r in reports[WeightScheme.NEW].per_node if r.node_id in layer)
    old = sum(r.jump_term for r in reports[WeightScheme.OLD].per_node if r.node_id in layer)
    assert layer and old / new >= 1e2
