import math

import numpy as np
import pytest

from sfwg.analysis import (
    CSV_HEADER,
    ErrorReport,
    compute_errors,
    convergence_rates,
    convergence_study,
    discrete_h1_norm,
    ell_form,
    energy_error_via_projection,
    format_csv,
    format_table,
    jump_seminorm,
    l2_interior_norm,
    solve_problem,
    triple_bar_norm,
    verify_error_equation,
)
from sfwg.assembly import assemble_system, build_dof_map
from sfwg.linsolve import solve_system
from sfwg.mesh import Mesh, build_perturbed_grid, build_uniform_grid
from sfwg.poly_basis import EdgeBasis
from sfwg.problems import ProblemSpec, get_problem
from sfwg.quadrature import edge_quadrature, map_to_triangles, triangle_quadrature
from sfwg.weak_calculus import WeakFunction, build_element_operators, project_qh, restrict_polynomial

SQ3 = math.sqrt(3.0)


def one(x, y):
    return np.ones_like(x)


def test_triple_bar_of_linear():
    mesh = build_perturbed_grid(3, 5, 0.2)
    ops = build_element_operators(mesh, 1)
    v = restrict_polynomial(lambda x, y: x, ops)
    assert triple_bar_norm(v, ops) == pytest.approx(1.0, rel=1e-12)
    a = get_problem("example2").a
    assert triple_bar_norm(v, ops, a) == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert triple_bar_norm(restrict_polynomial(one, ops), ops) < 1e-12


def single_edge_function(mesh, k, edge):
    v = WeakFunction.zeros(mesh, k)
    trace = v.trace.copy()
    trace[edge, 0] = 1.0  # first edge mode is the constant 1
    return WeakFunction(k, v.interior, trace)


def test_h1_single_jump():
    mesh = Mesh([[0.0, 0.0], [1.0, 0.0], [0.5, SQ3 / 2]], [[0, 1, 2]])
    ops = build_element_operators(mesh, 1)
    assert mesh.diameters[0] == pytest.approx(1.0)
    v = single_edge_function(mesh, 1, 0)
    assert discrete_h1_norm(v, ops) == pytest.approx(1.0, rel=1e-13)
    # roundoff in the squared norm is about 1e-16
    assert discrete_h1_norm(restrict_polynomial(one, ops), ops) ** 2 < 1e-14


def test_h1_jump_seen_from_both_sides():
    mesh = Mesh([[0.0, 0.0], [1.0, 0.0], [0.5, SQ3 / 2], [0.5, -SQ3 / 2]], [[0, 1, 2], [0, 3, 1]])
    ops = build_element_operators(mesh, 2)
    e = int(mesh.interior_edges[0])
    v = single_edge_function(mesh, 2, e)
    assert discrete_h1_norm(v, ops) ** 2 == pytest.approx(2.0, rel=1e-13)
    assert jump_seminorm(v, ops) ** 2 == pytest.approx(2.0, rel=1e-13)


def h1_oracle(v, mesh, k):
    """Direct quadrature of the discrete H1 norm from basis values."""
    ops = build_element_operators(mesh, k)
    pts, w = map_to_triangles(triangle_quadrature(2 * k + 10), mesh.vertices)
    dpsi = ops.scalar.gradients(pts)
    g = np.einsum("mpid,mi->mpd", dpsi, v.interior)
    total = float(np.sum(w[..., None] * g**2))
    rule = edge_quadrature(2 * k + 10)
    chi = EdgeBasis(k + 1).values(rule.points)
    for i in range(3):
        e = mesh.element_edges[:, i]
        a, b = mesh.nodes[mesh.edges[e, 0]], mesh.nodes[mesh.edges[e, 1]]
        p = a[:, None] + rule.points[None, :, None] * (b - a)[:, None]
        length = np.linalg.norm(b - a, axis=1)
        v0 = np.einsum("mqi,mi->mq", ops.scalar.values(p), v.interior)
        vb = v.trace[e] @ chi.T
        total += float(np.sum(length / mesh.diameters * ((v0 - vb) ** 2 @ rule.weights)))
    return math.sqrt(total)


@pytest.mark.parametrize("k", [1, 3])
def test_h1_random_against_oracle(k):
    mesh = build_perturbed_grid(2, 3, 0.2)
    ops = build_element_operators(mesh, k)
    rng = np.random.default_rng(k)
    v = WeakFunction(k, rng.normal(size=(mesh.num_triangles, ops.n_scalar)),
                     rng.normal(size=(mesh.num_edges, k + 2)))
    assert discrete_h1_norm(v, ops) == pytest.approx(h1_oracle(v, mesh, k), rel=1e-11)


def test_perfect_solution_has_zero_error():
    prob = get_problem("example1")
    ops = build_element_operators(build_uniform_grid(3), 2)
    rep = compute_errors(project_qh(prob.u, ops), prob, ops)
    assert rep.l2 < 1e-12 and rep.energy < 1e-12 and rep.h1 < 1e-12
    assert rep.energy_weighted < 1e-12


def test_l2_and_energy_of_linear():
    ops = build_element_operators(build_uniform_grid(2), 1)
    v = restrict_polynomial(lambda x, y: x + 2 * y, ops)
    # ||x + 2y||^2 over the unit square = 1/3 + 4/3 + 2*2*(1/4) = 8/3
    assert l2_interior_norm(v, ops) == pytest.approx(math.sqrt(8 / 3), rel=1e-12)
    assert triple_bar_norm(v, ops) == pytest.approx(math.sqrt(5.0), rel=1e-12)


def test_rates():
    assert convergence_rates([1e-2, 6.25e-4])[1] == pytest.approx(4.0)
    assert convergence_rates([8.0, 1.0])[1] == pytest.approx(3.0)
    assert convergence_rates([3.0, 3.0, 3.0])[1:] == [0.0, 0.0]
    r = convergence_rates([1.0, 0.0, 1.0])
    assert r[0] is None and math.isnan(r[1]) and math.isnan(r[2])


def test_csv_and_table():
    rep = ErrorReport(5, 0.0442, 100, 5.1e-7, 4.1e-5, 5e-5, 6e-5, None, None)
    rep2 = ErrorReport(6, 0.0221, 400, 3.2e-8, 5.1e-6, 6e-6, 7e-6, 3.99, 3.01)
    text = format_csv([rep, rep2])
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "5,4.420000e-02,100,5.100000e-07,,4.100000e-05,"
    assert lines[2].endswith(",3.9900,5.100000e-06,3.0100")
    table = format_table([rep, rep2], "t")
    assert "0.5100E-06" in table and "3.99" in table


def test_ell_vanishes_for_quadratic_gradients():
    u = lambda x, y: x**2 * y  # noqa: E731
    grad = lambda x, y: np.stack([2 * x * y, x**2], axis=-1)  # noqa: E731
    prob = ProblemSpec("x2y", np.array([[2.0, 1.0], [1.0, 3.0]]),
                       lambda x, y: -(4 * y + 4 * x), u, u, grad)
    mesh = build_perturbed_grid(3, 1, 0.2)
    ops = build_element_operators(mesh, 2)
    rng = np.random.default_rng(0)
    v = WeakFunction(2, rng.normal(size=(mesh.num_triangles, 6)), rng.normal(size=(mesh.num_edges, 4)))
    assert abs(ell_form(prob, v, ops)) < 1e-11


def test_ell_of_constant_is_zero():
    prob = get_problem("example1")
    ops = build_element_operators(build_uniform_grid(3), 1)
    assert abs(ell_form(prob, restrict_polynomial(one, ops), ops)) < 1e-14


def test_ell_against_refined_quadrature():
    prob = get_problem("example1")
    mesh = build_uniform_grid(3)
    ops = build_element_operators(mesh, 1)
    dm = build_dof_map(mesh, 1)
    x = np.zeros(dm.n_total)
    x[0] = 1.0
    v = dm.to_weak(x)
    val = ell_form(prob, v, ops)
    ref = ell_form(prob, v, ops, degree=2 * 1 + 12)
    assert val != 0.0
    assert abs(val - ref) <= 1e-9 * abs(ref)


def test_error_equation_example2():
    system = assemble_system(build_uniform_grid(3), get_problem("example2"), 2)
    x, rep = solve_system(system, tol=1e-12, condense=True)
    assert rep.converged
    assert verify_error_equation(system, x) <= 1e-8


def test_error_equation_trivial_cases():
    u = lambda x, y: x**2 - y  # noqa: E731
    prob = ProblemSpec("p2", np.eye(2), lambda x, y: np.full(np.shape(x), -2.0), u, u,
                       lambda x, y: np.stack([2 * x, -np.ones_like(y)], -1))
    system = assemble_system(build_uniform_grid(2), prob, 2)
    qh = system.dofmap.from_weak(project_qh(u, system.ops))
    assert verify_error_equation(system, qh[: system.dofmap.n_free]) < 1e-12
    # constant test function: both sides vanish
    full = system.full_matrix
    ones = system.dofmap.from_weak(restrict_polynomial(one, system.ops))
    assert abs(ones @ (full @ qh)) < 1e-10


def test_energy_error_two_ways():
    prob = get_problem("example1")
    res = solve_problem(build_perturbed_grid(3, 7, 0.2), prob, 2)
    other = energy_error_via_projection(res.weak, prob, res.system.ops)
    assert other == pytest.approx(res.errors.energy, rel=1e-9)


def test_errors_decrease_under_refinement():
    reports = convergence_study(get_problem("example2"), 1, [1, 2, 3, 4])
    l2 = [r.l2 for r in reports]
    en = [r.energy for r in reports]
    assert all(a > b for a, b in zip(l2, l2[1:]))
    assert all(a > b for a, b in zip(en, en[1:]))
    assert reports[0].l2_rate is None and reports[-1].l2_rate > 3.0
    assert all(r.ndof > 0 and r.h > 0 for r in reports)
