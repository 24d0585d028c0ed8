import numpy as np
import pytest
import sympy as sp

from sfwg.errors import CoefficientError
from sfwg.problems import PROBLEMS, ProblemSpec, check_coefficient, constant, get_problem, zero

x, y = sp.symbols("x y")
EXACT = {
    "example1": sp.sin(x) * sp.sin(sp.pi * y),
    "example2": x**5 * y**2,
    "example3": sp.exp(sp.pi * x) * sp.sin(sp.pi * y),
}


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_source_matches_symbolic_operator(name):
    prob = get_problem(name)
    u = EXACT[name]
    a = sp.Matrix(prob.a.tolist())
    grad = sp.Matrix([sp.diff(u, x), sp.diff(u, y)])
    flux = a * grad
    f = sp.simplify(-(sp.diff(flux[0], x) + sp.diff(flux[1], y)))
    rng = np.random.default_rng(0)
    px, py = rng.random(20), rng.random(20)
    fs = sp.lambdify((x, y), f, "numpy")
    us = sp.lambdify((x, y), u, "numpy")
    gs = sp.lambdify((x, y), [grad[0], grad[1]], "numpy")
    scale = max(1.0, np.abs(fs(px, py)).max())
    assert np.allclose(prob.f(px, py), fs(px, py) * np.ones_like(px), atol=1e-12 * scale)
    assert np.allclose(prob.u(px, py), us(px, py))
    assert np.allclose(prob.grad_u(px, py), np.stack(gs(px, py), -1))
    # boundary data is the trace of u
    t = rng.random(10)
    for bx, by in [(t, 0 * t), (t, 0 * t + 1), (0 * t, t), (0 * t + 1, t)]:
        assert np.allclose(prob.g(bx, by), us(bx, by))


def test_example3_is_harmonic():
    u = EXACT["example3"]
    assert sp.simplify(sp.diff(u, x, 2) + sp.diff(u, y, 2)) == 0
    assert np.all(get_problem("example3").f(np.ones(3), np.zeros(3)) == 0)


def test_ellipticity_bounds():
    p2 = get_problem("example2")
    s5 = np.sqrt(5.0)
    assert p2.lam1 == pytest.approx((5 - s5) / 2) and p2.lam2 == pytest.approx((5 + s5) / 2)
    assert np.allclose(np.linalg.eigvalsh(p2.a), [p2.lam1, p2.lam2])
    assert get_problem("example1").lam1 == get_problem("example1").lam2 == 1.0
    with pytest.raises(CoefficientError):
        ProblemSpec("bad", np.eye(2), zero, zero, lam1=2.0, lam2=3.0)


@pytest.mark.parametrize("a", [
    [[1.0, 0.5], [0.0, 1.0]],
    [[1.0, 2.0], [2.0, 1.0]],
    [[-1.0, 0.0], [0.0, -1.0]],
    [[1.0, 0.0, 0.0]],
    [[np.nan, 0.0], [0.0, 1.0]],
])
def test_bad_coefficients_rejected(a):
    with pytest.raises(CoefficientError):
        check_coefficient(a)


def test_registry_and_data_replacement():
    with pytest.raises(KeyError):
        get_problem("example4")
    p = get_problem("example1").with_data(f=zero, g=constant(2.0))
    assert not p.has_exact
    assert np.all(p.g(np.zeros(2), np.ones(2)) == 2.0)
    assert np.all(p.f(np.zeros(2), np.ones(2)) == 0.0)
    assert not p.a.flags.writeable
