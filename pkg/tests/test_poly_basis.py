import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfwg.poly_basis import (
    EdgeBasis,
    build_edge_basis,
    build_element_basis,
    dim_p,
    monomial_exponents,
)
from sfwg.quadrature import edge_quadrature, map_to_triangles, triangle_quadrature
from sfwg.verification import random_elements

REF = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def inside_points(v, n, rng):
    lam = rng.dirichlet(np.ones(3), size=n)
    return lam @ v


def test_dimensions():
    for m in range(6):
        assert dim_p(m) == (m + 1) * (m + 2) // 2
        exps = monomial_exponents(m)
        assert len(exps) == dim_p(m)
        assert np.all(np.diff(exps.sum(axis=1)) >= 0)
    assert build_element_basis(1, REF).dim == 3
    assert build_edge_basis(2).dim == 3


def test_constant_basis_value():
    tri = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]])
    b = build_element_basis(0, tri)
    pts = np.array([[[0.3, 0.4], [1.0, 1.0]]])
    assert np.allclose(b.values(pts), 1.0 / np.sqrt(3.0), rtol=1e-14)


@pytest.mark.parametrize("m", range(6))
def test_orthonormal_gram(m):
    mesh = random_elements(20, seed=m)
    b = build_element_basis(m, mesh.vertices)
    g = b.gram(2 * m + 2)
    assert np.abs(g - np.eye(b.dim)).max() < 1e-12


@pytest.mark.parametrize("m", range(6))
def test_monomials_reproduced(m):
    rng = np.random.default_rng(100 + m)
    mesh = random_elements(8, seed=50 + m)
    b = build_element_basis(m, mesh.vertices)
    pts, w = map_to_triangles(triangle_quadrature(2 * m), mesh.vertices)
    phi = b.values(pts)
    for a, c in monomial_exponents(m):
        f = lambda p: p[..., 0] ** a * p[..., 1] ** c  # noqa: E731
        coef = np.einsum("mp,mp,mpi->mi", w, f(pts), phi)
        test = np.stack([inside_points(v, 10, rng) for v in mesh.vertices])
        approx = np.einsum("mpi,mi->mp", b.values(test), coef)
        assert np.abs(approx - f(test)).max() <= 1e-10 * max(1.0, np.abs(f(test)).max())


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_gradients_match_finite_differences(m):
    mesh = random_elements(5, seed=7)
    b = build_element_basis(m, mesh.vertices)
    c = mesh.vertices.mean(axis=1)[:, None, :]
    eps = 1e-6 * b.scales[:, None, None]
    grad = b.gradients(c)[:, 0]
    for d in range(2):
        shift = np.zeros(2)
        shift[d] = 1.0
        fd = (b.values(c + eps * shift) - b.values(c - eps * shift))[:, 0] / (2 * eps[:, 0])
        scale = np.abs(grad).max()
        assert np.abs(fd - grad[..., d]).max() <= 1e-6 * scale


def test_vector_divergence_consistency():
    mesh = random_elements(4, seed=3)
    b = build_element_basis(3, mesh.vertices)
    pts, _ = map_to_triangles(triangle_quadrature(4), mesh.vertices)
    g = b.gradients(pts)
    div = b.vector_divergences(pts)
    n = b.dim
    assert np.allclose(div[..., :n], g[..., 0])
    assert np.allclose(div[..., n:], g[..., 1])
    vv = b.vector_values(pts)
    assert np.all(vv[..., :n, 1] == 0) and np.all(vv[..., n:, 0] == 0)


def test_subset_is_leading_block():
    mesh = random_elements(6, seed=9)
    big = build_element_basis(3, mesh.vertices)
    small = build_element_basis(2, mesh.vertices)
    pts, _ = map_to_triangles(triangle_quadrature(3), mesh.vertices)
    assert np.allclose(big.subset(2).values(pts), small.values(pts), atol=1e-11)


def test_unnormalized_basis_is_scaled_monomials():
    tri = np.array([[1.0, 1.0], [3.0, 1.0], [1.0, 2.0]])
    b = build_element_basis(2, tri, orthonormalize=False)
    c = tri.mean(axis=0)
    h = np.sqrt(5.0)  # diameter
    p = np.array([[[1.5, 1.2]]])
    xi = (p[0, 0] - c) / h
    expect = [1, xi[0], xi[1], xi[0] ** 2, xi[0] * xi[1], xi[1] ** 2]
    assert np.allclose(b.values(p)[0, 0], expect)


def test_edge_basis_gram_and_values():
    rule = edge_quadrature(30)
    for m in range(6):
        e = EdgeBasis(m, 2.5)
        chi = e.values(rule.points)
        g = 2.5 * np.einsum("q,qi,qj->ij", rule.weights, chi, chi)
        off = g - np.diag(np.diag(g))
        assert np.abs(off).max() < 1e-13
        assert np.allclose(g, e.gram(), atol=1e-13)
    assert np.allclose(EdgeBasis(0).values(np.linspace(0, 1, 5)), 1.0)
    assert build_edge_basis(1, [[0, 0], [3, 4]]).length == pytest.approx(5.0)
    with pytest.raises(ValueError):
        build_edge_basis(1, [[1, 1], [1, 1]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 5))
def test_random_triangles_gram_identity(seed, m):
    mesh = random_elements(1, seed=seed)
    b = build_element_basis(m, mesh.vertices)
    g = b.gram(2 * m)
    assert np.abs(g - np.eye(b.dim)).max() < 1e-11
