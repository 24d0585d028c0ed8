"""Polynomial bases on triangles and edges.

Element bases are scaled monomials ``((x - xc)/h)**a * ((y - yc)/h)**b``
about the centroid, ordered by total degree, optionally orthonormalized
through the Cholesky factor of their element Gram matrix.  Because the
monomials are ordered by degree, the leading ``dim P_m`` functions of an
orthonormal ``P_{m+1}`` basis are an orthonormal ``P_m`` basis.

All element quantities carry a leading element axis so one object serves a
whole mesh; a single triangle is a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_legendre

from .errors import ConditioningError
from .quadrature import map_to_triangles, triangle_quadrature


def dim_p(m: int) -> int:
    """Dimension of P_m on a triangle."""
    return (m + 1) * (m + 2) // 2


def monomial_exponents(m: int) -> np.ndarray:
    """Exponent pairs (a, b) with a + b <= m, by increasing total degree."""
    return np.array([(d - j, j) for d in range(m + 1) for j in range(d + 1)], dtype=int)


def _powers(t, m):
    # t: (...,) -> (..., m+1) with powers t**0 .. t**m
    out = np.empty(t.shape + (m + 1,))
    out[..., 0] = 1.0
    for p in range(1, m + 1):
        out[..., p] = out[..., p - 1] * t
    return out


@dataclass(frozen=True, eq=False)
class ElementBasis:
    """Basis of P_m on a batch of triangles.

    ``coeffs[t]`` maps the scaled monomials of triangle ``t`` to the basis
    (``phi_i = sum_j coeffs[t, i, j] * m_j``); it is the identity when the
    basis is not orthonormalized.
    """

    degree: int
    exponents: np.ndarray
    vertices: np.ndarray
    centroids: np.ndarray
    scales: np.ndarray
    coeffs: np.ndarray
    areas: np.ndarray
    orthonormal: bool

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def _local(self, points):
        c = self.centroids[:, None, :]
        h = self.scales[:, None, None]
        return (points - c) / h

    def monomials(self, points):
        """Scaled monomial values at ``points`` of shape (M, P, 2)."""
        xi = self._local(points)
        px = _powers(xi[..., 0], self.degree)
        py = _powers(xi[..., 1], self.degree)
        a, b = self.exponents.T
        return px[..., a] * py[..., b]

    def values(self, points):
        """Basis values, shape (M, P, dim)."""
        return np.einsum("mpj,mij->mpi", self.monomials(points), self.coeffs)

    def gradients(self, points):
        """Basis gradients, shape (M, P, dim, 2)."""
        xi = self._local(points)
        m = self.degree
        px = _powers(xi[..., 0], m)
        py = _powers(xi[..., 1], m)
        a, b = self.exponents.T
        am1 = np.maximum(a - 1, 0)
        bm1 = np.maximum(b - 1, 0)
        h = self.scales[:, None, None]
        dx = a * px[..., am1] * py[..., b] / h
        dy = b * px[..., a] * py[..., bm1] / h
        mono = np.stack([dx, dy], axis=-1)  # (M, P, n, 2)
        return np.einsum("mpjd,mij->mpid", mono, self.coeffs)

    def vector_values(self, points):
        """Values of the vector basis of [P_m]^2, shape (M, P, 2*dim, 2).

        The first ``dim`` fields are ``(phi_i, 0)``, the rest ``(0, phi_i)``.
        """
        phi = self.values(points)
        z = np.zeros_like(phi)
        first = np.stack([phi, z], axis=-1)
        second = np.stack([z, phi], axis=-1)
        return np.concatenate([first, second], axis=2)

    def vector_divergences(self, points):
        """Divergences of the [P_m]^2 basis, shape (M, P, 2*dim)."""
        g = self.gradients(points)
        return np.concatenate([g[..., 0], g[..., 1]], axis=2)

    def gram(self, degree=None):
        """Element L2 Gram matrices, shape (M, dim, dim)."""
        return _gram(self, degree)

    def subset(self, m: int) -> "ElementBasis":
        """Leading P_m part of this basis (exact for the Cholesky basis)."""
        n = dim_p(m)
        return ElementBasis(
            m,
            self.exponents[:n],
            self.vertices,
            self.centroids,
            self.scales,
            self.coeffs[:, :n, :n],
            self.areas,
            self.orthonormal,
        )


def _vertices(vertices):
    v = np.asarray(vertices, dtype=float)
    if v.ndim == 2:
        v = v[None]
    if v.shape[1:] != (3, 2):
        raise ValueError(f"triangle vertices must have shape (M, 3, 2), got {v.shape}")
    return v


def _gram(basis, degree=None):
    rule = triangle_quadrature(2 * basis.degree if degree is None else degree)
    pts, w = map_to_triangles(rule, basis.vertices)
    phi = basis.values(pts)
    return np.einsum("mp,mpi,mpj->mij", w, phi, phi)


def build_element_basis(m: int, vertices, orthonormalize: bool = True) -> ElementBasis:
    """Scaled-monomial basis of P_m on each triangle of ``vertices``.

    Parameters
    ----------
    m : int
        Polynomial degree, 0 <= m.
    vertices : array_like, shape (3, 2) or (M, 3, 2)
    orthonormalize : bool
        Make the element Gram matrix the identity.
    """
    if m < 0:
        raise ValueError("degree must be nonnegative")
    v = _vertices(vertices)
    centroids = v.mean(axis=1)
    diam = np.max(np.linalg.norm(np.roll(v, -1, axis=1) - v, axis=-1), axis=1)
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    areas = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    exps = monomial_exponents(m)
    n = len(exps)
    eye = np.broadcast_to(np.eye(n), (len(v), n, n)).copy()
    basis = ElementBasis(m, exps, v, centroids, diam, eye, areas, False)
    if not orthonormalize:
        return basis

    rule = triangle_quadrature(2 * m)
    pts, w = map_to_triangles(rule, v)
    mono = basis.monomials(pts)
    coeffs = eye
    # second pass removes the rounding left by the first at higher degrees
    for _ in range(2):
        phi = np.einsum("mpj,mij->mpi", mono, coeffs)
        gram = np.einsum("mp,mpi,mpj->mij", w, phi, phi)
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            raise ConditioningError(f"P_{m} Gram matrix is not positive definite") from None
        diag = np.abs(np.diagonal(chol, axis1=1, axis2=2))
        if np.any(diag.min(axis=1) < 1e-12 * diag.max(axis=1)):
            raise ConditioningError(f"P_{m} Gram matrix is numerically singular")
        # L^{-1} rows give the orthonormal functions
        coeffs = np.linalg.solve(chol, coeffs)
    return ElementBasis(m, exps, v, centroids, diam, coeffs, areas, True)


@dataclass(frozen=True)
class EdgeBasis:
    """Scaled shifted Legendre basis of P_m(e).

    ``chi_j(s) = sqrt(2j + 1) * P_j(2s - 1)`` in the normalized arclength
    ``s`` along the canonical edge direction, so that the edge Gram matrix
    is ``|e|`` times the identity.
    """

    degree: int
    length: float | np.ndarray = 1.0

    @property
    def dim(self) -> int:
        return self.degree + 1

    def values(self, s):
        """Basis values at parameters ``s``, shape ``s.shape + (dim,)``."""
        s = np.asarray(s, dtype=float)
        j = np.arange(self.dim)
        return np.sqrt(2 * j + 1) * eval_legendre(j, 2.0 * s[..., None] - 1.0)

    def gram(self):
        length = np.asarray(self.length, dtype=float)
        return length[..., None, None] * np.eye(self.dim)


def build_edge_basis(m: int, edge=None) -> EdgeBasis:
    """Edge basis of degree ``m``; ``edge`` is a length or a (2, 2) segment."""
    if m < 0:
        raise ValueError("degree must be nonnegative")
    if edge is None:
        length = 1.0
    else:
        e = np.asarray(edge, dtype=float)
        length = float(np.linalg.norm(e[1] - e[0])) if e.ndim == 2 else float(e)
    if not length > 0:
        raise ValueError("degenerate edge")
    return EdgeBasis(m, length)
