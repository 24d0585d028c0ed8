"""Quadrature rules on the reference triangle and on [0, 1].

The triangle rules are collapsed (Duffy) tensor products of a Gauss-Legendre
rule and a Gauss-Jacobi(1, 0) rule.  They have positive weights and are
exact to any requested degree up to :data:`MAX_DEGREE`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import CapacityError

MAX_DEGREE = 60


@dataclass(frozen=True)
class QuadratureRule:
    """Points, weights and exactness degree of a rule.

    For triangle rules ``points`` are Cartesian coordinates on the reference
    triangle {(0,0), (1,0), (0,1)} and the weights sum to 1/2.  For edge rules
    ``points`` are parameters in [0, 1] and the weights sum to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)

    def integrate(self, f) -> float:
        """Apply the rule to a vectorized callable on the reference domain."""
        if self.points.ndim == 2:
            values = f(self.points[:, 0], self.points[:, 1])
        else:
            values = f(self.points)
        return float(np.dot(self.weights, values))


def _check_degree(degree):
    degree = int(degree)
    if degree < 0:
        raise ValueError(f"quadrature degree must be >= 0, got {degree}")
    if degree > MAX_DEGREE:
        raise CapacityError(f"quadrature degree {degree} exceeds {MAX_DEGREE}")
    return degree


@lru_cache(maxsize=None)
def edge_quadrature(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] with ceil((degree+1)/2) points."""
    degree = _check_degree(degree)
    n = max(1, (degree + 2) // 2)
    t, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (t + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> QuadratureRule:
    """Collapsed Gauss rule on the reference triangle exact to ``degree``."""
    degree = _check_degree(degree)
    n = max(1, (degree + 2) // 2)
    ta, wa = np.polynomial.legendre.leggauss(n)
    tb, wb = roots_jacobi(n, 1.0, 0.0)
    a = 0.5 * (ta + 1.0)
    b = 0.5 * (tb + 1.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    WA, WB = np.meshgrid(0.5 * wa, 0.25 * wb, indexing="ij")
    x = (A * (1.0 - B)).ravel()
    y = B.ravel()
    pts = np.column_stack([x, y])
    wts = (WA * WB).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


def map_to_triangles(rule: QuadratureRule, vertices: np.ndarray):
    """Physical points and weights of a triangle rule on many triangles.

    Parameters
    ----------
    vertices : ndarray, shape (M, 3, 2)

    Returns
    -------
    points : ndarray, shape (M, nq, 2)
    weights : ndarray, shape (M, nq)
    """
    v0 = vertices[:, 0]
    d1 = vertices[:, 1] - v0
    d2 = vertices[:, 2] - v0
    lam = rule.points
    pts = v0[:, None, :] + lam[None, :, 0:1] * d1[:, None, :] + lam[None, :, 1:2] * d2[:, None, :]
    jac = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    return pts, jac[:, None] * rule.weights[None, :]


def map_to_segments(rule: QuadratureRule, start: np.ndarray, stop: np.ndarray):
    """Physical points and arclength weights of an edge rule on segments.

    ``start`` and ``stop`` have shape (..., 2); the result has shapes
    (..., nq, 2) and (..., nq).
    """
    s = rule.points
    d = stop - start
    pts = start[..., None, :] + s[:, None] * d[..., None, :]
    length = np.linalg.norm(d, axis=-1)
    return pts, length[..., None] * rule.weights
