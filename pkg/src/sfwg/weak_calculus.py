"""Weak functions, the weak gradient and the L2 projections.

For ``v = {v0, vb}`` with ``v0`` in P_k(T) and ``vb`` in P_{k+1}(e), the weak
gradient on ``T`` is the field in [P_{k+1}(T)]^2 with

    (grad_w v, q)_T = -(v0, div q)_T + <vb, q.n>_{dT}   for all q.

Per element this is the linear map ``c = M^{-1} (-D^T v0 + sum_e B_e^T vb_e)``
stored in :attr:`ElementOperators.weak_grad`, with local unknowns ordered as
the ``v0`` block followed by the three edge blocks in local edge order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .poly_basis import EdgeBasis, ElementBasis, build_element_basis, dim_p
from .errors import DegreeMismatchError
from .mesh import Mesh
from .quadrature import edge_quadrature, map_to_triangles, triangle_quadrature


def projection_degree(k: int) -> int:
    """Quadrature degree for integrals against analytic data."""
    return 2 * k + 8


@dataclass(frozen=True, eq=False)
class WeakFunction:
    """Coefficients of a weak function on a mesh.

    Attributes
    ----------
    k : int
    interior : ndarray, shape (M, dim P_k)
        ``v0`` per element in the element basis.
    trace : ndarray, shape (E, k + 2)
        ``vb`` per edge in the edge basis, stored once per edge.
    """

    k: int
    interior: np.ndarray
    trace: np.ndarray

    def __post_init__(self):
        if self.interior.shape[1] != dim_p(self.k) or self.trace.shape[1] != self.k + 2:
            raise DegreeMismatchError(
                f"block sizes {self.interior.shape[1]}, {self.trace.shape[1]} "
                f"do not match k={self.k}"
            )

    @classmethod
    def zeros(cls, mesh: Mesh, k: int) -> "WeakFunction":
        return cls(k, np.zeros((mesh.num_triangles, dim_p(k))), np.zeros((mesh.num_edges, k + 2)))

    def __sub__(self, other):
        return WeakFunction(self.k, self.interior - other.interior, self.trace - other.trace)

    def __add__(self, other):
        return WeakFunction(self.k, self.interior + other.interior, self.trace + other.trace)

    def local(self, element_edges: np.ndarray) -> np.ndarray:
        """Local coefficient vectors, shape (M, dim P_k + 3 (k + 2))."""
        tr = self.trace[element_edges].reshape(len(element_edges), -1)
        return np.concatenate([self.interior, tr], axis=1)


def element_edge_quadrature(mesh: Mesh, degree: int):
    """Quadrature on every local edge in canonical parameterization.

    Returns points (M, 3, nq, 2), parameters s (nq,) and arclength weights
    (M, 3, nq).  The parameter runs from the lower to the higher global node
    of the edge, so traces evaluated here are single-valued.
    """
    rule = edge_quadrature(degree)
    ends = mesh.nodes[mesh.edges[mesh.element_edges]]  # (M, 3, 2, 2)
    start, stop = ends[..., 0, :], ends[..., 1, :]
    s = rule.points
    pts = start[..., None, :] + s[:, None] * (stop - start)[..., None, :]
    w = mesh.element_edge_lengths[..., None] * rule.weights
    return pts, s, w


def _normal_fields(vector: ElementBasis, mesh: Mesh, pts: np.ndarray) -> np.ndarray:
    # q_j . n_e at edge points (M, 3, nq, 2) -> (M, 3, nq, 2n)
    m = mesh.num_triangles
    n = vector.dim
    phi = vector.values(pts.reshape(m, -1, 2)).reshape(m, 3, pts.shape[2], n)
    nrm = mesh.normals
    return np.concatenate(
        [phi * nrm[:, :, None, None, 0], phi * nrm[:, :, None, None, 1]], axis=-1
    )


@dataclass(frozen=True, eq=False)
class ElementOperators:
    """Per-element matrices of the weak gradient for one mesh and degree.

    Attributes
    ----------
    scalar : ElementBasis
        Orthonormal P_k basis for ``v0``.
    vector : ElementBasis
        Orthonormal P_{k+1} basis; the vector basis of [P_{k+1}]^2 is built
        from it component by component.
    mass : ndarray, shape (M, 2n, 2n)
        Vector mass matrices (identity for orthonormal bases).
    div : ndarray, shape (M, dim P_k, 2n)
        ``(psi_i, div q_j)_T``.
    edge : ndarray, shape (M, 3, k + 2, 2n)
        ``<chi_m, q_j . n_e>_e`` per local edge.
    weak_grad : ndarray, shape (M, 2n, nloc)
        Local unknowns to weak-gradient coefficients.
    """

    mesh: Mesh
    k: int
    scalar: ElementBasis
    vector: ElementBasis
    mass: np.ndarray
    div: np.ndarray
    edge: np.ndarray
    weak_grad: np.ndarray

    @property
    def n_scalar(self) -> int:
        return self.scalar.dim

    @property
    def n_vector(self) -> int:
        return 2 * self.vector.dim

    @property
    def n_trace(self) -> int:
        return self.k + 2

    @property
    def n_local(self) -> int:
        return self.n_scalar + 3 * self.n_trace

    @property
    def edge_basis(self) -> EdgeBasis:
        return EdgeBasis(self.k + 1)

    def element_points(self, degree: int):
        """Quadrature points (M, nq, 2) and weights (M, nq) on every element."""
        return map_to_triangles(triangle_quadrature(degree), self.mesh.vertices)

    def edge_points(self, degree: int):
        """See :func:`element_edge_quadrature`."""
        return element_edge_quadrature(self.mesh, degree)

    def coefficient_mass(self, a) -> np.ndarray:
        """``(a q_i, q_j)_T`` for constant ``a`` (shape (2, 2) or (M, 2, 2))."""
        a = np.asarray(a, dtype=float)
        if a.ndim == 2:
            a = np.broadcast_to(a, (self.mesh.num_triangles, 2, 2))
        n = self.vector.dim
        g = self.mass[:, :n, :n]
        # q_i = e_r phi_p, q_j = e_s phi_q  ->  a_{sr} G_{pq}
        return np.einsum("mrs,mpq->mrpsq", a, g).reshape(len(a), 2 * n, 2 * n)

    def apply(self, local: np.ndarray) -> np.ndarray:
        """Weak-gradient coefficients for local vectors of shape (M, nloc)."""
        return np.einsum("mij,mj->mi", self.weak_grad, local)

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate [P_{k+1}]^2 fields with ``coeffs`` (M, 2n) at (M, P, 2)."""
        phi = self.vector.values(points)
        n = self.vector.dim
        gx = np.einsum("mpi,mi->mp", phi, coeffs[:, :n])
        gy = np.einsum("mpi,mi->mp", phi, coeffs[:, n:])
        return np.stack([gx, gy], axis=-1)


def build_element_operators(mesh: Mesh, k: int, quad_degree: int | None = None) -> ElementOperators:
    """Assemble the cached weak-gradient matrices of every element."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    qd = 2 * (k + 2) if quad_degree is None else quad_degree
    vector = build_element_basis(k + 1, mesh.vertices, orthonormalize=True)
    scalar = vector.subset(k)
    n = vector.dim
    nt = k + 2

    pts, w = map_to_triangles(triangle_quadrature(qd), mesh.vertices)
    psi = scalar.values(pts)
    dq = vector.vector_divergences(pts)
    div = np.einsum("mp,mpi,mpj->mij", w, psi, dq)
    phi = vector.values(pts)
    g = np.einsum("mp,mpi,mpj->mij", w, phi, phi)
    mass = np.zeros((mesh.num_triangles, 2 * n, 2 * n))
    mass[:, :n, :n] = g
    mass[:, n:, n:] = g

    epts, s, ew = element_edge_quadrature(mesh, qd)
    chi = EdgeBasis(k + 1).values(s)  # (nq, nt)
    qn = _normal_fields(vector, mesh, epts)
    edge = np.einsum("meq,qa,meqj->meaj", ew, chi, qn)

    rhs = np.concatenate(
        [-np.transpose(div, (0, 2, 1))]
        + [np.transpose(edge[:, i], (0, 2, 1)) for i in range(3)],
        axis=2,
    )  # (M, 2n, nloc)
    weak_grad = np.linalg.solve(mass, rhs)
    assert rhs.shape[2] == dim_p(k) + 3 * nt
    return ElementOperators(mesh, k, scalar, vector, mass, div, edge, weak_grad)


def weak_gradient(v: WeakFunction, ops: ElementOperators) -> np.ndarray:
    """Weak-gradient coefficients of ``v`` on every element, shape (M, 2n)."""
    if v.k != ops.k:
        raise DegreeMismatchError(f"weak function has k={v.k}, operators k={ops.k}")
    return ops.apply(v.local(ops.mesh.element_edges))


def weak_gradient_of_field(phi, ops: ElementOperators, degree: int | None = None) -> np.ndarray:
    """Weak gradient of a smooth function taken as ``v0 = vb = phi``.

    ``phi`` is a vectorized callable ``phi(x, y)``; integrals use quadrature
    of the given degree.
    """
    qd = projection_degree(ops.k) if degree is None else degree
    pts, w = ops.element_points(qd)
    dq = ops.vector.vector_divergences(pts)
    vals = phi(pts[..., 0], pts[..., 1])
    rhs = -np.einsum("mp,mp,mpj->mj", w, vals, dq)
    epts, _, ew = ops.edge_points(qd)
    ev = phi(epts[..., 0], epts[..., 1])
    qn = _normal_fields(ops.vector, ops.mesh, epts)
    rhs += np.einsum("meq,meq,meqj->mj", ew, ev, qn)
    return np.linalg.solve(ops.mass, rhs[..., None])[..., 0]


def project_q0(phi, ops: ElementOperators, degree: int | None = None) -> np.ndarray:
    """L2 projection onto P_k(T) on every element, shape (M, dim P_k)."""
    qd = projection_degree(ops.k) if degree is None else degree
    pts, w = ops.element_points(qd)
    psi = ops.scalar.values(pts)
    rhs = np.einsum("mp,mp,mpi->mi", w, phi(pts[..., 0], pts[..., 1]), psi)
    g = ops.mass[:, : ops.n_scalar, : ops.n_scalar]
    return np.linalg.solve(g, rhs[..., None])[..., 0]


def project_qb(phi, mesh: Mesh, degree: int, quad_degree: int | None = None,
               edges: np.ndarray | None = None) -> np.ndarray:
    """L2 projection onto P_degree(e) on the given edges (default all).

    Returns coefficients in :class:`EdgeBasis` of shape (len(edges), degree+1).
    """
    idx = np.arange(mesh.num_edges) if edges is None else np.asarray(edges)
    qd = degree + 10 if quad_degree is None else quad_degree
    rule = edge_quadrature(qd)
    ends = mesh.nodes[mesh.edges[idx]]
    start, stop = ends[:, 0], ends[:, 1]
    pts = start[:, None, :] + rule.points[:, None] * (stop - start)[:, None, :]
    chi = EdgeBasis(degree).values(rule.points)  # (nq, d+1)
    vals = phi(pts[..., 0], pts[..., 1])
    # Gram is |e| I: the length cancels against the arclength weight
    return np.einsum("q,eq,qa->ea", rule.weights, vals, chi)


def project_qh_vector(g, ops: ElementOperators, degree: int | None = None) -> np.ndarray:
    """Componentwise L2 projection onto [P_{k+1}(T)]^2, shape (M, 2n).

    ``g(x, y)`` returns an array with a trailing axis of length 2.
    """
    qd = projection_degree(ops.k) if degree is None else degree
    pts, w = ops.element_points(qd)
    phi = ops.vector.values(pts)
    vals = g(pts[..., 0], pts[..., 1])
    n = ops.vector.dim
    gram = ops.mass[:, :n, :n]
    cx = np.einsum("mp,mp,mpi->mi", w, vals[..., 0], phi)
    cy = np.einsum("mp,mp,mpi->mi", w, vals[..., 1], phi)
    rhs = np.stack([cx, cy], axis=-1)  # (M, n, 2)
    c = np.linalg.solve(gram, rhs)
    return np.concatenate([c[..., 0], c[..., 1]], axis=1)


def project_qh(u, ops: ElementOperators, degree: int | None = None) -> WeakFunction:
    """``Q_h u = {Q_0 u, Q_b u}`` as a weak function."""
    qd = projection_degree(ops.k) if degree is None else degree
    interior = project_q0(u, ops, qd)
    trace = project_qb(u, ops.mesh, ops.k + 1, qd)
    return WeakFunction(ops.k, interior, trace)


def restrict_polynomial(p, ops: ElementOperators) -> WeakFunction:
    """Weak function of a polynomial of degree <= k: ``v0 = p|_T``, ``vb = p|_e``.

    Exact when ``p`` is in P_k (the projections reproduce it).
    """
    return project_qh(p, ops)
