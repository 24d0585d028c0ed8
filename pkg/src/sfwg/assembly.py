"""Degrees of freedom and global assembly of the weak Galerkin system.

Find ``u_h = {u0, ub}`` with ``ub = Q_b g`` on the boundary and

    (a grad_w u_h, grad_w v) = (f, v0)   for all v in V_h^0.

Numbering: element interior blocks first (element order), then the trace
blocks of interior edges (edge order), then those of boundary edges.  The
boundary trace modes are the constrained unknowns, so the free unknowns are
a leading contiguous range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .poly_basis import dim_p
from .mesh import Mesh
from .problems import ProblemSpec, check_coefficient
from .weak_calculus import (
    ElementOperators,
    WeakFunction,
    build_element_operators,
    project_qb,
    projection_degree,
)


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of the weak Galerkin unknowns.

    Attributes
    ----------
    edge_slot : ndarray, shape (E,)
        Position of each edge's trace block after the interior blocks.
    local_to_global : ndarray, shape (M, nloc)
    """

    k: int
    n_elements: int
    n_edges: int
    n_interior_edges: int
    edge_slot: np.ndarray
    local_to_global: np.ndarray

    @property
    def n_scalar(self) -> int:
        return dim_p(self.k)

    @property
    def n_trace(self) -> int:
        return self.k + 2

    @property
    def n_interior_dofs(self) -> int:
        """Unknowns of the element interiors (all free)."""
        return self.n_elements * self.n_scalar

    @property
    def n_total(self) -> int:
        return self.n_interior_dofs + self.n_edges * self.n_trace

    @property
    def n_free(self) -> int:
        return self.n_interior_dofs + self.n_interior_edges * self.n_trace

    @property
    def n_constrained(self) -> int:
        return self.n_total - self.n_free

    @property
    def free(self) -> np.ndarray:
        return np.arange(self.n_free)

    @property
    def constrained(self) -> np.ndarray:
        return np.arange(self.n_free, self.n_total)

    def element_dofs(self, t: int) -> np.ndarray:
        return t * self.n_scalar + np.arange(self.n_scalar)

    def edge_dofs(self, e: int) -> np.ndarray:
        return self.n_interior_dofs + self.edge_slot[e] * self.n_trace + np.arange(self.n_trace)

    def free_blocks(self):
        """(start, size) of every free element and edge block, in order."""
        n0, nt = self.n_scalar, self.n_trace
        blocks = [(t * n0, n0) for t in range(self.n_elements)]
        base = self.n_interior_dofs
        blocks += [(base + j * nt, nt) for j in range(self.n_interior_edges)]
        return blocks

    def to_weak(self, x: np.ndarray) -> WeakFunction:
        """Weak function from a full coefficient vector."""
        x = np.asarray(x, dtype=float)
        interior = x[: self.n_interior_dofs].reshape(self.n_elements, self.n_scalar)
        blocks = x[self.n_interior_dofs :].reshape(self.n_edges, self.n_trace)
        return WeakFunction(self.k, interior.copy(), blocks[self.edge_slot].copy())

    def from_weak(self, v: WeakFunction) -> np.ndarray:
        """Full coefficient vector of a weak function."""
        x = np.empty(self.n_total)
        x[: self.n_interior_dofs] = v.interior.ravel()
        blocks = np.empty((self.n_edges, self.n_trace))
        blocks[self.edge_slot] = v.trace
        x[self.n_interior_dofs :] = blocks.ravel()
        return x


def build_dof_map(mesh: Mesh, k: int) -> DofMap:
    """Deterministic numbering for degree ``k`` (k >= 1)."""
    if int(k) != k or k < 1:
        raise ValueError(f"polynomial degree k must be an integer >= 1, got {k}")
    k = int(k)
    interior = np.flatnonzero(~mesh.boundary)
    bnd = np.flatnonzero(mesh.boundary)
    slot = np.empty(mesh.num_edges, dtype=np.int64)
    slot[interior] = np.arange(len(interior))
    slot[bnd] = len(interior) + np.arange(len(bnd))

    n0, nt = dim_p(k), k + 2
    m = mesh.num_triangles
    elem = np.arange(m)[:, None] * n0 + np.arange(n0)
    edges = m * n0 + slot[mesh.element_edges][..., None] * nt + np.arange(nt)
    l2g = np.concatenate([elem, edges.reshape(m, 3 * nt)], axis=1)
    slot.setflags(write=False)
    l2g.setflags(write=False)
    return DofMap(k, m, mesh.num_edges, len(interior), slot, l2g)


def local_stiffness(ops: ElementOperators, a) -> np.ndarray:
    """``(a grad_w phi_i, grad_w phi_j)_T`` for all local unknowns, (M, nloc, nloc)."""
    if isinstance(a, ProblemSpec):
        a = a.a
    a = np.asarray(a, dtype=float)
    a = check_coefficient(a) if a.ndim == 2 else np.stack([check_coefficient(at) for at in a])
    kmat = ops.coefficient_mass(a)
    w = ops.weak_grad
    s = np.einsum("mip,mij,mjq->mpq", w, kmat, w)
    return 0.5 * (s + np.transpose(s, (0, 2, 1)))


def scatter(dofmap: DofMap, local: np.ndarray) -> sp.csr_matrix:
    """Sum element matrices into a CSR matrix over all unknowns.

    Duplicates are summed in element order, so the result is reproducible.
    """
    l2g = dofmap.local_to_global
    nloc = l2g.shape[1]
    rows = np.repeat(l2g, nloc, axis=1).ravel()
    cols = np.tile(l2g, (1, nloc)).ravel()
    n = dofmap.n_total
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_load(ops: ElementOperators, dofmap: DofMap, f, degree: int | None = None) -> np.ndarray:
    """``(f, psi_i)_T`` scattered into a full-length vector."""
    qd = projection_degree(ops.k) if degree is None else degree
    pts, w = ops.element_points(qd)
    psi = ops.scalar.values(pts)
    loc = np.einsum("mp,mp,mpi->mi", w, f(pts[..., 0], pts[..., 1]), psi)
    out = np.zeros(dofmap.n_total)
    out[: dofmap.n_interior_dofs] = loc.ravel()
    return out


@dataclass(frozen=True, eq=False)
class SparseSystem:
    """Reduced SPD system over the free unknowns plus the Dirichlet lift.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
        Stiffness restricted to free unknowns.
    rhs : ndarray
        ``F_free - A_fc u_c``.
    full_matrix : scipy.sparse.csr_matrix
        Stiffness over all unknowns (singular: constants are in its kernel).
    load : ndarray
        ``(f, v0)`` over all unknowns.
    constrained_values : ndarray
        ``Q_b g`` on the boundary trace modes.
    """

    mesh: Mesh
    problem: ProblemSpec
    ops: ElementOperators
    dofmap: DofMap
    matrix: sp.csr_matrix
    rhs: np.ndarray
    full_matrix: sp.csr_matrix
    load: np.ndarray
    constrained_values: np.ndarray

    @property
    def k(self) -> int:
        return self.dofmap.k

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        """Full coefficient vector from free values and the boundary data."""
        return np.concatenate([np.asarray(x_free, dtype=float), self.constrained_values])

    def weak_function(self, x_free: np.ndarray) -> WeakFunction:
        return self.dofmap.to_weak(self.expand(x_free))


def assemble_system(
    mesh: Mesh,
    problem: ProblemSpec,
    k: int,
    ops: ElementOperators | None = None,
) -> SparseSystem:
    """Assemble the reduced system for ``problem`` with degree ``k``."""
    dofmap = build_dof_map(mesh, k)
    if ops is None:
        ops = build_element_operators(mesh, k)
    full = scatter(dofmap, local_stiffness(ops, problem.a))
    load = assemble_load(ops, dofmap, problem.f)

    bnd = np.flatnonzero(mesh.boundary)
    ub = project_qb(problem.g, mesh, k + 1, projection_degree(k), edges=bnd)
    # boundary blocks are stored in boundary-edge order after the interior ones
    uc = ub[np.argsort(dofmap.edge_slot[bnd])].ravel()

    nf = dofmap.n_free
    a_ff = full[:nf, :nf].tocsr()
    a_fc = full[:nf, nf:]
    rhs = load[:nf] - a_fc @ uc
    return SparseSystem(mesh, problem, ops, dofmap, a_ff, rhs, full, load, uc)
