"""Sparse SPD solvers: CG, block Jacobi, static condensation, dense pencils."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CapacityError, ConditioningError, SolverError

MAX_DENSE = 2000

Preconditioner = Callable[[np.ndarray], np.ndarray]


@dataclass
class SolveReport:
    iterations: int
    residual: float
    flag: str
    wall_time: float

    @property
    def converged(self) -> bool:
        return self.flag == "converged"


def default_maxit(n: int) -> int:
    return max(10, int(50 * math.sqrt(max(n, 1))))


def cg(
    A,
    b: np.ndarray,
    tol: float = 1e-12,
    maxit: int | None = None,
    preconditioner: Preconditioner | None = None,
    x0: np.ndarray | None = None,
    raise_on_failure: bool = True,
    check_monotone: bool = False,
):
    """Preconditioned conjugate gradients for SPD ``A``.

    Converged means ``||b - A x|| <= tol * ||b||`` for the true residual,
    which is recomputed whenever the recursive one meets the tolerance.  A
    step with ``p^T A p <= 0`` flags a breakdown: ``A`` is not SPD.

    With ``check_monotone`` the energy ``x^T A x / 2 - b^T x`` (the squared
    A-norm of the error up to a constant) is tracked from ``p^T r`` and
    ``p^T A p`` each step, and any increase is reported as a breakdown.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    start = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    maxit = default_maxit(n) if maxit is None else maxit
    apply = preconditioner if preconditioner is not None else (lambda r: r)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))

    def finish(flag, it, res):
        rep = SolveReport(it, res, flag, time.perf_counter() - start)
        if raise_on_failure and flag != "converged":
            raise SolverError(f"CG {flag} after {it} iterations (residual {res:.3e})", flag, rep)
        return x, rep

    if bnorm == 0.0:
        x[:] = 0.0
        return finish("converged", 0, 0.0)
    r = b - A @ x
    z = apply(r)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    while True:
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol:
            true = float(np.linalg.norm(b - A @ x)) / bnorm
            if true <= tol:
                return finish("converged", it, true)
            # drifted recursive residual: restart from the true one
            r = b - A @ x
            z = apply(r)
            p = z.copy()
            rz = float(r @ z)
        if it >= maxit:
            return finish("maxit", it, float(np.linalg.norm(b - A @ x)) / bnorm)
        ap = A @ p
        pap = float(p @ ap)
        if not pap > 0.0 or rz <= 0.0:
            return finish("breakdown", it, res)
        alpha = rz / pap
        if check_monotone:
            change = -alpha * float(p @ r) + 0.5 * alpha * alpha * pap
            if change > 1e-13 * alpha * abs(rz):
                return finish("breakdown", it, res)
        x += alpha * p
        r -= alpha * ap
        z = apply(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1


@dataclass(frozen=True, eq=False)
class BlockJacobi:
    """Inverse of the block diagonal of a matrix, applied as a sparse product."""

    inverse: sp.csr_matrix
    blocks: tuple

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return self.inverse @ r


def _block_list(blocks, n):
    if hasattr(blocks, "free_blocks"):
        blocks = blocks.free_blocks()
    blocks = [(int(s), int(m)) for s, m in blocks]
    covered = sum(m for _, m in blocks)
    if covered != n:
        raise ValueError(f"blocks cover {covered} unknowns, matrix has {n}")
    return blocks


def _extract_blocks(A, blocks):
    """Dense diagonal blocks grouped by size: {size: (starts, array)}."""
    A = sp.csr_matrix(A)
    groups = {}
    for s, m in blocks:
        groups.setdefault(m, []).append(s)
    out = {}
    for m, starts in groups.items():
        starts = np.array(starts)
        idx = starts[:, None] + np.arange(m)  # (nb, m)
        rows = np.repeat(idx, m, axis=1).ravel()
        cols = np.tile(idx, (1, m)).ravel()
        vals = np.asarray(A[rows, cols]).reshape(len(starts), m, m)
        out[m] = (starts, vals)
    return out


def _block_diag_csr(n, groups):
    rows, cols, vals = [], [], []
    for m, (starts, mats) in groups.items():
        idx = starts[:, None] + np.arange(m)
        rows.append(np.repeat(idx, m, axis=1).ravel())
        cols.append(np.tile(idx, (1, m)).ravel())
        vals.append(mats.ravel())
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def _invert_blocks(groups):
    out = {}
    for m, (starts, mats) in groups.items():
        try:
            chol = np.linalg.cholesky(mats)
        except np.linalg.LinAlgError:
            for s, blk in zip(starts, mats):
                if np.linalg.eigvalsh(blk)[0] <= 0:
                    raise ConditioningError(
                        f"diagonal block at unknowns [{s}, {s + m}) is not positive definite"
                    ) from None
            raise
        piv = np.diagonal(chol, axis1=1, axis2=2)
        bad = np.flatnonzero(piv.min(axis=1) <= 1e-14 * np.abs(piv).max())
        if len(bad):
            s = starts[bad[0]]
            raise ConditioningError(f"diagonal block at unknowns [{s}, {s + m}) is singular")
        eye = np.broadcast_to(np.eye(m), mats.shape)
        linv = np.linalg.solve(chol, eye)
        out[m] = (starts, np.einsum("bki,bkj->bij", linv, linv))
    return out


def block_jacobi_preconditioner(A, blocks) -> BlockJacobi:
    """Block Jacobi preconditioner for the given (start, size) blocks.

    ``blocks`` may be a :class:`~sfwg.assembly.DofMap`, in which case its free
    element and edge blocks are used.
    """
    n = A.shape[0]
    blist = _block_list(blocks, n)
    inv = _invert_blocks(_extract_blocks(A, blist))
    return BlockJacobi(_block_diag_csr(n, inv), tuple(blist))


@dataclass(frozen=True, eq=False)
class CondensedSystem:
    """Schur complement on the edge unknowns and the interior recovery."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_interior: int
    interior_inverse: sp.csr_matrix
    coupling: sp.csr_matrix
    interior_rhs: np.ndarray

    def recover(self, x_edges: np.ndarray) -> np.ndarray:
        """Full free solution from the edge unknowns."""
        xi = self.interior_inverse @ (self.interior_rhs - self.coupling @ x_edges)
        return np.concatenate([xi, x_edges])


def static_condensation(A, b: np.ndarray, dofmap) -> CondensedSystem:
    """Eliminate the element interior unknowns.

    Interior blocks are element local, so ``A_ii`` is block diagonal and its
    inverse is formed block by block.
    """
    A = sp.csr_matrix(A)
    ni = dofmap.n_interior_dofs
    n0 = dofmap.n_scalar
    blocks = [(t * n0, n0) for t in range(dofmap.n_elements)]
    a_ii = A[:ni, :ni]
    inv = _block_diag_csr(ni, _invert_blocks(_extract_blocks(a_ii, blocks)))
    a_ie = A[:ni, ni:].tocsr()
    a_ei = A[ni:, :ni].tocsr()
    a_ee = A[ni:, ni:].tocsr()
    s = (a_ee - a_ei @ (inv @ a_ie)).tocsr()
    s = 0.5 * (s + s.T)
    s = s.tocsr()
    s.sort_indices()
    rhs = b[ni:] - a_ei @ (inv @ b[:ni])
    return CondensedSystem(s, rhs, ni, inv, a_ie, b[:ni].copy())


def condensation_blocks(dofmap) -> list:
    """Edge blocks of the condensed system."""
    nt = dofmap.n_trace
    return [(j * nt, nt) for j in range(dofmap.n_interior_edges)]


def min_cholesky_pivot(A, dofmap=None) -> float:
    """Smallest pivot of a symmetric factorization of ``A``.

    Positive iff ``A`` is positive definite.  With a dof map the interior
    blocks are factored by dense Cholesky and the Schur complement by a
    sparse LU restricted to diagonal pivots (equal to the LDL^T pivots for a
    symmetric matrix); otherwise ``A`` is factored densely.
    """
    if dofmap is None:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        try:
            chol = np.linalg.cholesky(dense)
        except np.linalg.LinAlgError:
            return -math.inf
        return float(np.diagonal(chol).min() ** 2)
    ni = dofmap.n_interior_dofs
    n0 = dofmap.n_scalar
    A = sp.csr_matrix(A)
    groups = _extract_blocks(A[:ni, :ni], [(t * n0, n0) for t in range(dofmap.n_elements)])
    pivots = []
    for _, (_, mats) in groups.items():
        try:
            chol = np.linalg.cholesky(mats)
        except np.linalg.LinAlgError:
            return -math.inf
        pivots.append((np.diagonal(chol, axis1=1, axis2=2) ** 2).min())
    cond = static_condensation(A, np.zeros(A.shape[0]), dofmap)
    if cond.matrix.shape[0]:
        lu = spla.splu(
            cond.matrix.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        pivots.append(lu.U.diagonal().min())
    return float(min(pivots))


def dense_sym_eig(M, B=None, vectors: bool = False):
    """Eigenvalues of the symmetric pencil ``M x = lambda B x`` (ascending).

    ``B`` defaults to the identity and must be SPD.
    """
    M = np.asarray(M.toarray() if sp.issparse(M) else M, dtype=float)
    if M.shape[0] > MAX_DENSE:
        raise CapacityError(f"dense eigensolve of order {M.shape[0]} exceeds {MAX_DENSE}")
    if B is not None:
        B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
        try:
            np.linalg.cholesky(B)
        except np.linalg.LinAlgError:
            raise ConditioningError("B is not symmetric positive definite") from None
    M = 0.5 * (M + M.T)
    if B is not None:
        B = 0.5 * (B + B.T)
    if vectors:
        return sla.eigh(M, B)
    return sla.eigh(M, B, eigvals_only=True)


def solve_system(system, tol: float = 1e-12, maxit: int | None = None,
                 condense: bool = False, preconditioner: str = "block-jacobi"):
    """Solve an assembled :class:`~sfwg.assembly.SparseSystem` by CG.

    Returns the free solution vector and the :class:`SolveReport`.
    """
    A, b, dm = system.matrix, system.rhs, system.dofmap
    if condense:
        cs = static_condensation(A, b, dm)
        pc = None
        if preconditioner == "block-jacobi" and cs.matrix.shape[0]:
            pc = block_jacobi_preconditioner(cs.matrix, condensation_blocks(dm))
        xe, rep = cg(cs.matrix, cs.rhs, tol=tol, maxit=maxit, preconditioner=pc)
        return cs.recover(xe), rep
    pc = block_jacobi_preconditioner(A, dm) if preconditioner == "block-jacobi" else None
    return cg(A, b, tol=tol, maxit=maxit, preconditioner=pc)
