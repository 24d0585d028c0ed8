import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from sfwg.assembly import assemble_system
from sfwg.errors import CapacityError, ConditioningError, SolverError
from sfwg.linsolve import (
    MAX_DENSE,
    block_jacobi_preconditioner,
    cg,
    condensation_blocks,
    dense_sym_eig,
    min_cholesky_pivot,
    solve_system,
    static_condensation,
)
from sfwg.mesh import Mesh, build_uniform_grid
from sfwg.problems import get_problem, zero


def test_identity_in_one_iteration():
    b = np.random.default_rng(0).normal(size=17)
    x, rep = cg(sp.identity(17, format="csr"), b)
    assert rep.converged and rep.iterations == 1
    assert np.allclose(x, b, rtol=1e-15)


def test_two_by_two():
    x, rep = cg(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([2.0, 1.0]))
    assert np.allclose(x, [1.0, 0.0], atol=1e-14)
    assert rep.residual <= 1e-12


def test_example2_against_dense_cholesky():
    system = assemble_system(build_uniform_grid(3), get_problem("example2"), 2)
    x, rep = solve_system(system, tol=1e-12)
    assert rep.converged
    dense = system.matrix.toarray()
    ref = sla.cho_solve(sla.cho_factor(dense), system.rhs)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)


def test_breakdown_on_indefinite():
    A = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(SolverError) as info:
        cg(A, np.ones(3))
    assert info.value.flag == "breakdown"
    _, rep = cg(A, np.ones(3), raise_on_failure=False)
    assert rep.flag == "breakdown" and not rep.converged


def test_maxit_reported():
    system = assemble_system(build_uniform_grid(4), get_problem("example1"), 1)
    _, rep = cg(system.matrix, system.rhs, maxit=3, raise_on_failure=False)
    assert rep.flag == "maxit" and rep.iterations == 3
    assert rep.residual > 1e-12


def test_zero_rhs():
    x, rep = cg(np.eye(3), np.zeros(3))
    assert rep.converged and rep.iterations == 0 and np.all(x == 0)


def test_monotone_energy_on_assembled_system():
    system = assemble_system(build_uniform_grid(4), get_problem("example2"), 2)
    pc = block_jacobi_preconditioner(system.matrix, system.dofmap)
    _, rep = cg(system.matrix, system.rhs, preconditioner=pc, check_monotone=True)
    assert rep.converged


def test_block_jacobi_identity_and_diagonal():
    n = 12
    pc = block_jacobi_preconditioner(sp.identity(n, format="csr"), [(0, 3), (3, 3), (6, 6)])
    r = np.arange(n, dtype=float)
    assert np.array_equal(pc(r), r)
    d = sp.diags(np.linspace(1, 50, n)).tocsr()
    pc = block_jacobi_preconditioner(d, [(i, 1) for i in range(n)])
    x, rep = cg(d, np.ones(n), preconditioner=pc)
    assert rep.iterations == 1
    with pytest.raises(ValueError):
        block_jacobi_preconditioner(d, [(0, 5)])


def test_block_jacobi_singular_block_named():
    A = sp.csr_matrix(np.diag([1.0, 0.0, 2.0, 3.0]))
    with pytest.raises(ConditioningError, match=r"\[0, 2\)"):
        block_jacobi_preconditioner(A, [(0, 2), (2, 2)])


def test_preconditioning_reduces_iterations():
    system = assemble_system(build_uniform_grid(5), get_problem("example1"), 1)
    _, plain = solve_system(system, preconditioner="none")
    _, pre = solve_system(system)
    assert pre.iterations < plain.iterations


def test_condensation_matches_full_solve():
    system = assemble_system(build_uniform_grid(3), get_problem("example1"), 1)
    full, _ = solve_system(system, tol=1e-13)
    cond, _ = solve_system(system, tol=1e-13, condense=True)
    assert np.linalg.norm(cond - full) <= 1e-9 * np.linalg.norm(full)
    cs = static_condensation(system.matrix, system.rhs, system.dofmap)
    assert cs.matrix.shape[0] == system.dofmap.n_free - system.dofmap.n_interior_dofs
    assert len(condensation_blocks(system.dofmap)) == system.dofmap.n_interior_edges


def test_condensation_single_element():
    mesh = Mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])
    system = assemble_system(mesh, get_problem("example1"), 1)
    cs = static_condensation(system.matrix, system.rhs, system.dofmap)
    # every edge is a boundary edge: nothing left after condensation
    assert cs.matrix.shape == (0, 0)
    x, rep = solve_system(system, condense=True)
    assert x.shape == (3,) and rep.converged


def test_zero_data_through_both_paths():
    prob = get_problem("example2").with_data(zero, zero)
    system = assemble_system(build_uniform_grid(3), prob, 2)
    for condense in (False, True):
        x, _ = solve_system(system, condense=condense)
        assert np.all(x == 0)


def test_min_pivot_sign():
    assert min_cholesky_pivot(np.diag([4.0, 1.0])) == pytest.approx(1.0)
    assert min_cholesky_pivot(np.diag([4.0, -1.0])) < 0
    system = assemble_system(build_uniform_grid(3), get_problem("example1"), 2)
    dense = min_cholesky_pivot(system.matrix)
    blocked = min_cholesky_pivot(system.matrix, system.dofmap)
    assert dense > 0 and blocked > 0


def eigenvalues_by_inertia(M, B, lo, hi, tol=1e-10):
    """Pencil eigenvalues by bisection on the inertia of M - s B."""

    def count_below(s):
        _, d, _ = sla.ldl(M - s * B)
        return int(np.sum(np.linalg.eigvalsh(d) < 0))

    n = M.shape[0]
    out = []
    for i in range(n):
        a, b = lo, hi
        while b - a > tol * max(1.0, abs(b)):
            mid = 0.5 * (a + b)
            if count_below(mid) > i:
                b = mid
            else:
                a = mid
        out.append(0.5 * (a + b))
    return np.array(out)


def test_dense_eig_examples():
    assert np.allclose(dense_sym_eig(np.diag([3.0, 1.0])), [1.0, 3.0])
    rng = np.random.default_rng(3)
    g = rng.normal(size=(6, 6))
    b = g @ g.T + 6 * np.eye(6)
    assert np.allclose(dense_sym_eig(b, b), 1.0)


def test_dense_eig_against_inertia_oracle():
    rng = np.random.default_rng(20)
    g = rng.normal(size=(20, 20))
    m = g @ g.T + np.eye(20)
    h = rng.normal(size=(20, 20))
    b = h @ h.T + 20 * np.eye(20)
    vals, vecs = dense_sym_eig(m, b, vectors=True)
    ref = eigenvalues_by_inertia(m, b, 0.0, 10.0)
    assert np.abs(vals - ref).max() <= 1e-7 * vals.max()
    resid = np.linalg.norm(m @ vecs - (b @ vecs) * vals, axis=0)
    assert resid.max() <= 1e-9 * np.linalg.norm(m)


def test_dense_eig_errors():
    with pytest.raises(ConditioningError):
        dense_sym_eig(np.eye(2), np.diag([1.0, -1.0]))
    with pytest.raises(CapacityError):
        dense_sym_eig(sp.identity(MAX_DENSE + 1, format="csr"))


def test_spmv_matches_dense():
    system = assemble_system(build_uniform_grid(3), get_problem("example2"), 1)
    A = system.matrix
    assert A.shape[0] <= 500
    x = np.random.default_rng(5).normal(size=A.shape[0])
    ref = A.toarray() @ x
    assert np.linalg.norm(A @ x - ref) <= 1e-13 * np.linalg.norm(ref)
