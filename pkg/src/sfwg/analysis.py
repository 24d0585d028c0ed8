"""Norms, errors, the consistency form and convergence studies."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .assembly import DofMap, SparseSystem, assemble_system, local_stiffness, scatter
from .linsolve import solve_system
from .poly_basis import EdgeBasis
from .mesh import Mesh, build_perturbed_grid, build_uniform_grid
from .problems import ProblemSpec
from .weak_calculus import (
    ElementOperators,
    WeakFunction,
    project_qh,
    project_qh_vector,
    projection_degree,
    weak_gradient,
)

CSV_HEADER = "level,h,ndof,l2_err,l2_rate,energy_err,energy_rate"


def triple_bar_norm(v: WeakFunction, ops: ElementOperators, a=None) -> float:
    """``(grad_w v, grad_w v)^(1/2)``, or the ``a``-weighted variant."""
    c = weak_gradient(v, ops)
    g = ops.mass if a is None else ops.coefficient_mass(a)
    return math.sqrt(max(float(np.einsum("mi,mij,mj->", c, g, c)), 0.0))


def local_h1_matrices(ops: ElementOperators, degree: int | None = None):
    """Element matrices of the two parts of the discrete H1 norm.

    Returns ``(grad, jump)``, each (M, nloc, nloc): ``(grad v0, grad v0)_T``
    and ``h_T^{-1} ||v0 - vb||^2_{dT}`` over the local unknowns.
    """
    k = ops.k
    qd = 2 * k + 4 if degree is None else degree
    n0, nt = ops.n_scalar, ops.n_trace
    m = ops.mesh.num_triangles
    nloc = ops.n_local

    pts, w = ops.element_points(qd)
    dpsi = ops.scalar.gradients(pts)
    grad = np.zeros((m, nloc, nloc))
    grad[:, :n0, :n0] = np.einsum("mp,mpid,mpjd->mij", w, dpsi, dpsi)

    epts, s, ew = ops.edge_points(qd)
    psi = ops.scalar.values(epts.reshape(m, -1, 2)).reshape(m, 3, len(s), n0)
    chi = EdgeBasis(k + 1).values(s)
    trace = np.zeros((m, 3, len(s), nloc))
    trace[..., :n0] = psi
    for e in range(3):
        trace[:, e, :, n0 + e * nt : n0 + (e + 1) * nt] = -chi
    jump = np.einsum("meq,meqi,meqj->mij", ew, trace, trace) / ops.mesh.diameters[:, None, None]
    return grad, jump


def _local_quadratic(v: WeakFunction, ops: ElementOperators, mats) -> float:
    loc = v.local(ops.mesh.element_edges)
    return float(np.einsum("mi,mij,mj->", loc, mats, loc))


def discrete_h1_norm(v: WeakFunction, ops: ElementOperators) -> float:
    """``(sum_T ||grad v0||^2_T + h_T^{-1} ||v0 - vb||^2_{dT})^(1/2)``."""
    grad, jump = local_h1_matrices(ops)
    return math.sqrt(max(_local_quadratic(v, ops, grad + jump), 0.0))


def jump_seminorm(v: WeakFunction, ops: ElementOperators) -> float:
    """``(sum_T h_T^{-1} ||v0 - vb||^2_{dT})^(1/2)``."""
    _, jump = local_h1_matrices(ops)
    return math.sqrt(max(_local_quadratic(v, ops, jump), 0.0))


def l2_interior_norm(v: WeakFunction, ops: ElementOperators) -> float:
    """``||v0||`` over the domain."""
    g = ops.mass[:, : ops.n_scalar, : ops.n_scalar]
    return math.sqrt(max(float(np.einsum("mi,mij,mj->", v.interior, g, v.interior)), 0.0))


@dataclass
class ErrorReport:
    """Errors of ``e_h = Q_h u - u_h`` on one mesh."""

    level: int | None
    h: float
    ndof: int
    l2: float
    energy: float
    energy_weighted: float
    h1: float
    l2_rate: float | None = None
    energy_rate: float | None = None

    def csv_row(self) -> str:
        def num(x):
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6e}"

        def rate(x):
            return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.4f}"

        lvl = "" if self.level is None else str(self.level)
        return ",".join(
            [lvl, num(self.h), str(self.ndof), num(self.l2), rate(self.l2_rate),
             num(self.energy), rate(self.energy_rate)]
        )


def compute_errors(
    uh: WeakFunction,
    problem: ProblemSpec,
    ops: ElementOperators,
    level: int | None = None,
    ndof: int | None = None,
) -> ErrorReport:
    """Compare ``uh`` with ``Q_h u`` for the exact solution of ``problem``."""
    if problem.u is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    eh = project_qh(problem.u, ops) - uh
    return ErrorReport(
        level=level,
        h=ops.mesh.h,
        ndof=-1 if ndof is None else int(ndof),
        l2=l2_interior_norm(eh, ops),
        energy=triple_bar_norm(eh, ops),
        energy_weighted=triple_bar_norm(eh, ops, problem.a),
        h1=discrete_h1_norm(eh, ops),
    )


def energy_error_via_projection(uh: WeakFunction, problem: ProblemSpec, ops: ElementOperators) -> float:
    """``|| Q_h grad u - grad_w u_h ||``, equal to ``|||Q_h u - u_h|||``.

    Uses the vector projection of the exact gradient instead of the weak
    gradient of ``Q_h u``; the two agree by the commuting property.
    """
    c = project_qh_vector(problem.grad_u, ops) - weak_gradient(uh, ops)
    return math.sqrt(max(float(np.einsum("mi,mij,mj->", c, ops.mass, c)), 0.0))


def convergence_rates(errors: Sequence[float], h_ratio: float = 2.0) -> list:
    """``log(e_{l-1} / e_l) / log(h_ratio)``; first entry ``None``.

    A zero or non-finite error makes the adjacent rates ``nan``.
    """
    out: list = [None]
    for prev, cur in zip(errors[:-1], errors[1:]):
        if not (prev > 0 and cur > 0 and math.isfinite(prev) and math.isfinite(cur)):
            out.append(math.nan)
        else:
            out.append(math.log(prev / cur) / math.log(h_ratio))
    return out


def _flux_weights(problem: ProblemSpec, ops: ElementOperators, degree: int):
    """``w_q a (grad u - Q_h grad u) . n`` at edge points, shape (M, 3, nq)."""
    if problem.grad_u is None:
        raise ValueError(f"problem {problem.name!r} has no exact gradient")
    coeffs = project_qh_vector(problem.grad_u, ops, degree)
    epts, s, ew = ops.edge_points(degree)
    m = ops.mesh.num_triangles
    flat = epts.reshape(m, -1, 2)
    proj = ops.evaluate(coeffs, flat).reshape(epts.shape)
    diff = problem.grad_u(epts[..., 0], epts[..., 1]) - proj
    flux = np.einsum("rs,meqs->meqr", problem.a, diff)
    fn = np.einsum("meqr,mer->meq", flux, ops.mesh.normals)
    return ew * fn, epts, s


def ell_local(problem: ProblemSpec, ops: ElementOperators, degree: int | None = None) -> np.ndarray:
    """Local coefficient vectors of ``v -> l(u, v)``, shape (M, nloc).

    ``l(u, v) = sum_T <a (grad u - Q_h grad u) . n, v0 - vb>_{dT}``.
    """
    qd = projection_degree(ops.k) if degree is None else degree
    fw, epts, s = _flux_weights(problem, ops, qd)
    m = ops.mesh.num_triangles
    n0, nt = ops.n_scalar, ops.n_trace
    psi = ops.scalar.values(epts.reshape(m, -1, 2)).reshape(m, 3, len(s), n0)
    chi = EdgeBasis(ops.k + 1).values(s)
    out = np.zeros((m, ops.n_local))
    out[:, :n0] = np.einsum("meq,meqi->mi", fw, psi)
    out[:, n0:] = -np.einsum("meq,qa->mea", fw, chi).reshape(m, 3 * nt)
    return out


def ell_form(problem: ProblemSpec, v: WeakFunction, ops: ElementOperators, degree: int | None = None) -> float:
    """``l(u, v)`` for the exact solution of ``problem``."""
    loc = v.local(ops.mesh.element_edges)
    return float(np.einsum("mi,mi->", ell_local(problem, ops, degree), loc))


def ell_vector(problem: ProblemSpec, ops: ElementOperators, dofmap: DofMap, degree: int | None = None) -> np.ndarray:
    """Global vector ``L`` with ``l(u, v) = L @ x_v`` over all unknowns."""
    loc = ell_local(problem, ops, degree)
    out = np.zeros(dofmap.n_total)
    np.add.at(out, dofmap.local_to_global.ravel(), loc.ravel())
    return out


def verify_error_equation(system: SparseSystem, x_free: np.ndarray) -> float:
    """Largest normalized defect of ``(a grad_w e_h, grad_w v) = l(u, v)``.

    Over every free unit vector ``v`` the defect is divided by
    ``|||e_h||| |||v|||``.  Zero error returns the absolute defect.
    """
    problem, ops, dm = system.problem, system.ops, system.dofmap
    eh_full = dm.from_weak(project_qh(problem.u, ops)) - system.expand(x_free)
    lhs = (system.full_matrix @ eh_full)[: dm.n_free]
    rhs = ell_vector(problem, ops, dm)[: dm.n_free]
    defect = np.abs(lhs - rhs)
    unweighted = scatter_unweighted(ops, dm)
    e_norm = math.sqrt(max(float(eh_full @ (unweighted @ eh_full)), 0.0))
    v_norm = np.sqrt(np.maximum(unweighted.diagonal()[: dm.n_free], 0.0))
    if e_norm == 0.0:
        return float(defect.max(initial=0.0))
    return float((defect / (e_norm * v_norm)).max(initial=0.0))


def scatter_unweighted(ops: ElementOperators, dm: DofMap):
    """Global Gram matrix of ``|||.|||^2`` over all unknowns."""
    return scatter(dm, local_stiffness(ops, np.eye(2)))


# --- convergence studies -------------------------------------------------


def build_grid(grid: str, level: int, seed: int = 7, magnitude: float = 0.2) -> Mesh:
    if grid == "uniform":
        return build_uniform_grid(level)
    if grid == "perturbed":
        return build_perturbed_grid(level, seed, magnitude)
    raise ValueError(f"unknown grid family {grid!r}")


@dataclass
class SolveResult:
    system: SparseSystem
    x: np.ndarray
    report: object
    errors: ErrorReport | None = None

    @property
    def weak(self) -> WeakFunction:
        return self.system.weak_function(self.x)


def solve_problem(mesh: Mesh, problem: ProblemSpec, k: int, tol: float = 1e-12,
                  maxit: int | None = None, condense: bool = False, level: int | None = None) -> SolveResult:
    """Assemble, solve by CG and (for problems with exact data) measure errors."""
    system = assemble_system(mesh, problem, k)
    x, report = solve_system(system, tol=tol, maxit=maxit, condense=condense)
    result = SolveResult(system, x, report)
    if problem.u is not None:
        result.errors = compute_errors(
            system.weak_function(x), problem, system.ops, level, system.dofmap.n_free
        )
    return result


def convergence_study(problem: ProblemSpec, k: int, levels: Iterable[int], grid: str = "uniform",
                      seed: int = 7, magnitude: float = 0.2, tol: float = 1e-12,
                      maxit: int | None = None, condense: bool = False, meshes=None) -> list:
    """Error reports per level with rates against the previous level."""
    reports = []
    for level in levels:
        mesh = build_grid(grid, level, seed, magnitude) if meshes is None else meshes[level]
        res = solve_problem(mesh, problem, k, tol, maxit, condense, level)
        reports.append(res.errors)
    l2r = convergence_rates([r.l2 for r in reports])
    enr = convergence_rates([r.energy for r in reports])
    for r, a, b in zip(reports, l2r, enr):
        r.l2_rate, r.energy_rate = a, b
    return reports


def format_csv(reports: Sequence[ErrorReport]) -> str:
    return "\n".join([CSV_HEADER] + [r.csv_row() for r in reports]) + "\n"


def format_table(reports: Sequence[ErrorReport], title: str = "") -> str:
    """Plain-text table: level, L2 error, rate, triple-bar error, rate."""

    def e(x):
        if x == 0:
            return "0.0000E+00"
        exp = math.floor(math.log10(abs(x))) + 1
        return f"{x / 10**exp:.4f}E{exp:+03d}"

    def r(x):
        return "    " if x is None or math.isnan(x) else f"{x:.2f}"

    buf = io.StringIO()
    if title:
        buf.write(title + "\n")
    buf.write(f"{'level':>5} | {'||Q_h u - u_h||_0':>18} {'rate':>5} | {'|||Q_h u - u_h|||':>18} {'rate':>5}\n")
    buf.write("-" * 62 + "\n")
    for rep in reports:
        lvl = "" if rep.level is None else str(rep.level)
        buf.write(f"{lvl:>5} | {e(rep.l2):>18} {r(rep.l2_rate):>5} | {e(rep.energy):>18} {r(rep.energy_rate):>5}\n")
    return buf.getvalue()
