"""Measured constants of the stability inequalities.

Every constant is an extreme generalized eigenvalue of a pair of Gram
matrices assembled over the discrete space, computed densely.  The reference
for every pencil is the Gram matrix of ``|||v|||^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import local_h1_matrices
from .assembly import DofMap, build_dof_map, local_stiffness, scatter
from .errors import CapacityError, MeshError
from .linsolve import MAX_DENSE, dense_sym_eig
from .mesh import Mesh
from .weak_calculus import ElementOperators, build_element_operators

REFERENCE_APEX = (1.0, -0.75)
# lower apex of the second triangle; all keep the patch shape regular
PATCH_APICES = (
    (1.0, -0.75),
    (0.5, -0.5),
    (0.2, -0.9),
    (1.4, -0.6),
    (0.8, -0.25),
)


@dataclass
class LemmaReport:
    """Measured constants and where they were measured."""

    name: str
    k: int
    h: float
    ndof: int
    constants: dict = field(default_factory=dict)
    passed: bool = True
    failures: list = field(default_factory=list)

    def check(self, ok: bool, message: str) -> None:
        if not ok:
            self.passed = False
            self.failures.append(message)

    def summary(self) -> str:
        vals = " ".join(f"{key}={val:.6g}" for key, val in self.constants.items())
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name} k={self.k} h={self.h:.4g} ndof={self.ndof} {vals} {status}"


def pencil_extremes(A, B, rtol: float = 1e-10):
    """Smallest and largest ``x^T A x / x^T B x`` over the range of ``B``.

    ``B`` may be semidefinite; its numerical kernel (eigenvalues below
    ``rtol * max``) is projected out.  If ``A`` does not vanish on that
    kernel the supremum is infinite and ``inf`` is returned as the maximum.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    A = 0.5 * (A + A.T)
    lam, vec = dense_sym_eig(0.5 * (B + B.T), vectors=True)
    keep = lam > rtol * lam[-1]
    if keep.all():
        ev = dense_sym_eig(A, B)
        return float(ev[0]), float(ev[-1])
    kern = vec[:, ~keep]
    leak = np.abs(kern.T @ A @ kern).max()
    scale = vec[:, keep] / np.sqrt(lam[keep])
    ev = dense_sym_eig(scale.T @ A @ scale)
    top = math.inf if leak > rtol * max(np.abs(A).max(), 1.0) else float(ev[-1])
    return float(ev[0]), top


@dataclass(frozen=True, eq=False)
class Grams:
    """Dense Gram matrices over a set of unknowns."""

    dofmap: DofMap
    energy: np.ndarray
    weighted: np.ndarray
    h1: np.ndarray
    jump: np.ndarray


def assemble_grams(mesh: Mesh, k: int, a=None, free_only: bool = True,
                   ops: ElementOperators | None = None) -> Grams:
    """``|||.|||^2``, ``|||.|||_1^2``, ``||.||_{1,h}^2`` and the jump form."""
    dm = build_dof_map(mesh, k)
    n = dm.n_free if free_only else dm.n_total
    if n > MAX_DENSE:
        raise CapacityError(f"{n} unknowns exceed the dense limit {MAX_DENSE}")
    if ops is None:
        ops = build_element_operators(mesh, k)
    a = np.eye(2) if a is None else a
    grad, jump = local_h1_matrices(ops)

    def dense(local):
        return scatter(dm, local)[:n, :n].toarray()

    return Grams(
        dm,
        dense(local_stiffness(ops, np.eye(2))),
        dense(local_stiffness(ops, a)),
        dense(grad + jump),
        dense(jump),
    )


def verify_norm_equivalence(mesh: Mesh, k: int, a=None) -> LemmaReport:
    """Measured ``C_jump``, ``C1``, ``C2``, ``alpha``, ``beta`` on ``mesh``.

    ``C_jump`` bounds the jump form by ``|||v|||^2``; ``C1``, ``C2`` bound
    ``|||v|||`` by ``||v||_{1,h}`` from below and above; ``alpha``, ``beta``
    bound ``|||v|||_1`` by ``|||v|||``.
    """
    g = assemble_grams(mesh, k, a)
    jmin, jmax = pencil_extremes(g.jump, g.energy)
    hmin, hmax = pencil_extremes(g.h1, g.energy)
    wmin, wmax = pencil_extremes(g.weighted, g.energy)
    rep = LemmaReport("norm-equivalence", k, mesh.h, g.dofmap.n_free)
    rep.constants = {
        "C_jump": jmax,
        "C1": 1.0 / math.sqrt(hmax),
        "C2": 1.0 / math.sqrt(hmin) if hmin > 0 else math.inf,
        "alpha": math.sqrt(max(wmin, 0.0)),
        "beta": math.sqrt(wmax),
    }
    for key, val in rep.constants.items():
        rep.check(math.isfinite(val) and val > 0, f"{key} = {val} is not finite and positive")
    return rep


def relative_variation(values) -> float:
    """Largest ``|c_{l} / c_{l-1} - 1|`` over successive entries."""
    vals = list(values)
    return max((abs(b / a - 1.0) for a, b in zip(vals[:-1], vals[1:])), default=0.0)


# --- two-element patches --------------------------------------------------


def patch_mesh(apex=REFERENCE_APEX, scale: float = 1.0, bound: float = 10.0) -> Mesh:
    """Triangles (0,0),(1,0),(0,1) and (0,0),apex,(1,0), scaled by ``scale``.

    The shared edge is the segment from (0,0) to (1,0); ``apex`` must lie
    below it.
    """
    p1, p2 = map(float, apex)
    if not p2 < 0:
        raise MeshError(f"patch apex {apex} must lie below the shared edge", [])
    nodes = scale * np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [p1, p2]])
    tris = np.array([[0, 1, 2], [0, 3, 1]])
    mesh = Mesh(nodes, tris)
    ratios = mesh.diameters / mesh.inradii
    if ratios.max() > bound:
        raise MeshError(
            f"patch with apex {apex} violates shape regularity "
            f"(ratio {ratios.max():.3g} > {bound})",
            [f"ratio {r:.6g}" for r in ratios],
        )
    return mesh


def _shared_edge(mesh: Mesh) -> int:
    inner = np.flatnonzero(~mesh.boundary)
    if len(inner) != 1:
        raise MeshError("a patch has exactly one interior edge", [])
    return int(inner[0])


def interelement_jump_gram(ops: ElementOperators, dm: DofMap, edge: int,
                           degree: int | None = None) -> np.ndarray:
    """Dense Gram of ``||v0^(1) - v0^(2)||^2_e`` over all unknowns."""
    mesh = ops.mesh
    qd = 2 * ops.k + 2 if degree is None else degree
    epts, s, ew = ops.edge_points(qd)
    m = mesh.num_triangles
    psi = ops.scalar.values(epts.reshape(m, -1, 2)).reshape(m, 3, len(s), ops.n_scalar)
    t1, t2 = mesh.edge_elements[edge]
    rows = np.zeros((len(s), dm.n_total))
    weights = None
    for t, sign in ((t1, 1.0), (t2, -1.0)):
        le = int(np.flatnonzero(mesh.element_edges[t] == edge)[0])
        rows[:, dm.element_dofs(t)] += sign * psi[t, le]
        weights = ew[t, le]
    return rows.T @ (weights[:, None] * rows)


def patch_constants(k: int, apex=REFERENCE_APEX, scale: float = 1.0) -> dict:
    """Largest Rayleigh quotients of both patch inequalities.

    ``A2``: ``||v0^(1) - v0^(2)||^2_{e1} / ||grad_w v||^2``;
    ``A3``: ``||vb - v0||^2_{dT1 u dT2} / ||grad_w v||^2``;
    over all weak functions of the patch modulo the kernel of ``grad_w``.
    """
    if not 1 <= k <= 4:
        raise ValueError(f"patch lemmas are measured for 1 <= k <= 4, got {k}")
    mesh = patch_mesh(apex, scale)
    ops = build_element_operators(mesh, k)
    g = assemble_grams(mesh, k, free_only=False, ops=ops)
    _, jump = local_h1_matrices(ops)
    trace = scatter(g.dofmap, jump * mesh.diameters[:, None, None]).toarray()
    cross = interelement_jump_gram(ops, g.dofmap, _shared_edge(mesh))
    _, c2 = pencil_extremes(cross, g.energy)
    _, c3 = pencil_extremes(trace, g.energy)
    return {"A2": c2, "A3": c3, "h_T1": float(mesh.diameters[1]), "ndof": g.dofmap.n_total}


def verify_patch_lemmas(k: int, apices=PATCH_APICES, scale: float = 0.25,
                        tol: float = 0.05) -> LemmaReport:
    """Measure both patch constants and their scaling with the patch size.

    For each apex the constants are measured at unit size and after the map
    ``x -> scale * x``; each should shrink by the factor ``scale``.
    """
    rep = LemmaReport("patch-lemmas", k, 1.0, 0)
    for i, apex in enumerate(apices):
        unit = patch_constants(k, apex, 1.0)
        small = patch_constants(k, apex, scale)
        rep.ndof = unit["ndof"]
        for key in ("A2", "A3"):
            c1, cs = unit[key], small[key]
            rep.constants[f"{key}[{i}]"] = c1
            ok = math.isfinite(c1) and c1 > 0 and math.isfinite(cs)
            rep.check(ok, f"{key} constant for apex {apex} is {c1}")
            if ok:
                ratio = cs / (scale * c1)
                rep.constants[f"{key}_scaling[{i}]"] = ratio
                rep.check(abs(ratio - 1.0) <= tol,
                          f"{key} scaling for apex {apex}: ratio {ratio:.6g}")
    return rep
