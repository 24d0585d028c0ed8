"""Property checks shared by ``wg verify`` and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import build_grid, verify_error_equation
from .assembly import assemble_system
from .errors import SolverError
from .lemmas import relative_variation, verify_norm_equivalence, verify_patch_lemmas
from .linsolve import min_cholesky_pivot, solve_system
from .mesh import Mesh
from .poly_basis import monomial_exponents
from .problems import get_problem
from .weak_calculus import (
    build_element_operators,
    project_qh,
    project_qh_vector,
    weak_gradient,
    weak_gradient_of_field,
)

SUITES = ("identities", "wellposed", "error-equation", "lemmas", "patches")


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "passed": self.passed,
            **self.detail,
        }


def random_elements(n: int, seed: int = 0, bound: float = 10.0) -> Mesh:
    """``n`` disjoint shape-regular random triangles, as one mesh."""
    rng = np.random.default_rng(seed)
    tris = []
    while len(tris) < n:
        scale = 10 ** rng.uniform(-1.5, 0.0)
        p = rng.uniform(0, 1, 2) + scale * rng.normal(size=(3, 2))
        a = 0.5 * ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
        if a < 0:
            p = p[[0, 2, 1]]
        edges = np.linalg.norm(p - p[[1, 2, 0]], axis=1)
        area = abs(a)
        if area == 0 or edges.max() / (2 * area / edges.sum()) > bound:
            continue
        tris.append(p)
    nodes = np.concatenate(tris)
    return Mesh(nodes, np.arange(3 * n).reshape(n, 3))


def random_polynomial(degree: int, rng):
    """A random polynomial of the given total degree and its gradient."""
    exps = monomial_exponents(degree)
    c = rng.normal(size=len(exps))

    def p(x, y):
        return sum(ci * x**i * y**j for ci, (i, j) in zip(c, exps))

    def grad(x, y):
        gx = sum(ci * i * x ** max(i - 1, 0) * y**j for ci, (i, j) in zip(c, exps) if i)
        gy = sum(ci * j * x**i * y ** max(j - 1, 0) for ci, (i, j) in zip(c, exps) if j)
        shape = np.broadcast(x, y).shape
        return np.stack([np.broadcast_to(gx, shape), np.broadcast_to(gy, shape)], axis=-1)

    return p, grad


def check_identities(k: int, n_elements: int = 50, seed: int = 0, tol: float = 1e-10) -> list:
    """``grad_w Q_h phi = Q_h grad phi`` and ``grad_w phi = Q_h grad phi``.

    ``phi`` is a random polynomial of degree ``k + 2`` on random elements.
    """
    rng = np.random.default_rng(seed + 7919 * k)
    mesh = random_elements(n_elements, seed + k)
    ops = build_element_operators(mesh, k)
    phi, grad = random_polynomial(k + 2, rng)
    target = project_qh_vector(grad, ops)
    scale = max(1.0, float(np.abs(target).max()))
    e26 = float(np.abs(weak_gradient(project_qh(phi, ops), ops) - target).max()) / scale
    e27 = float(np.abs(weak_gradient_of_field(phi, ops) - target).max()) / scale
    detail = {"k": k, "elements": n_elements}
    return [
        Check("commuting-projection", e26, tol, e26 <= tol, detail),
        Check("commuting-field", e27, tol, e27 <= tol, detail),
    ]


def check_wellposed(k: int, levels, problem: str = "example1", grid: str = "uniform",
                    seed: int = 7, magnitude: float = 0.2, tol: float = 1e-12) -> list:
    """Reduced systems are SPD: positive factorization pivots and CG succeeds."""
    out = []
    prob = get_problem(problem)
    for level in levels:
        system = assemble_system(build_grid(grid, level, seed, magnitude), prob, k)
        pivot = min_cholesky_pivot(system.matrix, system.dofmap)
        try:
            _, rep = solve_system(system, tol=tol)
            flag = rep.flag
        except SolverError as exc:
            flag = exc.flag
        detail = {"k": k, "level": level, "grid": grid, "cg": flag}
        out.append(Check("spd", pivot, 0.0, pivot > 0 and flag == "converged", detail))
    return out


def check_error_equation(k: int = 2, level: int = 3, problem: str = "example2",
                         tol: float = 1e-12, condense: bool = True, bound: float = 1e-8) -> list:
    """Normalized defect of the error equation for a polynomial solution."""
    prob = get_problem(problem)
    system = assemble_system(build_grid("uniform", level), prob, k)
    x, _ = solve_system(system, tol=tol, condense=condense)
    res = verify_error_equation(system, x)
    return [Check("error-equation", res, bound, res <= bound, {"k": k, "level": level, "problem": problem})]


def check_norm_equivalence(ks=(1, 2), levels=(1, 2, 3), bound: float = 0.1) -> list:
    """Measured constants positive and stable across successive levels."""
    out = []
    aniso = get_problem("example2").a
    for k in ks:
        reps = [verify_norm_equivalence(build_grid("uniform", lv), k, aniso) for lv in levels]
        for key in reps[0].constants:
            vals = [r.constants[key] for r in reps]
            var = relative_variation(vals)
            ok = all(math.isfinite(v) and v > 0 for v in vals) and var < bound
            out.append(Check(f"variation:{key}", var, bound, ok,
                             {"k": k, "levels": list(levels), "values": vals}))
    return out


def check_patches(k: int, tol: float = 0.05) -> list:
    rep = verify_patch_lemmas(k, tol=tol)
    worst = max((abs(v - 1.0) for key, v in rep.constants.items() if "scaling" in key), default=math.inf)
    consts = {key: v for key, v in rep.constants.items() if "scaling" not in key}
    return [Check("patch-scaling", worst, tol, rep.passed, {"k": k, "constants": consts,
                                                            "failures": rep.failures})]


def run_suite(suite: str, k: int | None = None, levels=None, grid: str = "uniform",
              seed: int = 7, magnitude: float = 0.2, tol: float = 1e-12) -> list:
    """Checks of one named suite; ``k`` and ``levels`` narrow the defaults."""
    ks = (1, 2, 3, 4) if k is None else (k,)
    if suite == "identities":
        return [c for kk in ks for c in check_identities(kk)]
    if suite == "wellposed":
        lv = (1, 2, 3) if levels is None else tuple(levels)
        return [c for kk in ks for c in check_wellposed(kk, lv, grid=grid, seed=seed,
                                                           magnitude=magnitude, tol=tol)]
    if suite == "error-equation":
        lv = 3 if levels is None else tuple(levels)[-1]
        return check_error_equation(2 if k is None else k, lv, tol=tol)
    if suite == "lemmas":
        lv = (1, 2, 3) if levels is None else tuple(levels)
        return check_norm_equivalence((1, 2) if k is None else (k,), lv)
    if suite == "patches":
        return [c for kk in ks for c in check_patches(kk)]
    raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
