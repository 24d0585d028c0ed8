"""Model problems -div(a grad u) = f in the unit square, u = g on the boundary."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import CoefficientError

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


def check_coefficient(a) -> np.ndarray:
    """Return ``a`` as a symmetric positive definite 2x2 array or raise."""
    a = np.array(a, dtype=float)
    if a.shape != (2, 2):
        raise CoefficientError(f"coefficient must be 2x2, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise CoefficientError("coefficient has non-finite entries")
    if abs(a[0, 1] - a[1, 0]) > 1e-14 * np.abs(a).max():
        raise CoefficientError("coefficient matrix is not symmetric")
    a = 0.5 * (a + a.T)
    eig = np.linalg.eigvalsh(a)
    if not eig[0] > 0:
        raise CoefficientError(f"coefficient is not elliptic (eigenvalues {eig})")
    return a


@dataclass(frozen=True)
class ProblemSpec:
    """Constant symmetric coefficient, data and (optionally) exact solution.

    ``grad_u`` returns an array with a trailing axis of length 2.  ``lam1``
    and ``lam2`` bound the spectrum of ``a`` from below and above.
    """

    name: str
    a: np.ndarray
    f: Field
    g: Field
    u: Field | None = None
    grad_u: Field | None = None
    lam1: float | None = None
    lam2: float | None = None

    def __post_init__(self):
        a = check_coefficient(self.a)
        eig = np.linalg.eigvalsh(a)
        lam1 = eig[0] if self.lam1 is None else self.lam1
        lam2 = eig[1] if self.lam2 is None else self.lam2
        tol = 1e-12 * eig[1]
        if not (0 < lam1 <= eig[0] + tol and eig[1] <= lam2 + tol):
            raise CoefficientError(
                f"eigenvalues {eig} not within the stated bounds [{lam1}, {lam2}]"
            )
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "lam1", float(lam1))
        object.__setattr__(self, "lam2", float(lam2))

    @property
    def has_exact(self) -> bool:
        return self.u is not None

    def with_data(self, f: Field | None = None, g: Field | None = None) -> "ProblemSpec":
        """Copy with replaced data; the exact solution is dropped."""
        return replace(
            self,
            f=self.f if f is None else f,
            g=self.g if g is None else g,
            u=None,
            grad_u=None,
            name=self.name + "*",
        )


def zero(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def constant(value: float) -> Field:
    def c(x, y):
        return np.full(np.broadcast(x, y).shape, float(value))

    return c


def _example1():
    pi = np.pi

    def u(x, y):
        return np.sin(x) * np.sin(pi * y)

    def grad_u(x, y):
        return np.stack([np.cos(x) * np.sin(pi * y), pi * np.sin(x) * np.cos(pi * y)], axis=-1)

    def f(x, y):
        return (1.0 + pi**2) * np.sin(x) * np.sin(pi * y)

    return ProblemSpec("example1", np.eye(2), f, u, u, grad_u, 1.0, 1.0)


def _example2():
    def u(x, y):
        return x**5 * y**2

    def grad_u(x, y):
        return np.stack([5 * x**4 * y**2, 2 * x**5 * y], axis=-1)

    def f(x, y):
        return -(40 * x**3 * y**2 + 20 * x**4 * y + 6 * x**5)

    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    s5 = np.sqrt(5.0)
    return ProblemSpec("example2", a, f, u, u, grad_u, (5 - s5) / 2, (5 + s5) / 2)


def _example3():
    pi = np.pi

    def u(x, y):
        return np.exp(pi * x) * np.sin(pi * y)

    def grad_u(x, y):
        e = np.exp(pi * x)
        return np.stack([pi * e * np.sin(pi * y), pi * e * np.cos(pi * y)], axis=-1)

    return ProblemSpec("example3", np.eye(2), zero, u, u, grad_u, 1.0, 1.0)


PROBLEMS = {
    "example1": _example1,
    "example2": _example2,
    "example3": _example3,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
