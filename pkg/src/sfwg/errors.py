"""Exception hierarchy shared by the package."""


class WGError(Exception):
    """Base class for all errors raised by sfwg."""


class CapacityError(WGError):
    """Requested size or degree exceeds what the implementation supports."""


class MeshError(WGError):
    """A mesh could not be constructed or failed validation."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class MeshFormatError(MeshError):
    """Malformed mesh text file."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ConditioningError(WGError):
    """A Gram or block matrix is numerically singular."""


class DegreeMismatchError(WGError):
    """Weak function and operators were built for different degrees."""


class CoefficientError(WGError):
    """Coefficient tensor is not symmetric or not uniformly elliptic."""


class SolverError(WGError):
    """Iterative solver failed.

    ``flag`` is ``"breakdown"`` when a non-positive curvature p^T A p was met
    (the matrix is not SPD) and ``"maxit"`` when the iteration budget ran out.
    """

    def __init__(self, message, flag, report=None):
        super().__init__(message)
        self.flag = flag
        self.report = report
