"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class GilsimError(Exception):
    code = "ERROR"


class InvalidGeometry(GilsimError, ValueError):
    code = "INVALID_GEOMETRY"


class MeshFailure(GilsimError):
    code = "MESH_FAILURE"


class NotFound(GilsimError, LookupError):
    code = "NOT_FOUND"


class NonFinite(GilsimError, FloatingPointError):
    code = "NON_FINITE"


class DomainError(GilsimError, ValueError):
    code = "DOMAIN_ERROR"


class OutOfRange(GilsimError, ValueError):
    code = "OUT_OF_RANGE"


class ConfigError(GilsimError, ValueError):
    code = "CONFIG_ERROR"


class SingularElement(GilsimError):
    code = "SINGULAR_ELEMENT"


class SolverFailure(GilsimError):
    code = "SOLVER_FAILURE"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NoConvergence(GilsimError):
    code = "NO_CONVERGENCE"

    def __init__(self, message, residual=None, partial=None):
        super().__init__(message)
        self.residual = residual
        # results accumulated before the failure, if any
        self.partial = partial


class InvalidFrequency(GilsimError, ValueError):
    code = "INVALID_FREQUENCY"


class FitFailure(GilsimError):
    code = "FIT_FAILURE"


class MeshMismatch(GilsimError, ValueError):
    code = "MESH_MISMATCH"


class OutOfDomain(GilsimError, ValueError):
    code = "OUT_OF_DOMAIN"


class EmptyRegion(GilsimError, ValueError):
    code = "EMPTY_REGION"


class ExportError(GilsimError, OSError):
    code = "IO_ERROR"
