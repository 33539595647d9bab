"""Exception types shared across the package."""


class KimflowError(Exception):
    """Base class for all package errors."""


class DomainError(KimflowError, ValueError):
    """Input outside the domain of an operation (non-finite point, bad time, ...)."""


class ConstructionError(KimflowError, ValueError):
    """Invalid measure / profile parameters, raised at construction time."""


class UnsupportedOperation(KimflowError, NotImplementedError):
    """Operation not defined for the given family."""


class IntegrationDiverged(KimflowError, RuntimeError):
    def __init__(self, time: float, index: int | None = None):
        self.time = time
        self.index = index
        where = f" (point {index})" if index is not None else ""
        super().__init__(f"non-finite state at t={time:.6g}{where}")


class QuadratureError(KimflowError, RuntimeError):
    """Grid refinement did not reach the requested tolerance."""


class ConfigError(KimflowError, ValueError):
    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        loc = ""
        if source is not None:
            loc = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(loc + message)


class RefusedExperiment(KimflowError):
    """The requested check is not meaningful for this target pair."""
