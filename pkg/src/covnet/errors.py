"""Exception hierarchy shared by the covnet modules."""


class CovnetError(Exception):
    """Base class for all library errors."""


class InvalidInputError(CovnetError, ValueError):
    pass


class DegenerateSimplexError(CovnetError, ValueError):
    pass


class OutOfPlaneError(CovnetError, ValueError):
    """Query point lies off the affine hull of a planar simplex."""


class EmptySetError(CovnetError, ValueError):
    pass


class TargetFileError(CovnetError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyRegenerationError(CovnetError, ValueError):
    pass


class NetworkError(CovnetError, ValueError):
    """Graph cannot be organised into a valid layered network."""


class CyclicDependencyError(NetworkError):
    pass


class ArityError(NetworkError):
    pass


class DegenerateLeadersError(NetworkError):
    pass


class CorePlacementError(NetworkError):
    pass


class AssumptionViolation(CovnetError, ValueError):
    """A modelling assumption (target coverage, simplex rank) does not hold."""

    def __init__(self, message, agent=None):
        self.agent = agent
        super().__init__(message)


class IncompleteWeightsError(CovnetError, ValueError):
    pass


class ConstraintError(CovnetError, ValueError):
    pass


class ShapeError(CovnetError, ValueError):
    pass


class SimulationError(CovnetError, RuntimeError):
    def __init__(self, message, t=None):
        self.t = t
        if t is not None:
            message = f"t={t:.6f}s: {message}"
        super().__init__(message)


class DivergenceError(SimulationError):
    pass


class RuntimeDegeneracyError(SimulationError):
    pass


class SingularityError(CovnetError, ArithmeticError):
    pass


class ConfigError(CovnetError, ValueError):
    pass
