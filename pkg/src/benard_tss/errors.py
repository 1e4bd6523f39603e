"""Exception hierarchy shared by all modules."""


class BenardError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(BenardError, ValueError):
    pass


class NonPositiveField(ParameterError):
    pass


class BadTemperatureOrder(ParameterError):
    pass


class GammaTooSmall(ParameterError):
    pass


class EpsilonTooLarge(ParameterError):
    pass


class StripUnderresolved(BenardError):
    pass


class ResolutionTooLow(BenardError):
    pass


class SkewSymmetryViolation(BenardError):
    pass


class QuadratureFailure(BenardError):
    pass


class DimensionMismatch(BenardError, ValueError):
    pass


class SolverFailure(BenardError):
    pass


class NonFiniteState(BenardError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")

    def __reduce__(self):
        return (type(self), (self.step, str(self)))


class TimeOffGrid(BenardError, ValueError):
    pass


class BadModeCount(BenardError, ValueError):
    pass


class EmptyCover(BenardError):
    pass


class UnboundedF(BenardError, ValueError):
    pass


class UncoveredAtoms(BenardError):
    pass


class InvalidMeasure(BenardError, ValueError):
    pass


class ConfigError(BenardError, ValueError):
    pass


class CacheError(BenardError):
    pass


class AtomIntegrationError(BenardError):
    """Integrator failure for one atom of a lifted measure."""

    def __init__(self, atom, cause):
        self.atom = atom
        self.cause = cause
        super().__init__(f"atom {atom}: {cause}")

    def __reduce__(self):
        return (type(self), (self.atom, self.cause))
