"""Exception hierarchy shared by all modules."""


class MeasureMorphError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameter(MeasureMorphError, ValueError):
    pass


class DomainMismatch(MeasureMorphError, ValueError):
    """Range of an inner map does not fit the domain of the outer map."""


class OutOfDomain(MeasureMorphError, ValueError):
    pass


class OutOfRange(MeasureMorphError, ValueError):
    pass


class NoConvergence(MeasureMorphError, RuntimeError):
    pass


class StepTooSmall(MeasureMorphError, ValueError):
    pass


class GridMismatch(MeasureMorphError, ValueError):
    """Path was not sampled on the grid an operation requires."""


class SingularMatrix(MeasureMorphError, ArithmeticError):
    pass


class UnsupportedFunctional(MeasureMorphError, ValueError):
    pass


class ZeroWaveNumber(MeasureMorphError, ValueError):
    """sigma(k) diverges at k = 0."""
