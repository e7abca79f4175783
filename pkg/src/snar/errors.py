"""Exception and warning types shared across the package."""


class SnarError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SnarError, ValueError):
    """An argument is outside its mathematically valid domain."""


class OptimizationError(SnarError, RuntimeError):
    """No optimizer start satisfied the convergence criteria."""


class SingularMatrixError(SnarError, RuntimeError):
    """A matrix that must be inverted is numerically singular."""


class DegenerateError(SnarError, ValueError):
    """The input is degenerate (e.g. constant series, too few points)."""


class InsufficientEventsError(SnarError, RuntimeError):
    """Too few conditioning events occurred in a Monte Carlo check."""


class StudyError(SnarError, RuntimeError):
    """A replication study had too many per-replication failures."""


class ParseError(SnarError, ValueError):
    """A data file could not be parsed; the message cites the row."""


class MissingColumnError(SnarError, KeyError):
    """A required column is absent from the input file."""


class BoundaryWarning(UserWarning):
    """An estimate landed on (or next to) a parameter-space bound."""
