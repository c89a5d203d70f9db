"""Exception hierarchy shared by the library and the command-line front end."""


class RotmixError(Exception):
    """Base class for all errors raised by rotmix."""


class DomainError(RotmixError, ValueError):
    """An argument falls outside the domain of a family or regularizer.

    ``predicate`` names the violated check (e.g. ``"data_domain"``).
    """

    def __init__(self, message, predicate=None):
        super().__init__(message)
        self.predicate = predicate


class DataError(RotmixError, ValueError):
    """Malformed observation file or dataset.

    ``row`` and ``column`` are 1-based positions in the source file when known.
    """

    def __init__(self, message, row=None, column=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.row = row
        self.column = column
        self.path = path


class ModelFormatError(RotmixError, ValueError):
    """A model document is unreadable or violates a model invariant."""


class DegenerateFitError(RotmixError):
    """The fit cannot proceed (all components pruned, too few distinct points, ...).

    ``trace`` holds the partial :class:`~rotmix.estimator.FitTrace` when available.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class SeedingError(DegenerateFitError):
    """Fewer distinct data points than requested components."""


class NonFiniteObjectiveError(RotmixError, FloatingPointError):
    """The objective became NaN or infinite during a fit."""

    def __init__(self, message, iteration=None, component=None, trace=None):
        super().__init__(message)
        self.iteration = iteration
        self.component = component
        self.trace = trace


class ClampWarning(UserWarning):
    """An expectation parameter was moved off the boundary of its domain."""
