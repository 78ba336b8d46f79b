"""Exception hierarchy shared by all solvers and file readers."""


class UOTError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(UOTError, ValueError):
    """Array shapes do not match the declared problem sizes."""


class DomainError(UOTError, ValueError):
    """An input lies outside the domain of a function (negative mass, NaN, lambda <= 0, ...)."""


class PreconditionError(UOTError, ValueError):
    """A solver precondition does not hold (e.g. unbalanced masses for a balanced solver)."""


class DegenerateError(UOTError, ArithmeticError):
    """An iterate or problem became degenerate (zero marginal, singular system)."""


class PathError(UOTError, RuntimeError):
    """Regularization path construction failed (cycling, persistent singularity)."""


class FormatError(UOTError, ValueError):
    """A problem, plan or path file is malformed or fails validation.

    Parameters
    ----------
    message : str
        Human readable description.
    field : str, optional
        Dotted name of the offending field, e.g. ``"a[3]"``.
    line : int, optional
        1-based line number in the file, when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
