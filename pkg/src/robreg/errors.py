"""Exception and warning types raised across the package."""


class RobRegError(Exception):
    """Base class for all package errors."""


class DegenerateColumn(RobRegError):
    def __init__(self, column, name=None):
        self.column = column
        label = name if name is not None else f"column {column}"
        super().__init__(f"{label} has zero MAD; drop it before fitting")


class DimensionMismatch(RobRegError, ValueError):
    pass


class AlphaZero(RobRegError, ValueError):
    pass


class NonpositiveArgument(RobRegError, ValueError):
    pass


class IndefiniteSurrogate(RobRegError):
    pass


class BracketFailure(RobRegError):
    pass


class SingularDesign(RobRegError):
    pass


class SingularS(RobRegError):
    pass


class SingularGram(RobRegError):
    pass


class SingularPsi(RobRegError):
    pass


class AllResponsesZero(RobRegError):
    pass


class StudyError(RobRegError):
    pass


class ParseError(RobRegError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class InnerNoConvergence(RuntimeWarning):
    """Coordinate descent hit its sweep limit; the last iterate was returned."""


class NoConvergence(RuntimeWarning):
    """The outer loop hit max_outer_iters; the model is flagged converged=False."""


class SelectionFailure(RobRegError):
    """Every candidate on a lambda or alpha grid failed."""
