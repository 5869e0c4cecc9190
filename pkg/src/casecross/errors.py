"""Exception hierarchy.

``DataError`` subclasses signal bad input (CLI exit 2); ``NumericalError``
subclasses signal a fit or Monte-Carlo procedure that could not produce a
usable answer (CLI exit 3).
"""


class CaseCrossError(Exception):
    """Base class for all package errors."""


class DataError(CaseCrossError, ValueError):
    pass


class NumericalError(CaseCrossError, ArithmeticError):
    pass


class DuplicateDateError(DataError):
    def __init__(self, date):
        super().__init__(f"duplicate date {date.isoformat()}")
        self.date = date


class OutOfPeriodError(DataError):
    def __init__(self, date, start, end):
        super().__init__(
            f"date {date.isoformat()} outside study period "
            f"{start.isoformat()}..{end.isoformat()}"
        )
        self.date = date


class ParseError(DataError):
    pass


class DegenerateScaleError(DataError):
    pass


class UndefinedBlockError(DataError):
    def __init__(self, kind, label):
        super().__init__(f"{kind} block {label} has no observed days")
        self.kind = kind
        self.label = label


class EmptyTableError(DataError):
    pass


class AllMissingError(DataError):
    pass


class CollinearityError(NumericalError):
    def __init__(self, columns):
        super().__init__(
            "design matrix is rank deficient; linearly dependent column(s): "
            + ", ".join(columns)
        )
        self.columns = list(columns)


class SeparationError(NumericalError):
    pass


class DegenerateInferenceError(NumericalError):
    pass


class NoReferenceError(NumericalError):
    pass


class CalibrationUnstableError(NumericalError):
    pass


class ScenarioUnstableError(NumericalError):
    pass


class WeightOverflowError(NumericalError):
    pass
