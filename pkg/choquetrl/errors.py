"""Exception hierarchy shared by every choquetrl module."""


class ChoquetError(Exception):
    """Base class for all errors raised by choquetrl."""


class DomainError(ChoquetError, ValueError):
    """An argument lies outside the domain of the operation."""


class DiscontinuityError(DomainError):
    """Distortion and quantile function jump at a common interior level."""


class UnsupportedKindError(ChoquetError, TypeError):
    """The operation is not defined for this distortion or distribution kind."""


class DegenerateError(ChoquetError, ArithmeticError):
    """A norm or denominator vanished where a positive value is required."""


class NumericalError(ChoquetError, ArithmeticError):
    """NaN guard tripped or a discriminant came out negative."""


class ConfigError(ChoquetError, ValueError):
    """A run config or defaults file could not be parsed or validated."""


class WellPosednessError(DomainError):
    """LQ model parameters violate the solvability hypotheses."""

    def __init__(self, report):
        self.report = report
        failed = ", ".join(report.failed_flags())
        super().__init__(f"LQ model is not well posed (failed: {failed})")
