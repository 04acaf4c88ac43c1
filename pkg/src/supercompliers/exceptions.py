"""Exception hierarchy; the CLI maps each class to a distinct exit code."""


class SupercomplierError(Exception):
    """Base class for all package errors."""


class ConfigError(SupercomplierError, ValueError):
    """A config file or command-line option is malformed."""


class DataValidationError(SupercomplierError, ValueError):
    """Input data violate the table invariants."""


class EstimationError(SupercomplierError, ArithmeticError):
    """An estimator cannot produce a finite answer on this sample."""


class RankDeficiencyError(EstimationError):
    def __init__(self, message: str, columns: list[str] | None = None):
        super().__init__(message)
        self.columns = list(columns or [])


class WeakFirstStageError(EstimationError):
    """Zero or numerically negligible first stage; ``statistic`` is its robust F."""

    def __init__(self, message: str, statistic: float = 0.0):
        super().__init__(message)
        self.statistic = statistic


class InequalityViolation(SupercomplierError, ValueError):
    """An observed distribution violates the sharp testable inequalities.

    ``inequality`` names the first violated inequality; ``violated`` lists all.
    """

    def __init__(self, message: str, violated: list[str]):
        super().__init__(message)
        self.violated = list(violated)
        self.inequality = self.violated[0]
