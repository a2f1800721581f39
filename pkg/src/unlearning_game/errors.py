"""Exception hierarchy shared by every module of the package."""


class GameError(Exception):
    """Base class. ``code`` is a stable machine-readable tag."""

    code = "game_error"

    def __init__(self, message: str = "", field: str | None = None):
        super().__init__(message)
        self.field = field

    def as_record(self) -> dict:
        return {"code": self.code, "message": str(self), "field": self.field}


class InvalidParameter(GameError, ValueError):
    code = "invalid_parameter"


class NonIntegralSplit(InvalidParameter):
    code = "non_integral_split"


class DegenerateOracle(GameError):
    code = "degenerate_oracle"


class DimensionMismatch(GameError, ValueError):
    code = "dimension_mismatch"


class DivergedTraining(GameError, ArithmeticError):
    code = "diverged_training"


class UnsupportedModel(GameError, TypeError):
    code = "unsupported_model"


class DegenerateCalibration(GameError):
    code = "degenerate_calibration"


class NonOverlappingSplits(GameError):
    code = "non_overlapping_splits"


class QueryBudgetExceeded(GameError):
    code = "query_budget_exceeded"


class EnumerationTooLarge(GameError):
    code = "enumeration_too_large"


class MalformedIdx(GameError, ValueError):
    code = "malformed_idx"


class EmptySelection(GameError, ValueError):
    code = "empty_selection"


class ConfigError(GameError, ValueError):
    code = "config_error"
