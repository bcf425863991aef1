"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` used by the command line front end:
2 for configuration problems, 3 for data problems, 4 for numeric failures.
"""


class HCRError(Exception):
    exit_code = 4


class ConfigError(HCRError):
    exit_code = 2


class DataError(HCRError):
    exit_code = 3


class DomainError(DataError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InsufficientDataError(DataError):
    pass


class AlignmentError(DataError):
    pass


class DegenerateScaleError(DataError):
    """Sample has zero spread, so no scale parameter can be estimated."""


class DegreeUnsupportedError(ConfigError, ValueError):
    pass


class ShapeError(HCRError, ValueError):
    pass


class ContractError(HCRError, ValueError):
    """Input violates a precondition that the caller is responsible for."""


class RankError(HCRError, ValueError):
    pass


class DegenerateContextError(HCRError):
    """Conditioning context has nonpositive modelled mass (b_0 <= 0)."""

    def __init__(self, message, b0=None):
        super().__init__(message)
        self.b0 = b0


class FitFailureError(HCRError):
    """Optimizer failed; ``best`` holds the best parameters found so far."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
