"""Exception hierarchy. Each CLI-visible class carries its process exit code."""


class CopregError(Exception):
    exit_code = 1


class ConfigError(CopregError):
    exit_code = 2


class DataError(CopregError):
    exit_code = 3


class NumericalError(CopregError):
    exit_code = 4


class DomainError(CopregError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ValidationError(CopregError, ValueError):
    """Model parameter outside its admissible region."""


class DegenerateIntervalError(NumericalError):
    """Truncation interval carries (numerically) zero normal mass."""


class NotPositiveDefiniteError(NumericalError):
    pass


class UnsupportedStructureError(CopregError, ValueError):
    """Engine cannot handle the requested correlation structure."""
