"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class MuonLabError(Exception):
    exit_code = 1


class ConfigError(MuonLabError, ValueError):
    """Invalid configuration: unknown keys, bad enum strings, out-of-range values."""

    exit_code = 1


class ShapeError(MuonLabError, ValueError):
    exit_code = 1


class NumericalError(MuonLabError, ArithmeticError):
    """Non-finite intermediate values or an iteration that failed to converge."""

    exit_code = 2

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateInputError(NumericalError):
    """The polar factor of an exactly-zero matrix is undefined."""


class DataError(MuonLabError, OSError):
    exit_code = 3
