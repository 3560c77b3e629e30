from __future__ import annotations


class ScatterError(Exception):
    """Base error. `exit_code` is what the CLI exits with."""

    exit_code = 1


class ConfigError(ScatterError, ValueError):
    """Bad input: malformed potential, momentum at a branch point, wrong partition."""

    exit_code = 2


class NumericalError(ScatterError, RuntimeError):
    """Singular matching, ill-conditioned Nyström system, extrapolation that does not settle."""

    exit_code = 3

    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition


class InvariantViolation(ScatterError):
    exit_code = 4

    def __init__(self, message: str, name: str = "", residual: float | None = None):
        super().__init__(message)
        self.name = name
        self.residual = residual
