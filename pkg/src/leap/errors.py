"""Exception hierarchy shared across the package."""


class LeapError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LeapError):
    """Invalid configuration: bad value, unknown key, empty distribution."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericalError(LeapError):
    """Non-finite value encountered in a loss, gradient or parameter vector."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} at step {step}"
        super().__init__(message)


class DivergenceError(NumericalError):
    """Inner training blew up (loss above threshold or non-finite)."""


class UnsupportedError(LeapError):
    """Requested computation is outside the supported size or family."""
