"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration or distribution parameters."""


class InvariantViolation(RuntimeError):
    """A state that the channel/protocol contracts rule out was observed."""


class ParseError(ValueError):
    """Malformed persisted data. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
