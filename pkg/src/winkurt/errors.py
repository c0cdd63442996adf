class WinkurtError(Exception):
    """Base class for library errors."""


class InvalidParameter(WinkurtError, ValueError):
    pass


class InvalidInput(WinkurtError, ValueError):
    pass


class Infeasible(WinkurtError, ValueError):
    pass


class InvalidCodeword(WinkurtError, ValueError):
    pass


class ConfigError(WinkurtError, ValueError):
    """Raised for malformed or inconsistent experiment configuration."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class CalibrationFailed(WinkurtError, RuntimeError):
    pass
