"""Exception and warning types shared across the package."""


class LinshiftError(Exception):
    pass


class ConfigError(LinshiftError, ValueError):
    """Malformed configuration. ``path`` points at the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DataError(LinshiftError, ValueError):
    pass


class DomainError(LinshiftError, ValueError):
    """Argument outside the mathematical domain of a function."""


class RankDeficientError(DataError):
    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(message or f"design is rank deficient; dependent columns: {self.columns}")


class ConvergenceWarning(UserWarning):
    pass
