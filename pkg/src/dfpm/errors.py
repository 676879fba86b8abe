"""Exception types shared across the package.

The CLI maps these onto process exit codes: usage errors exit 1, data
errors exit 2, numerical failures exit 3.
"""


class UsageError(Exception):
    """Bad flags, malformed config values, or inconsistent options."""


class DataError(Exception):
    """Malformed or inconsistent input data (files, ids, dimensions)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(Exception):
    """A numerical routine hit a non-finite value or a singular system.

    ``point`` carries the offending iterate when a solver raised.
    """

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point
