"""Exception types shared across the package."""


class VesselNetError(Exception):
    pass


class ParseError(VesselNetError, ValueError):
    """A trajectory or station file row could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(VesselNetError, ValueError):
    """Input data is well formed but inconsistent (conflicting rows, empty input)."""


class ParameterError(VesselNetError, ValueError):
    """Invalid configuration or parameter values."""
