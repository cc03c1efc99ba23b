"""Exception hierarchy shared across the harness."""


class SkybenchError(Exception):
    """Base class for all harness errors."""


class ParseError(SkybenchError):
    """Raised when input bytes are not well-formed JSON or cannot be built into a record."""


class InvalidInput(SkybenchError):
    """Raised when a physics operation is called with out-of-contract arguments."""


class CalibrationError(SkybenchError):
    """Raised when network calibration targets are inconsistent or verification fails."""


class DegenerateInput(SkybenchError):
    """Raised when an efficiency metric is requested for zero timings or token counts."""


class ScenarioError(SkybenchError):
    """Raised when a scenario document is malformed."""
