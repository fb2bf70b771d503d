"""Exception types shared across the package."""


class FscilError(Exception):
    """Base class for package-specific errors."""


class ShapeError(FscilError, ValueError):
    """Tensor dimensions do not compose."""


class StateError(FscilError, RuntimeError):
    """Operation invoked out of order (e.g. backward before forward)."""


class NumericError(FscilError, ArithmeticError):
    """Degenerate numeric input, such as a zero-norm feature vector."""


class ProtocolError(FscilError, ValueError):
    """Violation of the session protocol (class overlap, missing shots)."""


class ConfigError(FscilError, ValueError):
    """Invalid or inconsistent configuration."""


class FormatError(FscilError, ValueError):
    """Malformed checkpoint, store, or dataset file."""
