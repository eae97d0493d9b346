"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or configuration (bad STFT setup, bad gamma, ...)."""


class DimensionError(ValueError):
    """Array shapes that do not line up."""


class DegenerateInputError(ValueError):
    """Input that makes the requested quantity undefined (silent source, zero matrix)."""


class NumericError(ArithmeticError):
    """Non-finite values encountered during a computation.

    ``layer`` holds the 1-based layer index where the problem was detected,
    or ``None`` when it occurred outside the network (e.g. in the loss).
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class FormatError(ValueError):
    """Malformed, truncated, corrupt or incompatible binary container."""
