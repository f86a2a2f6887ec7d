"""Exception types raised by the package."""


class ConfigurationError(ValueError):
    """Invalid model, sampler or experiment configuration."""


class NumericalError(FloatingPointError):
    """A non-finite quantity appeared where the algorithm needs a finite one.

    ``state`` carries a diagnostic dump of whatever the caller had at hand.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state or {}
