"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Arguments violate an operation's preconditions."""


class ConfigError(ValueError):
    """An experiment or data configuration is invalid.

    ``line`` is the 1-based line of the offending key in the source config
    file, when known.
    """

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line


class FormatError(ValueError):
    """A binary or text file does not follow its expected layout."""


class NumericalError(ArithmeticError):
    """Non-finite values appeared during a forward or backward pass."""
