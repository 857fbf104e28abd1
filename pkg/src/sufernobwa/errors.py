"""Exception hierarchy. The class name doubles as the CLI error category."""


class SufernobwaError(Exception):
    """Base class for all package errors."""

    @property
    def category(self) -> str:
        return type(self).__name__


class NotFound(SufernobwaError, FileNotFoundError):
    pass


class UnsupportedFormat(SufernobwaError):
    pass


class IoError(SufernobwaError, OSError):
    pass


class InvalidChannels(SufernobwaError, ValueError):
    pass


class InvalidParameter(SufernobwaError, ValueError):
    pass


class ShapeMismatch(SufernobwaError, ValueError):
    pass


class NoSeeds(SufernobwaError, ValueError):
    pass


class IncompleteLabeling(SufernobwaError, ValueError):
    pass


class TooSmall(SufernobwaError, ValueError):
    pass


class ConfigError(SufernobwaError, ValueError):
    pass


class NumericalError(SufernobwaError, ArithmeticError):
    pass


class PairingError(SufernobwaError):
    pass


class EmptyDataset(SufernobwaError):
    pass
