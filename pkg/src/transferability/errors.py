"""Exception hierarchy shared by all modules."""


class TransferabilityError(ValueError):
    """Base class for every error raised by this package."""


class DataError(TransferabilityError):
    """A feature, label or truth file failed to parse or validate."""


class DegenerateInputError(TransferabilityError):
    """The input is valid data but the requested quantity is undefined on it."""


class ConfigError(TransferabilityError):
    """A benchmark or method configuration is invalid."""
