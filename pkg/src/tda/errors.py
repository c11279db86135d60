"""Exception hierarchy shared across the package."""


class TdaError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TdaError):
    """A config value is missing, malformed, or out of range."""


class ShapeError(TdaError):
    """An array argument does not match the expected dimensions."""


class ContractError(TdaError):
    """A caller violated a documented precondition."""


class TrainingDivergedError(TdaError):
    """A loss became non-finite during training."""


class DetectorTransportError(TdaError):
    """The detection endpoint could not be reached (retriable)."""


class DetectorProtocolError(TdaError):
    """The detection endpoint answered with a malformed response."""
