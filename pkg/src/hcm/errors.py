"""Exception hierarchy shared by every part of the package."""


class HcmError(Exception):
    """Base class for all errors raised by :mod:`hcm`."""


class InvalidArgument(HcmError, ValueError):
    """An argument is outside its documented domain."""


class RegimeError(HcmError, ValueError):
    """Parameters fall outside the hybrid operating regime (``t_s < 1/N``)."""


class NumericError(HcmError, ArithmeticError):
    """A numerical integration or root search did not converge."""


class CalibrationError(HcmError):
    """Unity-gain calibration failed to bracket a root."""


class InsufficientData(HcmError):
    """Too few samples to form an estimate."""


class ConfigError(HcmError, ValueError):
    """A configuration document failed validation.

    ``field`` names the offending key path, e.g. ``filter.beta``.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
