"""Exception types shared across the toolkit."""


class Kp3dError(Exception):
    """Base class for all toolkit errors."""


class DegenerateGeometry(Kp3dError):
    """Triangulation or epipolar geometry is undefined for the given input."""


class CalibrationError(Kp3dError):
    """Calibration data is malformed or unsupported."""


class MissingAssociation(Kp3dError):
    """A keypoint has no associated object instance."""


class InvalidDepth(Kp3dError):
    """A keypoint depth value is nonpositive."""


class NoDepth(Kp3dError):
    """The depth map has no support around a detection."""


class ConfigError(Kp3dError):
    """Invalid configuration file or option."""
