"""Exception hierarchy shared by every lightmotion module."""


class LightMotionError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(LightMotionError, ValueError):
    """An argument is outside its documented range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ShapeError(LightMotionError, ValueError):
    def __init__(self, expected, got, what="array"):
        self.expected = tuple(expected)
        self.got = tuple(got)
        super().__init__(f"{what} shape mismatch: expected {self.expected}, got {self.got}")


class OrderingError(LightMotionError, ValueError):
    pass


class NumericError(LightMotionError, ArithmeticError):
    pass


class DomainError(LightMotionError, ZeroDivisionError):
    """A formula was evaluated where it divides by zero (e.g. alpha_bar == 1)."""


class FormatError(LightMotionError, ValueError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class DegenerateProjectionError(LightMotionError, ValueError):
    def __init__(self, gamma_deg, message="projection denominator vanishes"):
        self.gamma = gamma_deg
        super().__init__(f"{message} for gamma={gamma_deg:.6g} deg; |gamma| too large for the focal length")


class UnfillableFrameError(LightMotionError, RuntimeError):
    def __init__(self, frame):
        self.frame = frame
        super().__init__(f"frame {frame}: new-perspective region covers the whole frame, nothing to sample from")


class ConfigError(LightMotionError, ValueError):
    pass


class StageError(LightMotionError, RuntimeError):
    """Runtime failure annotated with the pipeline stage it happened in."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
