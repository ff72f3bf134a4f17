"""Exception hierarchy shared across the package."""


class FlowgroundError(Exception):
    """Base class for all package errors."""


class SizeMismatch(FlowgroundError):
    pass


class DegenerateGeometry(FlowgroundError):
    pass


class InsufficientKeypoints(FlowgroundError):
    def __init__(self, frame_index, message=None):
        self.frame_index = frame_index
        super().__init__(message or f"fewer than 3 valid keypoints at frame pair {frame_index}")


class NotARotation(FlowgroundError):
    pass


class DimensionMismatch(FlowgroundError):
    pass


class InsufficientPixels(FlowgroundError):
    pass


class DegenerateSample(FlowgroundError):
    pass


class CalibrationFailure(FlowgroundError):
    pass


class NoContactDetected(FlowgroundError):
    pass


class EmptyInitialMask(FlowgroundError):
    pass


class NoFingertipContact(FlowgroundError):
    pass


class NoMaskOverlap(FlowgroundError):
    pass


class DegenerateLandmarks(FlowgroundError):
    pass


class NoValidGrasp(FlowgroundError):
    pass


class EmptyCandidateSet(FlowgroundError):
    pass


class StepFailed(FlowgroundError):
    def __init__(self, step, reason):
        self.step = step
        self.reason = reason
        super().__init__(f"step {step} failed: {reason}")


class InterfaceError(FlowgroundError):
    """A pluggable model role returned garbage or timed out."""


class MissingInput(FlowgroundError):
    def __init__(self, path, message=None):
        self.path = str(path)
        super().__init__(message or f"required input missing: {path}")


class SpecInvalid(FlowgroundError):
    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"invalid bundle spec field: {field}")
