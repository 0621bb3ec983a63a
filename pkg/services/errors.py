from typing import Optional


class AtomicityError(Exception):
    """Base class for every error raised by the toolkit"""


class PatternValidationError(AtomicityError):
    def __init__(self, message: str, index: Optional[int] = None, block: Optional[int] = None, slot: Optional[int] = None):
        self.index = index
        self.block = block
        self.slot = slot
        super().__init__(message)


class ScalarError(AtomicityError):
    pass


class CurveError(AtomicityError):
    pass


class PointNotOnCurveError(CurveError):
    pass


class DegenerateAdditionError(CurveError):
    """Raised for J = ±A in mixed addition, where the formula does not apply"""


class PointAtInfinityError(CurveError):
    pass


class TraceFormatError(AtomicityError):
    pass


class SegmentationError(AtomicityError):
    pass


class SynchronizationError(AtomicityError):
    pass


class AnalysisError(AtomicityError):
    pass
