"""Exception types raised across the package.

Every operation that can reject its input raises one of these instead of a
bare ValueError, so callers can catch failures by name.
"""


class Belief3DError(Exception):
    """Base class for all package errors."""


# -- scene belief -------------------------------------------------------------

class NonSymmetricCovariance(Belief3DError):
    pass


class OpacityOutOfRange(Belief3DError):
    pass


class EmptyObservation(Belief3DError):
    pass


class OriginMismatch(Belief3DError):
    pass


class NoValidOverlap(Belief3DError):
    pass


# -- diffusion ----------------------------------------------------------------

class TauOutOfRange(Belief3DError):
    pass


class ShapeMismatch(Belief3DError):
    pass


class EmptyPatchSet(Belief3DError):
    pass


class CenterOutOfBounds(Belief3DError):
    pass


# -- hypothesis sampling ------------------------------------------------------

class EmptyGrid(Belief3DError):
    pass


class UntrainedDenoiser(Belief3DError):
    pass


class InsufficientData(Belief3DError):
    pass


# -- semantics ----------------------------------------------------------------

class EmptyLabel(Belief3DError):
    pass


class ServiceUnavailable(Belief3DError):
    pass


# -- world simulation ---------------------------------------------------------

class GenerationFailed(Belief3DError):
    pass


class PoseOutOfBounds(Belief3DError):
    pass


class UnknownTarget(Belief3DError):
    pass


# -- planning -----------------------------------------------------------------

class NoFrontier(Belief3DError):
    pass


class EmptyResultSet(Belief3DError):
    pass


# -- benchmark ----------------------------------------------------------------

class VisibilityUnachievable(Belief3DError):
    pass


class TrajectoryNotClosed(Belief3DError):
    pass


# -- config / io --------------------------------------------------------------

class ParseError(Belief3DError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(Belief3DError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
