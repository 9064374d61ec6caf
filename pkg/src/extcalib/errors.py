"""Exception hierarchy shared by all modules."""


class CalibrationError(Exception):
    """Base class for every error raised by extcalib."""


class PointBehindCamera(CalibrationError):
    pass


# the triangulation and BA code talks about "behind camera" without the noun
BehindCamera = PointBehindCamera


class NoConvergence(CalibrationError):
    pass


class DegenerateSample(CalibrationError):
    pass


class AmbiguousCheirality(CalibrationError):
    pass


class NoRealSolution(CalibrationError):
    pass


class NotEnoughMatches(CalibrationError):
    pass


class NoConsensus(CalibrationError):
    pass


class ParallelRays(CalibrationError):
    pass


class SingularNormalEquations(CalibrationError):
    pass


class InvalidProblem(CalibrationError):
    pass


class InitFailed(CalibrationError):
    pass


class RegistrationFailed(CalibrationError):
    pass


class ZeroVector(CalibrationError):
    pass


class DegenerateCloud(CalibrationError):
    pass


class DegenerateBaseline(CalibrationError):
    pass


class MissingGroundTruth(CalibrationError):
    pass


class ParseError(CalibrationError):
    pass


class DimensionMismatch(ParseError):
    pass
