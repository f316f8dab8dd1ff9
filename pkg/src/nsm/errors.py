"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
3 for malformed files, 4 for numeric or degenerate input.
"""


class NsmError(Exception):
    exit_code = 4


class InvalidDataset(NsmError, ValueError):
    pass


class DimMismatch(NsmError, ValueError):
    pass


class ZeroVector(NsmError, ValueError):
    pass


class KTooLarge(NsmError, ValueError):
    pass


class TooManyClusters(NsmError, ValueError):
    pass


class InvalidClustering(NsmError, ValueError):
    pass


class EmptySet(NsmError, ValueError):
    pass


class MissingRows(NsmError, ValueError):
    pass


class RadiusTooLarge(NsmError, ValueError):
    pass


class AllClustersEmpty(NsmError, ValueError):
    pass


class TooLarge(NsmError, ValueError):
    pass


class FewerThanTwoClusters(NsmError, ValueError):
    pass


class DegenerateDiameterZero(NsmError, ValueError):
    pass


class CoincidentCentroids(NsmError, ValueError):
    pass


class BadProbeCount(NsmError, ValueError):
    pass


class LengthMismatch(NsmError, ValueError):
    pass


class TooShort(NsmError, ValueError):
    pass


class UnknownMeasure(NsmError, KeyError):
    pass


class Empty(NsmError, ValueError):
    pass


class BadParams(NsmError, ValueError):
    pass


class FormatError(NsmError, ValueError):
    exit_code = 3


class TruncatedRecord(FormatError):
    pass


class InconsistentDim(FormatError):
    pass


class NonPositiveDim(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class NegativeId(FormatError):
    pass
