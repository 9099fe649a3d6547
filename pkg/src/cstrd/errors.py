"""Exception hierarchy shared by every cstrd module."""


class CSTRDError(Exception):
    """Base class for all errors raised by cstrd."""


class InputError(CSTRDError, ValueError):
    """Bad user input: malformed files, inconsistent arguments."""


# annotation io
class IOFailure(CSTRDError, OSError):
    pass


class MissingShapesKey(InputError):
    pass


class MalformedPoint(InputError):
    pass


class DegenerateRing(InputError):
    pass


class DuplicateName(InputError):
    pass


class MalformedRow(InputError):
    pass


# raster
class DecodeFailure(InputError):
    pass


class UnsupportedFormat(InputError):
    pass


class DimensionMismatch(InputError):
    pass


# edges / geometry
class ImageTooSmall(InputError):
    pass


class BadRayCount(InputError):
    pass


class MissingSupportNode(CSTRDError):
    """The support chain has no node on a ray the criterion needs."""


class ChainTooShort(CSTRDError):
    """Not enough nodes to take a centered derivative."""


# evaluation
class CenterOutsidePolygon(InputError):
    pass


class CrossingGTRings(InputError):
    pass


class UndefinedScore(CSTRDError):
    pass


class RingCountMismatch(InputError):
    pass


# measure
class NonNestedRings(InputError):
    pass


class RingMissesRay(InputError):
    pass


class EmptyData(InputError):
    pass


class AllZeroPx(InputError):
    pass
