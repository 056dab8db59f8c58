"""Exception types raised by the simulation library."""


class ReflectSimError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(ReflectSimError, ValueError):
    pass


class UnsupportedOperationError(ReflectSimError):
    """Operation not defined for the given domain variant (e.g. projection onto a non-convex set)."""


class NotOnBoundaryError(ReflectSimError, ValueError):
    pass


class SubstepTooCoarseError(ReflectSimError):
    """A boundary correction was requested for a point too far outside a non-convex domain."""


class ConfigurationError(ReflectSimError, ValueError):
    pass
