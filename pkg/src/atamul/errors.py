"""Exception types shared across the package."""


class AtamulError(Exception):
    """Base class for all atamul errors."""


class ShapeMismatchError(AtamulError, ValueError):
    """Operand dimensions are incompatible ("shape mismatch")."""


class UnsplittableError(AtamulError, ValueError):
    """A block split would produce an empty sub-block ("unsplittable")."""


class WorkspaceUndersizedError(AtamulError, ValueError):
    """A scratch workspace is too small for the requested call ("workspace undersized")."""


class UnknownProcessError(AtamulError, KeyError):
    """A process id is outside the task tree ("unknown process")."""


class UnsupportedSizeError(AtamulError, ValueError):
    """A count oracle was asked for a size it is not defined on ("unsupported size")."""


class ProtocolError(AtamulError, RuntimeError):
    """The message-passing simulation deadlocked or misbehaved ("protocol error")."""


class InvalidMeasurementError(AtamulError, ValueError):
    """A timing value is unusable ("invalid measurement")."""


class TooManyWorkersError(AtamulError, ValueError):
    """More workers requested than the executor allows ("too many workers")."""
