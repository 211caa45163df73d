"""Exception types shared across the package."""


class WalkDpError(ValueError):
    """Base class for input and computation errors."""


class GraphValidationError(WalkDpError):
    """Graph or transition matrix violates a structural requirement."""


class FormatError(WalkDpError):
    """Malformed external input (explicit matrix rows, config files)."""


class GridError(WalkDpError):
    """A discretization grid cannot satisfy the requested tail budget."""


class CalibrationError(WalkDpError):
    """A bisection target is unreachable inside the given bracket."""


class UnsupportedOrderError(WalkDpError):
    """The RDP integral diverges at the requested order."""
