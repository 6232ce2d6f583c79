"""Exception types shared across the package."""


class SmashlabError(Exception):
    """Base class for all package errors."""


class ConfigError(SmashlabError):
    """Invalid configuration, scene, or parameter combination."""


class GridMismatchError(SmashlabError):
    """Two grid-valued objects do not live on the same grid."""


class OutOfBoxError(SmashlabError):
    """A shape, dilation, or isometry image does not fit the grid box."""


class BoundaryContactError(SmashlabError):
    """Mass reached the grid boundary during stabilization; the box is too small."""


class NonConvergenceError(SmashlabError):
    """Stabilization did not reach the residual target within the sweep cap."""


class GridTooCoarseError(SmashlabError):
    """The grid cannot support the requested operation at its cell size."""
