"""Exception hierarchy shared by all semimax modules."""


class SemimaxError(Exception):
    """Base class for every error raised by this package."""


class DegenerateDirectionError(SemimaxError, ValueError):
    """Wave vector below the k-floor; the propagation frame is undefined."""


class MediumError(SemimaxError, ValueError):
    """Coefficient field is non-positive or non-finite at a requested point."""


class WindowError(SemimaxError, ValueError):
    """Wigner window does not fit in the grid, or resolution is inadequate."""


class GridError(SemimaxError, ValueError):
    """Grids are incompatible, non-periodic where required, or malformed."""


class SymbolError(SemimaxError, ValueError):
    """Symbol evaluation produced NaN or lacks a required gradient."""


class EvanescentError(SemimaxError, ValueError):
    """Tangential wave vector lies outside the hyperbolic region |k'| < w/v."""


class EventLocationError(SemimaxError, RuntimeError):
    """Bisection could not pin a boundary crossing to the requested tolerance."""


class EmptyEnsembleError(SemimaxError, ValueError):
    """A ray ensemble with no rays was handed to an operation that needs mass."""


class ConfigError(SemimaxError, ValueError):
    """Scenario configuration failed validation."""
