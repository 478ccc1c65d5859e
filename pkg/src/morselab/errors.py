"""Exception hierarchy shared by every morselab module."""

from __future__ import annotations


class MorseLabError(Exception):
    """Base class for all morselab failures."""


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

class GeometryError(MorseLabError, ValueError):
    pass


class LiftOutOfRange(GeometryError):
    """A point is too far from the lift anchor for an isometric lift."""


class DegenerateConfiguration(GeometryError):
    """Affinely dependent points, boundary ambiguity or a facet tie.

    These events have probability zero for Poisson input; trials that hit one
    are resampled.
    """


class AmbiguousBoundary(DegenerateConfiguration):
    pass


class FacetTie(DegenerateConfiguration):
    def __init__(self, message: str, phi: float | None = None) -> None:
        super().__init__(message)
        self.phi = phi


class ParameterOutOfRange(GeometryError):
    pass


class RadiusTooLarge(MorseLabError, ValueError):
    """Query radius beyond the reach of the periodic grid."""


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

class ConfigError(MorseLabError, ValueError):
    pass


class RadiusExceedsRmax(ConfigError):
    pass


class NotCovered(MorseLabError):
    """The balls never cover the torus below the filtration cap."""


class InsufficientSamples(MorseLabError, ValueError):
    pass


class RejectionRateExceeded(MorseLabError):
    def __init__(self, message: str, diagnostics_path: str | None = None) -> None:
        super().__init__(message)
        self.diagnostics_path = diagnostics_path


class ReportIOError(MorseLabError, OSError):
    pass
