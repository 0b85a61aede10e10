"""Exception types shared across the package."""


class LabError(Exception):
    """Base class for all errors raised by eigenlab operations."""


class MeshTooCoarse(LabError):
    """A builder was asked for a resolution too small to form a valid complex."""


class InvalidGeometry(LabError):
    """A metric or volume input is degenerate (non-SPD cell matrix, vol <= 0, ...)."""


class UnsupportedDimension(LabError):
    """Requested dimension outside the supported range."""


class InvalidGluing(LabError):
    """Vertex identifications do not produce a closed connected simplicial complex."""


class MetricNotPhiInvariant(LabError):
    """The fiber metric is not preserved by the gluing automorphism."""


class DegenerateConformalFactor(LabError):
    """A conformal factor is zero or negative on some cell."""


class UnsupportedTopology(LabError):
    """The mesh does not expose the circle generators needed for the operation."""


class ClassMismatch(LabError):
    """Two circle maps do not share the same winding class."""


class NoConvergence(LabError):
    """The minimizer hit its iteration cap before reaching tolerance.

    Carries the partial solve report in ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotAProduct(LabError):
    """The operation needs product bookkeeping (fiber slicing) the mesh lacks."""


class DegreeIllConditioned(LabError):
    """A mapping degree did not round cleanly to an integer."""

    def __init__(self, message, raw=None, defect=None):
        super().__init__(message)
        self.raw = raw
        self.defect = defect


class DegenerateDensity(LabError):
    """The map's density drops below the rescaling threshold on some cell."""

    def __init__(self, message, cell=None, value=None):
        super().__init__(message)
        self.cell = cell
        self.value = value


class EigensolverFailure(LabError):
    """The sparse eigensolver stagnated and no fallback succeeded."""


class SpectrumTooShallow(LabError):
    """The computed spectrum does not bracket the candidate eigenvalue."""


class ConfigError(LabError):
    """An experiment configuration file is malformed (usage error, exit code 2)."""
