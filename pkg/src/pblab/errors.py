"""Exception hierarchy shared by all pblab modules."""


class PbLabError(Exception):
    """Base class for all pblab errors."""


class InvalidGrid(PbLabError):
    """Grid constructor arguments are out of range."""


class GridMismatch(PbLabError):
    """Two fields (or a field and a mask) live on different grids."""


class PoleSingularity(PbLabError):
    """A sphere field is not constant on a pole-adjacent row."""


class NotEnclosable(PbLabError):
    """No complement component has area above half the surface area."""


class RequiresConnected(PbLabError):
    """Operation needs a connected mask; split into components first."""


class UncoveredInterior(PbLabError):
    """Some node is too close to the boundary of every covering set."""


class UnderResolved(PbLabError):
    """Grid resolution is too coarse for the requested construction."""


class DeltaTooLarge(PbLabError):
    """Relaxation parameter violates 2*N*delta < 1."""


class DegenerateLevel(PbLabError):
    """A level could not be nudged away from node values."""


class GenericityFailure(PbLabError):
    """Curve configuration is degenerate (tangency, vertex-on-curve, overlap)."""


class HypothesisViolation(PbLabError):
    """Input violates a theorem hypothesis; the offender is named in args."""


class RankAmbiguous(PbLabError):
    """Numerical rank of a span is ambiguous at the tolerance."""


class CoverageUncertified(PbLabError):
    """Cone cover construction hit its cap before certifying coverage."""


class RequiresSpanning(PbLabError):
    """Vector set must span the ambient symplectic space."""


class ConfigError(PbLabError):
    """Experiment configuration violates the schema."""
