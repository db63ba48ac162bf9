"""Exception and warning types raised across the package."""


class PftsimError(Exception):
    """Base class for all package errors."""


class InvalidEmbedding(PftsimError):
    """Embedding fails validation (shape, orientation or spacelike links)."""


class NotSpacelike(InvalidEmbedding):
    """A link or site of an embedding is not strictly spacelike."""


class CurvedEmbedding(PftsimError):
    """An affine (flat) embedding was required."""


class DimensionMismatch(PftsimError, ValueError):
    """Operands live on lattices of different size."""


class SingularConformalMap(PftsimError):
    """The special conformal denominator vanishes on some site."""


class NonTimelikeDeformation(PftsimError):
    """A deformation between consecutive leaves has non-positive lapse."""


class MassiveField(PftsimError):
    """The anomaly potential is only defined for the massless field."""


class StepTooLarge(PftsimError):
    """The requested step exceeds the configured integrator limit."""


class LeafMismatch(PftsimError):
    """State and foliation (or propagator) refer to different hypersurfaces."""


class DeformationNotSpacelike(PftsimError):
    """A local deformation produced a non-spacelike hypersurface, or is degenerate."""


class FrameMismatch(PftsimError):
    """Two mode frames cannot be compared on the given hypersurface."""


class ModeOutOfRange(PftsimError, IndexError):
    """Mode index is not part of the retained set."""


class UnreachableEmbedding(PftsimError):
    """No valid propagator connects the anchor to the requested embedding."""


class ConfigError(PftsimError):
    """Invalid experiment configuration. ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class ExperimentError(PftsimError):
    """Wraps a module error raised while an experiment was running."""


class CanonicalViolation(UserWarning):
    """Bogoliubov canonical relations violated beyond tolerance."""


class MasslessZeroMode(UserWarning):
    """The massless periodic lattice has a zero mode that was projected out."""
