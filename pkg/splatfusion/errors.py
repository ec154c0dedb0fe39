"""Exception hierarchy for geometric, optimization and pipeline failures."""

from typing import Optional


class SplatFusionError(Exception):
    """Base class for all package errors."""


class BehindCameraError(SplatFusionError, ValueError):
    """A point has non-positive depth in the camera it is projected into."""


class InvalidDepthError(SplatFusionError, ValueError):
    """An inverse depth is zero, negative or non-finite."""


class CutLocusError(SplatFusionError, ValueError):
    """Rotation angle too close to pi for a unique SE(3) logarithm."""


class RankDeficientError(SplatFusionError, ValueError):
    """Point configuration does not determine an alignment."""


class OptimizerStalledError(SplatFusionError, RuntimeError):
    """Damping exceeded its ceiling without producing an acceptable step."""


class NonFiniteLossError(SplatFusionError, RuntimeError):
    """Map loss or gradient became NaN/inf."""


class DanglingAnchorError(SplatFusionError, KeyError):
    """A pose update references a keyframe with no anchored Gaussians."""


class NotNormalizedError(SplatFusionError, RuntimeError):
    """Denormalization requested for a graph that is not normalized."""


class EmptyMaskError(SplatFusionError, ValueError):
    """A metric was requested over zero valid pixels."""


class ConfigError(SplatFusionError, ValueError):
    """Configuration value violates an invariant."""


class StageError(SplatFusionError, RuntimeError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str, cause: Optional[BaseException] = None):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {message}")
