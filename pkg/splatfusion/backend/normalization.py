"""Depth/translation normalization that conditions global bundle adjustment."""

import logging
from dataclasses import dataclass

import numpy as np

from splatfusion.errors import InvalidDepthError, NotNormalizedError
from splatfusion.geometry import Pose
from splatfusion.tracking.graph import FactorGraph

logger = logging.getLogger(__name__)


@dataclass
class NormalizationState:
    """Mean inverse depth used to normalize a graph, and whether it is in effect."""

    mean_inv_depth: float
    applied: bool = False


def _rescale(graph: FactorGraph, factor: float) -> None:
    """inv_depth /= factor, translation *= factor, prior (scale, shift) /= factor."""
    for kf in graph.vertices.values():
        kf.inv_depth = kf.inv_depth / factor
        kf.pose = Pose(kf.pose.rotation, kf.pose.translation * factor)
        kf.scale = kf.scale / factor
        kf.shift = kf.shift / factor


def normalize_for_ba(graph: FactorGraph) -> NormalizationState:
    """
    Scale the graph so the mean inverse depth over all keyframes is 1.

    Reprojection residuals are unchanged: every source point and every
    translation scale by the same mean inverse depth.

    Raises:
        InvalidDepthError: a non-positive or non-finite inverse depth
    """
    if not graph.vertices:
        return NormalizationState(1.0, applied=True)
    values = np.concatenate([kf.inv_depth.ravel() for kf in graph.vertices.values()])
    if not np.all(np.isfinite(values) & (values > 0)):
        raise InvalidDepthError("normalize_for_ba requires positive, finite inverse depths")
    mean = float(np.mean(values))
    _rescale(graph, mean)
    logger.debug(f"Normalized graph by mean inverse depth {mean:.6f}")
    return NormalizationState(mean, applied=True)


def denormalize(graph: FactorGraph, state: NormalizationState) -> FactorGraph:
    """Undo normalize_for_ba; the state is marked as no longer applied."""
    if not state.applied:
        raise NotNormalizedError("Graph is not normalized (denormalize called twice?)")
    _rescale(graph, 1.0 / state.mean_inv_depth)
    state.applied = False
    return graph
