"""Global bundle adjustment and the backend pass that wraps it."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from splatfusion.backend.loop_closure import (
    LoopEdgeProvider,
    add_loop_edges,
    detect_loop_closures,
    local_ba,
)
from splatfusion.backend.normalization import NormalizationState, denormalize, normalize_for_ba
from splatfusion.config import LoopClosureConfig, TrackingConfig
from splatfusion.errors import NotNormalizedError
from splatfusion.geometry import Pose
from splatfusion.tracking.graph import FactorGraph
from splatfusion.tracking.solver import SolveSummary, optimize_keyframes

logger = logging.getLogger(__name__)

PoseUpdates = Dict[int, Tuple[Pose, Pose]]

CHANGE_THRESHOLD = 1e-8


def changed_poses(
    old: Dict[int, Pose], new: Dict[int, Pose], threshold: float = CHANGE_THRESHOLD
) -> PoseUpdates:
    """(old, new) pairs for keyframes whose pose matrix moved by more than threshold."""
    updates: PoseUpdates = {}
    for k, before in old.items():
        after = new.get(k)
        if after is None:
            continue
        if np.max(np.abs(after.as_matrix() - before.as_matrix())) > threshold:
            updates[k] = (before, after)
    return updates


@dataclass
class GlobalBAResult:
    summary: SolveSummary
    updates: PoseUpdates


def global_ba(
    graph: FactorGraph,
    config: TrackingConfig,
    state: NormalizationState,
    max_iters: Optional[int] = None,
) -> GlobalBAResult:
    """
    Bundle-adjust every pose and inverse depth over all odometry and loop edges.

    The first keyframe is the gauge and stays bit-identical; the mean inverse
    depth is held. Updates list keyframes whose pose changed by more than 1e-8.

    Args:
        graph: Normalized factor graph (updated in place)
        config: Solver settings
        state: Normalization state returned by normalize_for_ba; must be applied
        max_iters: Override config.gn_iters

    Raises:
        ValueError: the graph has no edges
        NotNormalizedError: the normalization is not applied
        OptimizerStalledError: damping ceiling exceeded
    """
    if not state.applied:
        raise NotNormalizedError("global_ba expects a normalized graph")
    if not graph.edges:
        raise ValueError("global_ba needs at least one edge")
    before = graph.poses()
    gauge = graph.order[0]
    summary = optimize_keyframes(
        graph,
        graph.order,
        {gauge},
        config,
        edges=graph.edges,
        hold_scale=True,
        max_iters=max_iters,
        label="global_ba",
    )
    updates = changed_poses(before, graph.poses())
    logger.info(
        f"Global BA over {len(graph)} keyframes / {len(graph.edges)} edges: "
        f"cost {summary.initial_cost:.4e} -> {summary.final_cost:.4e}, "
        f"{len(updates)} poses changed"
    )
    return GlobalBAResult(summary, updates)


@dataclass
class BackendResult:
    """One backend pass: loop pairs, local and global solves, metric pose updates."""

    loops: List[Tuple[int, int]] = field(default_factory=list)
    local_summaries: List[SolveSummary] = field(default_factory=list)
    global_summary: Optional[SolveSummary] = None
    updates: PoseUpdates = field(default_factory=dict)
    normalization: Optional[NormalizationState] = None


def run_backend(
    graph: FactorGraph,
    tracking: TrackingConfig,
    loop_config: LoopClosureConfig,
    provider: Optional[LoopEdgeProvider] = None,
    loop_closure: bool = True,
    local_radius: int = 2,
) -> BackendResult:
    """
    Loop detection, immediate local BA, then normalized global BA.

    Returned updates compare metric poses before the pass with metric poses
    after denormalization, ready for deform_map.
    """
    result = BackendResult()
    old = graph.poses()

    if loop_closure and len(graph) >= 2:
        result.loops = detect_loop_closures(graph, loop_config)
        if result.loops:
            add_loop_edges(graph, result.loops, provider)
            for i, j in result.loops:
                summary = local_ba(graph, i, j, tracking, local_radius)
                if summary is not None:
                    result.local_summaries.append(summary)

    if graph.edges:
        state = normalize_for_ba(graph)
        result.normalization = state
        try:
            result.global_summary = global_ba(graph, tracking, state).summary
        finally:
            denormalize(graph, state)

    result.updates = changed_poses(old, graph.poses())
    return result
