"""Loop-closure candidates from geometric co-visibility, loop edges and local BA."""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from splatfusion.config import LoopClosureConfig, TrackingConfig
from splatfusion.geometry import project_points
from splatfusion.tracking.graph import FactorGraph, FlowEdge
from splatfusion.tracking.solver import SolveSummary, optimize_keyframes

logger = logging.getLogger(__name__)

LoopEdgeProvider = Callable[[int, int], FlowEdge]


def _warp(graph: FactorGraph, src: int, dst: int, stride: int = 1):
    """Project src pixels (every `stride`) into dst through the current geometry."""
    camera = graph.camera
    kf_src = graph.keyframe(src)
    kf_dst = graph.keyframe(dst)
    sub = (slice(0, camera.height, stride), slice(0, camera.width, stride))
    X = camera.rays()[sub] / kf_src.inv_depth[sub][..., None]
    rel = kf_dst.pose.inverse() @ kf_src.pose
    uv, in_front = project_points(camera, rel.transform(X))
    return uv, in_front & camera.in_bounds(uv)


def covisibility_overlap(graph: FactorGraph, src: int, dst: int, stride: int = 2) -> float:
    """
    Fraction of src's sampled pixels that land in front of and inside dst.

    Pixels are unprojected with src's inverse depth, moved by the current
    poses and reprojected into dst.
    """
    _, visible = _warp(graph, src, dst, stride)
    return float(np.mean(visible))


def detect_loop_closures(graph: FactorGraph, config: LoopClosureConfig) -> List[Tuple[int, int]]:
    """
    Loop-closure candidates (i, j), i inserted before j.

    A pair qualifies when the keyframes are at least min_temporal_gap apart in
    insertion order, overlap(i -> j) >= covis_overlap_min and no edge joins
    them yet. Pairs are taken greedily by decreasing overlap, equal overlaps
    by decreasing temporal gap, with at most max_candidates_per_kf per keyframe.

    Args:
        graph: Factor graph
        config: Candidate gates

    Returns:
        Accepted pairs, highest overlap first
    """
    order = graph.order
    scored: List[Tuple[float, int, int, int]] = []
    for a in range(len(order)):
        for b in range(a + config.min_temporal_gap, len(order)):
            i, j = order[a], order[b]
            if graph.has_edge(i, j) or graph.has_edge(j, i):
                continue
            overlap = covisibility_overlap(graph, i, j, config.sample_stride)
            if overlap >= config.covis_overlap_min:
                scored.append((overlap, b - a, i, j))

    scored.sort(key=lambda item: (-item[0], -item[1], item[2], item[3]))
    per_kf: Dict[int, int] = {}
    accepted: List[Tuple[int, int]] = []
    for overlap, _, i, j in scored:
        if per_kf.get(i, 0) >= config.max_candidates_per_kf:
            continue
        if per_kf.get(j, 0) >= config.max_candidates_per_kf:
            continue
        per_kf[i] = per_kf.get(i, 0) + 1
        per_kf[j] = per_kf.get(j, 0) + 1
        accepted.append((i, j))
        logger.info(f"Loop candidate {i} <-> {j} (overlap {overlap:.2f})")
    return accepted


def geometric_loop_edge(graph: FactorGraph, src: int, dst: int, sigma: float = 1.0) -> FlowEdge:
    """Loop edge whose targets warp src into dst through the current geometry."""
    uv, visible = _warp(graph, src, dst)
    target = np.where(visible[..., None], uv, np.nan)
    cov = np.zeros(graph.camera.shape + (2, 2))
    cov[..., 0, 0] = cov[..., 1, 1] = max(sigma, 0.1) ** 2
    return FlowEdge(src, dst, target, cov, is_loop=True)


def add_loop_edges(
    graph: FactorGraph,
    pairs: Sequence[Tuple[int, int]],
    provider: Optional[LoopEdgeProvider] = None,
) -> List[FlowEdge]:
    """Insert a loop edge in both directions for every pair."""
    provider = provider or (lambda s, d: geometric_loop_edge(graph, s, d))
    added: List[FlowEdge] = []
    for i, j in pairs:
        for src, dst in ((i, j), (j, i)):
            if graph.has_edge(src, dst):
                continue
            edge = provider(src, dst)
            edge.is_loop = True
            graph.add_edge(edge)
            added.append(edge)
    logger.debug(f"Added {len(added)} loop edges for {len(pairs)} pairs")
    return added


def local_ba(
    graph: FactorGraph,
    i: int,
    j: int,
    config: TrackingConfig,
    radius: int = 2,
) -> Optional[SolveSummary]:
    """
    Enforce a loop constraint over the temporal neighbourhoods of i and j.

    Poses around i are held fixed; poses around j and every depth in the
    union move. Returns None when the union holds no edge.
    """
    side_i = graph.temporal_neighbors(i, radius)
    side_j = graph.temporal_neighbors(j, radius)
    ids = [k for k in graph.order if k in set(side_i) | set(side_j)]
    edges = graph.edges_within(ids)
    if not edges:
        return None
    summary = optimize_keyframes(
        graph, ids, set(side_i), config, edges=edges, hold_scale=False, label=f"local_ba {i}-{j}"
    )
    logger.info(
        f"Local BA {i}<->{j} over {len(ids)} keyframes: "
        f"cost {summary.initial_cost:.4e} -> {summary.final_cost:.4e}"
    )
    return summary
