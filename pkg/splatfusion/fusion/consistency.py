"""Per-pixel multi-view geometric consistency counts."""

import logging
from typing import Dict, Optional, Sequence

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed

from splatfusion.config import FusionConfig
from splatfusion.geometry import project_points, sample_grid, unproject_grid
from splatfusion.tracking.graph import FactorGraph

logger = logging.getLogger(__name__)


def consistency_tolerance(depth: npt.NDArray[np.float64], eta: float) -> float:
    """eta times the mean depth over valid (finite, positive) pixels."""
    valid = np.isfinite(depth) & (depth > 0)
    if not np.any(valid):
        return 0.0
    return eta * float(np.mean(depth[valid]))


def consistency_count(
    graph: FactorGraph,
    kf_id: int,
    neighbors: Sequence[int],
    config: FusionConfig,
) -> npt.NDArray[np.int32]:
    """
    Count, per pixel, the neighbours whose depth reproduces the pixel's 3D point.

    For pixel p of keyframe i the world point X_i(p) is projected into each
    neighbour k; the neighbour's depth sampled there is back-projected to X_k
    and the count increments when ||X_i(p) - X_k|| < eta * mean(depth_i).
    Projections behind the neighbour or outside its image never count.

    Args:
        graph: Factor graph
        kf_id: Keyframe to score
        neighbors: Neighbour keyframe ids (kf_id itself is ignored)
        config: Fusion settings (eta, interpolation)

    Returns:
        (H, W) int32 counts
    """
    camera = graph.camera
    kf = graph.keyframe(kf_id)
    counts = np.zeros(camera.shape, dtype=np.int32)
    neighbors = [k for k in neighbors if k != kf_id]
    if not neighbors:
        return counts

    depth_i = kf.depth
    tol = consistency_tolerance(depth_i, config.eta)
    X_world = kf.pose.transform(unproject_grid(camera, kf.inv_depth))
    rays = None

    for k in neighbors:
        nb = graph.keyframe(k)
        X_k_cam = nb.pose.inverse().transform(X_world)
        uv, in_front = project_points(camera, X_k_cam)
        inside = in_front & camera.in_bounds(uv)
        depth_k = sample_grid(nb.depth, uv, mode=config.interpolation)
        inside &= np.isfinite(depth_k) & (depth_k > 0)
        if rays is None:
            rays = np.empty_like(X_world)
        rays[..., 0] = (uv[..., 0] - camera.cx) / camera.fx
        rays[..., 1] = (uv[..., 1] - camera.cy) / camera.fy
        rays[..., 2] = 1.0
        X_k = nb.pose.transform(rays * depth_k[..., None])
        dist = np.linalg.norm(X_world - X_k, axis=-1)
        with np.errstate(invalid="ignore"):
            counts += (inside & (dist < tol)).astype(np.int32)

    logger.debug(
        f"Keyframe {kf_id}: consistency over {len(neighbors)} neighbours, "
        f"mean count {counts.mean():.2f}"
    )
    return counts


def consistency_counts(
    graph: FactorGraph,
    kf_ids: Sequence[int],
    config: FusionConfig,
    neighbors: Optional[Dict[int, Sequence[int]]] = None,
    n_jobs: int = 1,
) -> Dict[int, npt.NDArray[np.int32]]:
    """
    Consistency counts for several keyframes, evaluated in parallel threads.

    Args:
        graph: Factor graph (read only)
        kf_ids: Keyframes to score
        config: Fusion settings
        neighbors: Neighbour list per keyframe; defaults to the other window keyframes
        n_jobs: joblib worker count (threading backend)
    """
    neighbors = neighbors or {k: graph.window_neighbors(k) for k in kf_ids}
    ids = list(kf_ids)
    if n_jobs == 1 or len(ids) <= 1:
        results = [consistency_count(graph, k, neighbors[k], config) for k in ids]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(consistency_count)(graph, k, neighbors[k], config) for k in ids
        )
    return dict(zip(ids, results))
