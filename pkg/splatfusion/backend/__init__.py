"""Loop closure, normalization and global bundle adjustment."""

from .global_ba import BackendResult, GlobalBAResult, changed_poses, global_ba, run_backend
from .loop_closure import (
    add_loop_edges,
    covisibility_overlap,
    detect_loop_closures,
    geometric_loop_edge,
    local_ba,
)
from .normalization import NormalizationState, denormalize, normalize_for_ba

__all__ = [
    "covisibility_overlap",
    "detect_loop_closures",
    "geometric_loop_edge",
    "add_loop_edges",
    "local_ba",
    "NormalizationState",
    "normalize_for_ba",
    "denormalize",
    "GlobalBAResult",
    "BackendResult",
    "global_ba",
    "run_backend",
    "changed_poses",
]
