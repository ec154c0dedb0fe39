"""Multi-view consistency scoring and confidence-weighted proxy-depth fusion."""

from .consistency import consistency_count, consistency_counts, consistency_tolerance
from .proxy import (
    ConfidenceMap,
    ProxyDepth,
    compute_weights,
    fuse_keyframe,
    fuse_proxy_depth,
    scaled_prior_depth,
)

__all__ = [
    "consistency_count",
    "consistency_counts",
    "consistency_tolerance",
    "ConfidenceMap",
    "ProxyDepth",
    "compute_weights",
    "fuse_proxy_depth",
    "fuse_keyframe",
    "scaled_prior_depth",
]
