"""Confidence weights and confidence-weighted proxy depth."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from splatfusion.config import FusionConfig
from splatfusion.tracking.graph import Keyframe

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]


@dataclass
class ConfidenceMap:
    """Consistency counts with the derived multi-view and monocular weights."""

    counts: npt.NDArray[np.int32]
    w_mv: ArrayF
    w_mono: ArrayF

    @classmethod
    def multiview_only(cls, shape: tuple) -> "ConfidenceMap":
        """All weight on the multi-view depth (fusion disabled)."""
        return cls(
            counts=np.zeros(shape, dtype=np.int32),
            w_mv=np.ones(shape),
            w_mono=np.zeros(shape),
        )


def compute_weights(counts: npt.ArrayLike, config: FusionConfig) -> ConfidenceMap:
    """w_mv = min(counts / n_key, 1) and its complement w_mono = 1 - w_mv."""
    grid = np.asarray(counts)
    if np.any(grid < 0):
        raise ValueError("Consistency counts must be non-negative")
    w_mv = np.minimum(grid.astype(np.float64) / config.n_key, 1.0)
    return ConfidenceMap(counts=grid.astype(np.int32), w_mv=w_mv, w_mono=1.0 - w_mv)


@dataclass
class ProxyDepth:
    """Fused depth in meters plus the weights that produced it."""

    depth: ArrayF
    weights: ConfidenceMap
    invalid_prior: npt.NDArray[np.bool_]

    @property
    def valid(self) -> npt.NDArray[np.bool_]:
        return np.isfinite(self.depth) & (self.depth > 0)


def scaled_prior_depth(
    mono_prior: ArrayF, scale: float, shift: float
) -> tuple[ArrayF, npt.NDArray[np.bool_]]:
    """
    Depth of the prior aligned in inverse-depth space: 1 / (scale / mono + shift).

    Returns:
        (depth, invalid) where invalid marks a non-positive aligned inverse depth
        (depth is NaN there)
    """
    aligned = scale / mono_prior + shift
    invalid = ~(aligned > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = np.where(invalid, np.nan, 1.0 / aligned)
    return depth, invalid


def fuse_proxy_depth(
    mv_depth: ArrayF,
    mono_prior: ArrayF,
    scale: float,
    shift: float,
    weights: ConfidenceMap,
) -> ProxyDepth:
    """
    Blend multi-view and aligned monocular depth: D = w_mv * D_mv + w_mono * D_prior.

    Pixels whose aligned prior inverse depth is not positive take the
    multi-view depth unchanged and are flagged in `invalid_prior`.

    Args:
        mv_depth: (H, W) multi-view depth, meters
        mono_prior: (H, W) monocular prior, meters
        scale: Prior scale (> 0)
        shift: Prior shift, 1/meters
        weights: Confidence weights

    Returns:
        ProxyDepth
    """
    if scale <= 0:
        raise ValueError(f"Prior scale must be positive (got {scale})")
    mv = np.asarray(mv_depth, dtype=np.float64)
    prior, invalid = scaled_prior_depth(np.asarray(mono_prior, dtype=np.float64), scale, shift)
    w = weights.w_mv

    with np.errstate(invalid="ignore"):
        blended = prior + w * (mv - prior)
        blended = np.clip(blended, np.minimum(mv, prior), np.maximum(mv, prior))
    fused = np.where(w >= 1.0, mv, np.where(w <= 0.0, prior, blended))
    fused = np.where(invalid, mv, fused)

    n_invalid = int(invalid.sum())
    if n_invalid:
        logger.warning(f"{n_invalid} pixels with non-positive aligned prior use multi-view depth")
    return ProxyDepth(depth=fused, weights=weights, invalid_prior=invalid)


def fuse_keyframe(
    kf: Keyframe, weights: ConfidenceMap, mv_depth: Optional[ArrayF] = None
) -> ProxyDepth:
    """Proxy depth for a keyframe from its own depth, prior and (scale, shift)."""
    mv = kf.depth if mv_depth is None else mv_depth
    return fuse_proxy_depth(mv, kf.mono_prior, kf.scale, kf.shift, weights)
