"""Composite map loss over supervising keyframes, with analytic gradients."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from splatfusion.config import MapLossConfig
from splatfusion.geometry import Camera, Pose
from splatfusion.gsmap.gaussians import GaussianMap
from splatfusion.gsmap.render import MapGradients, render, render_backward
from splatfusion.gsmap.ssim import ssim, ssim_with_grad
from splatfusion.tracking.graph import Keyframe

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]


@dataclass
class SupervisionFrame:
    """One supervising view: pose, observed image and proxy depth."""

    kf_id: int
    pose: Pose
    image: ArrayF
    proxy_depth: ArrayF

    @classmethod
    def from_keyframe(cls, kf: Keyframe, proxy) -> "SupervisionFrame":
        depth = np.asarray(getattr(proxy, "depth", proxy), dtype=np.float64)
        return cls(kf_id=kf.id, pose=kf.pose, image=np.asarray(kf.image, dtype=np.float64), proxy_depth=depth)


@dataclass
class LossTerms:
    """Loss decomposition; photometric, ssim and depth are summed over frames."""

    l1: float = 0.0
    ssim: float = 0.0
    depth: float = 0.0
    regularizer: float = 0.0
    per_frame: List[float] = field(default_factory=list)

    @property
    def total(self) -> float:
        return float(sum(self.per_frame) + self.regularizer)


def scale_regularizer(log_scales: ArrayF) -> Tuple[float, ArrayF]:
    """
    Isotropy penalty sum_j sum_axes (s - mean(s))^2 with s = exp(log_scales).

    Returns:
        (value, gradient w.r.t. log_scales)
    """
    s = np.exp(log_scales)
    dev = s - s.mean(axis=1, keepdims=True)
    value = float(np.sum(dev**2))
    # deviations sum to zero per Gaussian, so the mean term drops out
    grad = 2.0 * dev * s
    return value, grad


def _frame_loss(
    gmap: GaussianMap,
    camera: Camera,
    frame: SupervisionFrame,
    config: MapLossConfig,
    with_grad: bool,
) -> Tuple[float, float, float, Optional[MapGradients]]:
    out = render(gmap, camera, frame.pose, keep_cache=with_grad)
    diff = out.color - frame.image
    l1 = float(np.mean(np.abs(diff)))

    if with_grad:
        ssim_value, ssim_grad = ssim_with_grad(out.color, frame.image, config.ssim_window, config.ssim_sigma)
    else:
        ssim_value, ssim_grad = ssim(out.color, frame.image, config.ssim_window, config.ssim_sigma), None

    proxy = frame.proxy_depth
    valid = np.isfinite(proxy) & (proxy > 0)
    n_valid = int(valid.sum())
    depth_diff = np.where(valid, out.depth - np.where(valid, proxy, 0.0), 0.0)
    depth_l1 = float(np.sum(np.abs(depth_diff)) / n_valid) if n_valid else 0.0

    grads = None
    if with_grad:
        lam = config.lambda_ssim
        grad_color = (1.0 - lam) * np.sign(diff) / diff.size - lam * ssim_grad
        grad_depth = None
        if n_valid and config.lambda_depth > 0:
            grad_depth = config.lambda_depth * np.sign(depth_diff) / n_valid
        grads = render_backward(gmap, camera, out, grad_color, grad_depth)
    return l1, 1.0 - ssim_value, depth_l1, grads


def map_loss(
    gmap: GaussianMap,
    camera: Camera,
    frames: Sequence[SupervisionFrame],
    config: MapLossConfig,
    with_grad: bool = True,
) -> Tuple[LossTerms, Optional[MapGradients]]:
    """
    Composite loss of the map against supervising frames.

    Per frame: (1 - lambda_ssim) * mean|C - I| + lambda_ssim * (1 - SSIM(C, I))
    + lambda_depth * mean over valid proxy pixels of |D - D_proxy|.
    Frame terms are summed and lambda_reg times the scale-isotropy penalty is added.

    Args:
        gmap: Gaussian map
        camera: Intrinsics
        frames: Supervising views (at least one)
        config: Loss weights
        with_grad: Also return analytic gradients

    Returns:
        (LossTerms, MapGradients or None)
    """
    if not frames:
        raise ValueError("map_loss needs at least one supervising frame")

    terms = LossTerms()
    grads = MapGradients.zeros(len(gmap)) if with_grad else None
    lam = config.lambda_ssim
    for frame in frames:
        l1, dssim, depth_l1, g = _frame_loss(gmap, camera, frame, config, with_grad)
        terms.l1 += l1
        terms.ssim += dssim
        terms.depth += depth_l1
        terms.per_frame.append((1.0 - lam) * l1 + lam * dssim + config.lambda_depth * depth_l1)
        if grads is not None and g is not None:
            grads += g

    reg, reg_grad = scale_regularizer(gmap.log_scales)
    terms.regularizer = config.lambda_reg * reg
    if grads is not None:
        grads.log_scales += config.lambda_reg * reg_grad
    return terms, grads
