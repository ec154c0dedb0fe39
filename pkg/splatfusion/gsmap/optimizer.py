"""First-order map optimization: Adam over per-parameter-group step sizes."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import numpy.typing as npt

from splatfusion.config import MapLossConfig, MapOptimizerConfig
from splatfusion.errors import NonFiniteLossError
from splatfusion.geometry import Camera
from splatfusion.geometry.se3 import so3_exp_batch
from splatfusion.gsmap.gaussians import GaussianMap
from splatfusion.gsmap.loss import SupervisionFrame, map_loss
from splatfusion.gsmap.render import MapGradients

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]

_GROUPS = ("means", "rotations", "log_scales", "opacity_logits", "colors")


def orthonormalize(rotations: ArrayF) -> ArrayF:
    """Nearest rotation matrices (SVD projection, determinant +1)."""
    U, _, Vt = np.linalg.svd(rotations)
    R = U @ Vt
    flip = np.linalg.det(R) < 0
    if np.any(flip):
        U[flip, :, -1] *= -1.0
        R[flip] = U[flip] @ Vt[flip]
    return R


class MapAdam:
    """Adam moments for each parameter group of a fixed-size map."""

    def __init__(self, num_gaussians: int, config: MapOptimizerConfig):
        self.config = config
        self.t = 0
        shapes = {
            "means": (num_gaussians, 3),
            "rotations": (num_gaussians, 3),
            "log_scales": (num_gaussians, 3),
            "opacity_logits": (num_gaussians,),
            "colors": (num_gaussians, 3),
        }
        self.m: Dict[str, ArrayF] = {k: np.zeros(s) for k, s in shapes.items()}
        self.v: Dict[str, ArrayF] = {k: np.zeros(s) for k, s in shapes.items()}

    def base_rates(self) -> Dict[str, float]:
        c = self.config
        return {
            "means": c.lr_means,
            "rotations": c.lr_rotations,
            "log_scales": c.lr_log_scales,
            "opacity_logits": c.lr_opacity,
            "colors": c.lr_colors,
        }

    def step(self, gmap: GaussianMap, grads: MapGradients, lr_factor: float = 1.0) -> None:
        """Apply one Adam update to the map in place."""
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        rates = self.base_rates()
        for name in _GROUPS:
            g = getattr(grads, name)
            self.m[name] = c.beta1 * self.m[name] + (1.0 - c.beta1) * g
            self.v[name] = c.beta2 * self.v[name] + (1.0 - c.beta2) * g * g
            update = rates[name] * lr_factor * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + c.eps)
            if name == "rotations":
                gmap.rotations = orthonormalize(gmap.rotations @ so3_exp_batch(-update))
            else:
                setattr(gmap, name, getattr(gmap, name) - update)
        np.clip(gmap.colors, 0.0, 1.0, out=gmap.colors)


@dataclass
class MapOptimizationResult:
    """Loss on the full supervising set before and after optimization."""

    initial_loss: float
    final_loss: float
    iterations: int
    history: List[float] = field(default_factory=list)

    @property
    def relative_decrease(self) -> float:
        if self.initial_loss <= 0:
            return 0.0
        return (self.initial_loss - self.final_loss) / self.initial_loss


def _check_finite(gmap: GaussianMap, loss: float, grads: Optional[MapGradients]) -> None:
    bad = ~gmap.parameters_finite()
    if grads is not None:
        bad |= ~grads.finite()
    if np.isfinite(loss) and not np.any(bad):
        return
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise NonFiniteLossError(
            f"Non-finite map loss/gradient at Gaussian {j} (anchor keyframe {int(gmap.anchors[j])})"
        )
    raise NonFiniteLossError(f"Non-finite map loss {loss} with finite parameters and gradients")


def optimize_map(
    gmap: GaussianMap,
    camera: Camera,
    frames: Sequence[SupervisionFrame],
    loss_config: MapLossConfig,
    config: MapOptimizerConfig,
    iters: int,
    frames_per_iter: Optional[int] = 1,
) -> MapOptimizationResult:
    """
    Optimize the map in place against supervising frames.

    Each iteration supervises `frames_per_iter` frames taken round-robin
    (None uses every frame). Step sizes decay exponentially to
    lr_final_fraction of their base value over the run.

    Args:
        gmap: Map to update (in place)
        camera: Intrinsics
        frames: Supervising frames
        loss_config: Loss weights
        config: Optimizer settings
        iters: Number of iterations (>= 1)
        frames_per_iter: Frames per iteration

    Returns:
        MapOptimizationResult with full-set loss before and after

    Raises:
        NonFiniteLossError: loss, gradient or parameter became NaN/inf
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1 (got {iters})")
    if not frames:
        raise ValueError("optimize_map needs at least one supervising frame")

    initial, _ = map_loss(gmap, camera, frames, loss_config, with_grad=False)
    _check_finite(gmap, initial.total, None)
    if len(gmap) == 0:
        return MapOptimizationResult(initial.total, initial.total, 0, [initial.total])

    adam = MapAdam(len(gmap), config)
    batch = len(frames) if frames_per_iter is None else max(1, min(frames_per_iter, len(frames)))
    history: List[float] = []
    cursor = 0
    for it in range(iters):
        chosen = [frames[(cursor + k) % len(frames)] for k in range(batch)]
        cursor = (cursor + batch) % len(frames)
        terms, grads = map_loss(gmap, camera, chosen, loss_config, with_grad=True)
        _check_finite(gmap, terms.total, grads)
        history.append(terms.total)
        progress = it / (iters - 1) if iters > 1 else 0.0
        adam.step(gmap, grads, config.lr_final_fraction**progress)
        logger.debug(f"Map iter {it}: loss {terms.total:.6f}")

    final, _ = map_loss(gmap, camera, frames, loss_config, with_grad=False)
    _check_finite(gmap, final.total, None)
    logger.info(
        f"Map optimization: {iters} iters over {len(frames)} frames, "
        f"loss {initial.total:.5f} -> {final.total:.5f}"
    )
    return MapOptimizationResult(initial.total, final.total, iters, history)
