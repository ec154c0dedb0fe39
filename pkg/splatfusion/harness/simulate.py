"""Synthetic sequences: ground truth plus stand-ins for flow and monocular depth networks."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from splatfusion.geometry import Camera, Pose, project_points, se3_exp
from splatfusion.harness.scene import SyntheticScene
from splatfusion.tracking.graph import FlowEdge

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]

MIN_FLOW_SIGMA = 0.1
TEXTURE_POOR_INFLATION = 100.0


@dataclass(frozen=True)
class CorruptRegion:
    """
    Image rectangle [u0, u1) x [v0, v1) whose multi-view depth is scaled by `factor`.

    spread > 0 draws a log-normal factor per pixel and frame around `factor`,
    so the corrupted depth disagrees between views.
    """

    u0: int
    v0: int
    u1: int
    v1: int
    factor: float = 1.5
    spread: float = 0.0

    def mask(self, shape: Tuple[int, int]) -> npt.NDArray[np.bool_]:
        m = np.zeros(shape, dtype=bool)
        m[self.v0 : self.v1, self.u0 : self.u1] = True
        return m


@dataclass
class SequenceSpec:
    """
    Everything needed to synthesize a sequence deterministically.

    drift is a per-frame twist (rho, omega) composed onto the frontend's
    relative motion, accumulating odometry error.
    """

    trajectory: List[Pose]
    camera: Camera
    flow_noise_sigma: float = 0.1
    prior_scale: float = 1.0
    prior_shift: float = 0.0
    prior_noise_sigma: float = 0.0
    corrupt_region: Optional[CorruptRegion] = None
    init_noise: float = 0.02
    drift: Optional[ArrayF] = None
    frame_rate: float = 30.0
    seed: int = 0
    name: str = "sequence"

    def validate(self) -> None:
        if not self.trajectory:
            raise ValueError(f"Sequence '{self.name}': empty trajectory")
        if self.prior_scale <= 0:
            raise ValueError("prior_scale must be positive")
        if self.flow_noise_sigma < 0 or self.prior_noise_sigma < 0 or self.init_noise < 0:
            raise ValueError("noise levels must be non-negative")
        region = self.corrupt_region
        if region is not None and (region.factor <= 0 or region.spread < 0):
            raise ValueError("corrupt_region needs factor > 0 and spread >= 0")


@dataclass
class Frame:
    """One synthesized frame."""

    index: int
    timestamp: float
    image: ArrayF
    gt_depth: ArrayF
    gt_pose: Pose
    texture_poor: npt.NDArray[np.bool_]
    mono_prior: ArrayF
    init_inv_depth: ArrayF


@dataclass
class SyntheticSequence:
    """Frames, ground truth and the frontend stand-in that produces flow edges."""

    scene: SyntheticScene
    spec: SequenceSpec
    frames: List[Frame]
    frontend_poses: List[Pose]
    _flow_cache: Dict[Tuple[int, int, bool], FlowEdge] = field(default_factory=dict, repr=False)

    @property
    def camera(self) -> Camera:
        return self.spec.camera

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def gt_poses(self) -> List[Pose]:
        return [f.gt_pose for f in self.frames]

    def initial_pose(self, i: int, j: int, est_pose_i: Pose) -> Pose:
        """Frontend guess for frame j: the estimate of i moved by the frontend's relative motion."""
        rel = self.frontend_poses[i].inverse() @ self.frontend_poses[j]
        return est_pose_i @ rel

    def _noise(self, i: int, j: int, loop: bool) -> np.random.Generator:
        return np.random.default_rng([self.spec.seed, i, j, int(loop)])

    def flow_edge(self, i: int, j: int, loop: bool = False) -> FlowEdge:
        """
        Dense correspondences from frame i into frame j.

        Odometry edges warp through the frontend poses and the ground-truth
        depth, except on texture-poor pixels which use the frontend's own depth
        with inflated covariance. Loop edges warp through the true geometry.
        Targets that leave the image or fall behind the camera are NaN.
        """
        key = (i, j, loop)
        if key in self._flow_cache:
            return self._flow_cache[key]

        cam = self.camera
        src = self.frames[i]
        sigma = self.spec.flow_noise_sigma
        poor = src.texture_poor
        if loop:
            pose_i, pose_j = src.gt_pose, self.frames[j].gt_pose
            depth = src.gt_depth
        else:
            pose_i, pose_j = self.frontend_poses[i], self.frontend_poses[j]
            depth = np.where(poor, 1.0 / src.init_inv_depth, src.gt_depth)

        X = cam.rays() * depth[..., None]
        rel = pose_j.inverse() @ pose_i
        uv, in_front = project_points(cam, rel.transform(X))
        visible = in_front & cam.in_bounds(uv)

        rng = self._noise(i, j, loop)
        noise = rng.normal(0.0, 1.0, uv.shape) * sigma
        target = np.where(visible[..., None], uv + noise, np.nan)

        var = max(sigma, MIN_FLOW_SIGMA) ** 2
        if not loop:
            var = np.where(poor, var * TEXTURE_POOR_INFLATION, var)
        else:
            var = np.full(cam.shape, var)
        cov = np.zeros(cam.shape + (2, 2))
        cov[..., 0, 0] = var
        cov[..., 1, 1] = var

        edge = FlowEdge(i, j, target, cov, is_loop=loop)
        self._flow_cache[key] = edge
        return edge

    def flow_field(self, i: int, j: int) -> ArrayF:
        """Displacement field of the odometry edge i -> j (NaN where invalid)."""
        u, v = self.camera.pixel_coordinates()
        return self.flow_edge(i, j).flow_target - np.stack([u, v], axis=-1)


def frontend_trajectory(gt: Sequence[Pose], drift: Optional[ArrayF]) -> List[Pose]:
    """F_0 = G_0, F_k = F_{k-1} (G_{k-1}^-1 G_k) exp(drift)."""
    poses = [gt[0]]
    step = se3_exp(drift) if drift is not None and np.any(drift) else None
    for k in range(1, len(gt)):
        rel = gt[k - 1].inverse() @ gt[k]
        nxt = poses[-1] @ rel
        if step is not None:
            nxt = nxt @ step
        poses.append(nxt)
    return poses


def mono_prior_from_depth(
    depth: ArrayF, scale: float, shift: float, noise: Optional[ArrayF] = None
) -> ArrayF:
    """
    Prior D_m with scale / D_m + shift = 1 / D + noise.

    Written as scale * D / (1 - shift * D + noise * D) so the identity
    alignment reproduces the depth exactly.
    """
    n = 0.0 if noise is None else noise
    denom = 1.0 - shift * depth + depth * n
    return scale * depth / np.maximum(denom, 1e-3)


def generate_sequence(scene: SyntheticScene, spec: SequenceSpec) -> SyntheticSequence:
    """
    Ray-cast every frame and synthesize priors and initial depths.

    Args:
        scene: Scene to render
        spec: Trajectory, camera, noise levels and corruption

    Returns:
        SyntheticSequence; identical for identical (scene, spec)
    """
    spec.validate()
    cam = spec.camera
    frames: List[Frame] = []
    corrupt = spec.corrupt_region.mask(cam.shape) if spec.corrupt_region else None

    for k, pose in enumerate(spec.trajectory):
        rng = np.random.default_rng([spec.seed, k])
        cast = scene.render(cam, pose)
        poor = cast.texture_poor.copy()

        prior_noise = None
        if spec.prior_noise_sigma:
            prior_noise = rng.normal(0.0, spec.prior_noise_sigma, cam.shape)
        prior = mono_prior_from_depth(cast.depth, spec.prior_scale, spec.prior_shift, prior_noise)

        init = (1.0 / cast.depth) * (1.0 + spec.init_noise * rng.normal(0.0, 1.0, cam.shape))
        if corrupt is not None:
            region = spec.corrupt_region
            factor = region.factor
            if region.spread:
                factor = factor * np.exp(region.spread * rng.normal(0.0, 1.0, cam.shape))
            init = np.where(corrupt, init / factor, init)
            poor |= corrupt
        init = np.maximum(init, 1e-3)

        frames.append(
            Frame(
                index=k,
                timestamp=k / spec.frame_rate,
                image=cast.image,
                gt_depth=cast.depth,
                gt_pose=pose,
                texture_poor=poor,
                mono_prior=prior,
                init_inv_depth=init,
            )
        )

    frontend = frontend_trajectory(spec.trajectory, spec.drift)
    logger.info(
        f"Generated sequence '{spec.name}': {len(frames)} frames at {cam.width}x{cam.height}"
    )
    return SyntheticSequence(scene=scene, spec=spec, frames=frames, frontend_poses=frontend)
