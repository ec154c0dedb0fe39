"""Anisotropic Gaussian primitives stored as parallel arrays."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List

import numpy as np
import numpy.typing as npt
from scipy.special import expit

from splatfusion.geometry import Camera
from splatfusion.tracking.graph import Keyframe

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Read-only view of one primitive."""

    mean: ArrayF
    rotation: ArrayF
    log_scales: ArrayF
    opacity_logit: float
    color: ArrayF
    anchor_kf: int

    @property
    def scales(self) -> ArrayF:
        return np.exp(self.log_scales)

    @property
    def opacity(self) -> float:
        return float(expit(self.opacity_logit))

    @property
    def covariance(self) -> ArrayF:
        S2 = np.diag(np.exp(2.0 * self.log_scales))
        return self.rotation @ S2 @ self.rotation.T


@dataclass
class GaussianMap:
    """
    Gaussian primitives anchored to keyframes.

    Parameter arrays are indexed by Gaussian; `anchors[j]` is the keyframe id
    whose pose corrections move Gaussian j.
    """

    means: ArrayF = field(default_factory=lambda: np.zeros((0, 3)))
    rotations: ArrayF = field(default_factory=lambda: np.zeros((0, 3, 3)))
    log_scales: ArrayF = field(default_factory=lambda: np.zeros((0, 3)))
    opacity_logits: ArrayF = field(default_factory=lambda: np.zeros(0))
    colors: ArrayF = field(default_factory=lambda: np.zeros((0, 3)))
    anchors: npt.NDArray[np.int64] = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    PARAMETERS = ("means", "rotations", "log_scales", "opacity_logits", "colors")

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=np.float64).reshape(-1, 3)
        n = self.means.shape[0]
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(n, 3, 3)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(n, 3)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=np.float64).reshape(n)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(n, 3)
        self.anchors = np.asarray(self.anchors, dtype=np.int64).reshape(n)

    def __len__(self) -> int:
        return int(self.means.shape[0])

    def __getitem__(self, j: int) -> Gaussian:
        return Gaussian(
            mean=self.means[j].copy(),
            rotation=self.rotations[j].copy(),
            log_scales=self.log_scales[j].copy(),
            opacity_logit=float(self.opacity_logits[j]),
            color=self.colors[j].copy(),
            anchor_kf=int(self.anchors[j]),
        )

    def __iter__(self) -> Iterator[Gaussian]:
        return (self[j] for j in range(len(self)))

    @classmethod
    def from_gaussians(cls, gaussians: Iterable[Gaussian]) -> "GaussianMap":
        items: List[Gaussian] = list(gaussians)
        if not items:
            return cls()
        return cls(
            means=np.stack([g.mean for g in items]),
            rotations=np.stack([g.rotation for g in items]),
            log_scales=np.stack([g.log_scales for g in items]),
            opacity_logits=np.array([g.opacity_logit for g in items]),
            colors=np.stack([g.color for g in items]),
            anchors=np.array([g.anchor_kf for g in items]),
        )

    @property
    def scales(self) -> ArrayF:
        return np.exp(self.log_scales)

    @property
    def opacities(self) -> ArrayF:
        return expit(self.opacity_logits)

    @property
    def anchor_index(self) -> Dict[int, npt.NDArray[np.intp]]:
        """Keyframe id -> indices of the Gaussians anchored to it."""
        return {int(k): np.flatnonzero(self.anchors == k) for k in np.unique(self.anchors)}

    def copy(self) -> "GaussianMap":
        return GaussianMap(
            means=self.means.copy(),
            rotations=self.rotations.copy(),
            log_scales=self.log_scales.copy(),
            opacity_logits=self.opacity_logits.copy(),
            colors=self.colors.copy(),
            anchors=self.anchors.copy(),
        )

    def extend(self, other: "GaussianMap") -> None:
        """Append another map's Gaussians in place."""
        self.means = np.concatenate([self.means, other.means])
        self.rotations = np.concatenate([self.rotations, other.rotations])
        self.log_scales = np.concatenate([self.log_scales, other.log_scales])
        self.opacity_logits = np.concatenate([self.opacity_logits, other.opacity_logits])
        self.colors = np.concatenate([self.colors, other.colors])
        self.anchors = np.concatenate([self.anchors, other.anchors])

    def parameters_finite(self) -> npt.NDArray[np.bool_]:
        """Per-Gaussian flag: every parameter finite."""
        return (
            np.all(np.isfinite(self.means), axis=1)
            & np.all(np.isfinite(self.rotations.reshape(-1, 9)), axis=1)
            & np.all(np.isfinite(self.log_scales), axis=1)
            & np.isfinite(self.opacity_logits)
            & np.all(np.isfinite(self.colors), axis=1)
        )


def init_gaussians(
    kf: Keyframe,
    proxy_depth: npt.ArrayLike,
    camera: Camera,
    stride: int,
) -> GaussianMap:
    """
    One isotropic Gaussian per sampled pixel of a keyframe.

    The mean is the pixel unprojected with the proxy depth and moved to world
    by the keyframe pose; the scale is the depth times the stride-wide pixel
    footprint (depth * stride / f); opacity starts at 0.5 and color copies the
    image.

    Args:
        kf: Source keyframe (pose, image)
        proxy_depth: (H, W) proxy depth in meters, or a ProxyDepth
        camera: Intrinsics
        stride: Pixel sampling stride (>= 1)

    Returns:
        GaussianMap anchored to kf.id; invalid proxy pixels are skipped
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1 (got {stride})")
    depth = np.asarray(getattr(proxy_depth, "depth", proxy_depth), dtype=np.float64)
    sub = (slice(0, camera.height, stride), slice(0, camera.width, stride))
    d = depth[sub]
    valid = np.isfinite(d) & (d > 0)
    skipped = int((~valid).sum())
    if skipped:
        logger.debug(f"Keyframe {kf.id}: skipped {skipped} invalid proxy pixels")

    rays = camera.rays()[sub][valid]
    world = kf.pose.transform(rays * d[valid][:, None])
    n = world.shape[0]

    focal = 0.5 * (camera.fx + camera.fy)
    scale = d[valid] * stride / focal
    return GaussianMap(
        means=world,
        rotations=np.broadcast_to(np.eye(3), (n, 3, 3)).copy(),
        log_scales=np.repeat(np.log(scale)[:, None], 3, axis=1),
        opacity_logits=np.zeros(n),
        colors=np.asarray(kf.image[sub][valid], dtype=np.float64),
        anchors=np.full(n, kf.id, dtype=np.int64),
    )
