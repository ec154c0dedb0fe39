"""Procedurally textured scenes of planes and spheres, rendered by ray casting."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt

from splatfusion.geometry import Camera, Pose

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]

_MIN_HIT = 1e-6


@dataclass
class Texture:
    """Sum-of-sinusoids RGB pattern over 2-D surface coordinates; flat when textured is False."""

    base: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    amplitude: float = 0.35
    frequency: float = 9.0  # radians per meter
    phase: Tuple[float, float, float] = (0.0, 1.3, 2.6)
    textured: bool = True

    def __call__(self, s: ArrayF, t: ArrayF) -> ArrayF:
        base = np.broadcast_to(np.asarray(self.base), s.shape + (3,)).copy()
        if not self.textured:
            return base
        f = self.frequency
        for c in range(3):
            ph = self.phase[c]
            base[..., c] += self.amplitude * (
                0.6 * np.sin(f * s + ph) * np.cos(0.7 * f * t - ph)
                + 0.4 * np.sin(1.9 * f * (s + t) + 2.0 * ph)
            )
        return np.clip(base, 0.0, 1.0)


class Surface(ABC):
    """A ray-castable primitive carrying a texture."""

    texture: Texture

    @abstractmethod
    def intersect(self, origins: ArrayF, dirs: ArrayF) -> ArrayF:
        """Ray parameter of the nearest forward hit per ray; inf when missed."""

    @abstractmethod
    def surface_coordinates(self, points: ArrayF) -> Tuple[ArrayF, ArrayF]:
        """2-D texture coordinates of points on the surface."""

    def shade(self, points: ArrayF) -> ArrayF:
        s, t = self.surface_coordinates(points)
        return self.texture(s, t)


@dataclass
class Plane(Surface):
    """Infinite plane n . x = offset."""

    normal: ArrayF
    offset: float
    texture: Texture = field(default_factory=Texture)

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=np.float64)
        self.normal = n / np.linalg.norm(n)
        # in-plane basis for texture coordinates
        helper = np.array([0.0, 1.0, 0.0]) if abs(self.normal[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        self._e1 = np.cross(self.normal, helper)
        self._e1 /= np.linalg.norm(self._e1)
        self._e2 = np.cross(self.normal, self._e1)

    def intersect(self, origins: ArrayF, dirs: ArrayF) -> ArrayF:
        denom = dirs @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.offset - origins @ self.normal) / denom
        return np.where(np.isfinite(t) & (t > _MIN_HIT), t, np.inf)

    def surface_coordinates(self, points: ArrayF) -> Tuple[ArrayF, ArrayF]:
        return points @ self._e1, points @ self._e2


@dataclass
class Sphere(Surface):
    center: ArrayF
    radius: float
    texture: Texture = field(default_factory=Texture)

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.radius <= 0:
            raise ValueError(f"Sphere radius must be positive (got {self.radius})")

    def intersect(self, origins: ArrayF, dirs: ArrayF) -> ArrayF:
        oc = origins - self.center
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * np.sum(oc * dirs, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius**2
        disc = b * b - 4.0 * a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        t_near = (-b - root) / (2.0 * a)
        t_far = (-b + root) / (2.0 * a)
        t = np.where(t_near > _MIN_HIT, t_near, t_far)
        return np.where((disc >= 0) & (t > _MIN_HIT), t, np.inf)

    def surface_coordinates(self, points: ArrayF) -> Tuple[ArrayF, ArrayF]:
        d = (points - self.center) / self.radius
        return self.radius * np.arctan2(d[..., 1], d[..., 0]), self.radius * np.arccos(
            np.clip(d[..., 2], -1.0, 1.0)
        )


@dataclass
class RayCastResult:
    """Per-pixel camera z-depth, color, hit surface index (-1 = miss) and texture-poor flag."""

    depth: ArrayF
    image: ArrayF
    surface: npt.NDArray[np.int64]
    texture_poor: npt.NDArray[np.bool_]


@dataclass
class SyntheticScene:
    """
    A set of textured surfaces.

    Rays that hit nothing take `background_depth` (flat grey); a closed scene
    leaves it unused.
    """

    surfaces: List[Surface]
    background_depth: Optional[float] = None
    name: str = "scene"

    def cast(self, origins: ArrayF, dirs: ArrayF) -> Tuple[ArrayF, npt.NDArray[np.int64]]:
        """Nearest hit parameter and surface index for each ray."""
        hits = np.stack([s.intersect(origins, dirs) for s in self.surfaces], axis=0)
        index = np.argmin(hits, axis=0)
        t = np.take_along_axis(hits, index[None], axis=0)[0]
        index = np.where(np.isfinite(t), index, -1)
        return t, index

    def render(self, camera: Camera, pose: Pose) -> RayCastResult:
        """Ray-cast every pixel center; ray directions have unit camera z so t is depth."""
        rays = camera.rays().reshape(-1, 3)
        dirs = rays @ pose.rotation.T
        origins = np.broadcast_to(pose.translation, dirs.shape)
        t, index = self.cast(origins, dirs)
        missed = index < 0
        if np.any(missed):
            if self.background_depth is None:
                raise ValueError(
                    f"Scene '{self.name}': {int(missed.sum())} rays miss every surface"
                )
            t = np.where(missed, self.background_depth, t)

        points = origins + dirs * t[:, None]
        image = np.full((t.size, 3), 0.5)
        poor = np.zeros(t.size, dtype=bool)
        for k, surface in enumerate(self.surfaces):
            sel = index == k
            if np.any(sel):
                image[sel] = surface.shade(points[sel])
                poor[sel] = not surface.texture.textured
        H, W = camera.shape
        return RayCastResult(
            depth=t.reshape(H, W),
            image=image.reshape(H, W, 3),
            surface=index.reshape(H, W),
            texture_poor=poor.reshape(H, W),
        )

    def sample_surface_points(
        self, camera: Camera, poses: Sequence[Pose], stride: int = 2
    ) -> ArrayF:
        """World points seen by the given cameras, for reconstruction metrics."""
        sub = (slice(0, camera.height, stride), slice(0, camera.width, stride))
        points = []
        rays = camera.rays()[sub].reshape(-1, 3)
        for pose in poses:
            dirs = rays @ pose.rotation.T
            origins = np.broadcast_to(pose.translation, dirs.shape)
            t, index = self.cast(origins, dirs)
            hit = index >= 0
            points.append(origins[hit] + dirs[hit] * t[hit, None])
        return np.concatenate(points) if points else np.zeros((0, 3))
