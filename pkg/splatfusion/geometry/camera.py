"""Pinhole camera model and pixel-grid sampling.

Pixel centres sit at integer coordinates (u, v); u indexes columns, v rows.
Grids are numpy arrays of shape (height, width) or (height, width, channels).
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np
import numpy.typing as npt
from scipy.ndimage import map_coordinates

from splatfusion.errors import BehindCameraError, InvalidDepthError

PixelGrid = npt.NDArray[np.float64]

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics and image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"Focal lengths must be positive (fx={self.fx}, fy={self.fy})")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"Image size must be >= 1 (got {self.width}x{self.height})")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def num_pixels(self) -> int:
        return self.width * self.height

    @property
    def K(self) -> npt.NDArray[np.float64]:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @cached_property
    def _pixel_grid(self) -> Tuple[PixelGrid, PixelGrid]:
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        u.flags.writeable = False
        v.flags.writeable = False
        return u, v

    def pixel_coordinates(self) -> Tuple[PixelGrid, PixelGrid]:
        """(u, v) grids of pixel-centre coordinates."""
        return self._pixel_grid

    def rays(self) -> PixelGrid:
        """K^-1 [u, v, 1] for every pixel, shape (H, W, 3)."""
        u, v = self.pixel_coordinates()
        return np.stack(
            [(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1
        )

    def in_bounds(self, uv: npt.NDArray[np.float64]) -> npt.NDArray[np.bool_]:
        """True where (u, v) lies inside the sampling domain [0, W-1] x [0, H-1]."""
        u, v = uv[..., 0], uv[..., 1]
        with np.errstate(invalid="ignore"):
            return (
                np.isfinite(u)
                & np.isfinite(v)
                & (u >= 0)
                & (u <= self.width - 1)
                & (v >= 0)
                & (v <= self.height - 1)
            )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


def project(camera: Camera, point: npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Project a camera-frame 3-vector to a pixel."""
    x, y, z = np.asarray(point, dtype=np.float64)
    if z <= 0:
        raise BehindCameraError(f"Point {x, y, z} is behind the camera")
    return np.array([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy])


def project_points(
    camera: Camera, points: npt.NDArray[np.float64]
) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.bool_]]:
    """
    Vectorized projection.

    Args:
        camera: Intrinsics
        points: (..., 3) camera-frame points

    Returns:
        Tuple of (uv (..., 2), in_front mask); uv is NaN where z <= MIN_DEPTH
    """
    z = points[..., 2]
    in_front = z > MIN_DEPTH
    safe_z = np.where(in_front, z, np.nan)
    uv = np.stack(
        [
            camera.fx * points[..., 0] / safe_z + camera.cx,
            camera.fy * points[..., 1] / safe_z + camera.cy,
        ],
        axis=-1,
    )
    return uv, in_front


def project_jacobian(camera: Camera, points: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """d(project)/d(point), shape (..., 2, 3)."""
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    inv_z = 1.0 / z
    jac = np.zeros(points.shape[:-1] + (2, 3))
    jac[..., 0, 0] = camera.fx * inv_z
    jac[..., 0, 2] = -camera.fx * x * inv_z**2
    jac[..., 1, 1] = camera.fy * inv_z
    jac[..., 1, 2] = -camera.fy * y * inv_z**2
    return jac


def unproject(
    camera: Camera, pixel: npt.ArrayLike, inverse_depth: float
) -> npt.NDArray[np.float64]:
    """Back-project a pixel with inverse depth d to (1/d) K^-1 [u, v, 1]."""
    if not np.isfinite(inverse_depth) or inverse_depth <= 0:
        raise InvalidDepthError(f"Invalid inverse depth {inverse_depth}")
    u, v = np.asarray(pixel, dtype=np.float64)
    ray = np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    return ray / inverse_depth


def unproject_grid(camera: Camera, inv_depth: PixelGrid) -> PixelGrid:
    """Camera-frame points for every pixel, (H, W, 3); NaN where inv_depth <= 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = np.where(inv_depth > 0, 1.0 / inv_depth, np.nan)
    return camera.rays() * depth[..., None]


def sample_grid(
    grid: PixelGrid, uv: npt.NDArray[np.float64], mode: str = "bilinear"
) -> npt.NDArray[np.float64]:
    """
    Sample a scalar or vector grid at continuous pixel locations.

    Args:
        grid: (H, W) or (H, W, C) array
        uv: (..., 2) pixel coordinates
        mode: "bilinear" or "nearest"

    Returns:
        Sampled values of shape uv.shape[:-1] (+ (C,)); NaN outside the grid
    """
    height, width = grid.shape[:2]
    u = uv[..., 0]
    v = uv[..., 1]
    with np.errstate(invalid="ignore"):
        inside = (
            np.isfinite(u) & np.isfinite(v) & (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)
        )
    coords = np.stack([np.where(inside, v, 0.0).ravel(), np.where(inside, u, 0.0).ravel()])
    if mode == "nearest":
        coords = np.floor(coords + 0.5)
        order = 0
    elif mode == "bilinear":
        order = 1
    else:
        raise ValueError(f"Unknown sampling mode '{mode}'")

    def _sample(channel: PixelGrid) -> npt.NDArray[np.float64]:
        vals = map_coordinates(channel, coords, order=order, mode="nearest", prefilter=False)
        return np.where(inside.ravel(), vals, np.nan).reshape(u.shape)

    if grid.ndim == 2:
        return _sample(np.asarray(grid, dtype=np.float64))
    return np.stack(
        [_sample(np.asarray(grid[..., c], dtype=np.float64)) for c in range(grid.shape[2])],
        axis=-1,
    )
