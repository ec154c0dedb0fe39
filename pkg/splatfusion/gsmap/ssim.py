"""Structural similarity with a separable Gaussian window and its gradient.

Local statistics use an odd Gaussian window applied along the two image axes
with zero padding; the filter is symmetric, so it is its own adjoint.
"""

from functools import lru_cache
from typing import Tuple

import numpy as np
import numpy.typing as npt
from scipy.ndimage import correlate1d

ArrayF = npt.NDArray[np.float64]

C1 = 0.01**2
C2 = 0.03**2


@lru_cache(maxsize=8)
def gaussian_window(size: int = 11, sigma: float = 1.5) -> ArrayF:
    """Normalized 1-D Gaussian taps."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"window size must be a positive odd integer (got {size})")
    k = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(k**2) / (2.0 * sigma**2))
    w = w / w.sum()
    w.flags.writeable = False
    return w


def _blur(x: ArrayF, window: ArrayF) -> ArrayF:
    out = correlate1d(x, window, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, window, axis=1, mode="constant", cval=0.0)


def _statistics(x: ArrayF, y: ArrayF, window: ArrayF):
    mx = _blur(x, window)
    my = _blur(y, window)
    vx = _blur(x * x, window) - mx * mx
    vy = _blur(y * y, window) - my * my
    cxy = _blur(x * y, window) - mx * my
    A1 = 2.0 * mx * my + C1
    A2 = 2.0 * cxy + C2
    B1 = mx * mx + my * my + C1
    B2 = vx + vy + C2
    return mx, my, A1, A2, B1, B2


def ssim_map(x: npt.ArrayLike, y: npt.ArrayLike, size: int = 11, sigma: float = 1.5) -> ArrayF:
    """Per-pixel (and per-channel) SSIM of two images of equal shape."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"Image shapes differ: {x.shape} vs {y.shape}")
    _, _, A1, A2, B1, B2 = _statistics(x, y, gaussian_window(size, sigma))
    return (A1 * A2) / (B1 * B2)


def ssim(x: npt.ArrayLike, y: npt.ArrayLike, size: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over pixels and channels."""
    return float(np.mean(ssim_map(x, y, size, sigma)))


def ssim_with_grad(
    x: npt.ArrayLike, y: npt.ArrayLike, size: int = 11, sigma: float = 1.5
) -> Tuple[float, ArrayF]:
    """Mean SSIM and its gradient with respect to x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    window = gaussian_window(size, sigma)
    mx, my, A1, A2, B1, B2 = _statistics(x, y, window)
    num = A1 * A2
    den = B1 * B2
    S = num / den
    g = 1.0 / S.size

    d_mx = (2.0 * my * (A2 - A1) - S * 2.0 * mx * (B2 - B1)) / den
    den2 = den * B2
    t_xx = num / den2  # -dS/dE[x^2]
    t_xy = A1 * B2 / den2  # dS/dE[xy] / 2

    grad = (
        _blur(g * d_mx, window)
        + 2.0 * x * _blur(-g * t_xx, window)
        + y * _blur(2.0 * g * t_xy, window)
    )
    return float(np.mean(S)), grad
