"""Unit tests for SSIM and its gradient."""

import numpy as np
import pytest

from splatfusion.gsmap import ssim, ssim_map, ssim_with_grad
from splatfusion.gsmap.ssim import C1, C2, gaussian_window


def _reference_ssim_map(x: np.ndarray, y: np.ndarray, size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Windowed statistics summed explicitly, zero outside the image."""
    w1 = gaussian_window(size, sigma)
    w2 = np.outer(w1, w1)
    r = size // 2
    H, W = x.shape
    out = np.zeros_like(x)
    for i in range(H):
        for j in range(W):
            sx = sy = sxx = syy = sxy = 0.0
            for a in range(-r, r + 1):
                for b in range(-r, r + 1):
                    ii, jj = i + a, j + b
                    if 0 <= ii < H and 0 <= jj < W:
                        w = w2[a + r, b + r]
                        sx += w * x[ii, jj]
                        sy += w * y[ii, jj]
                        sxx += w * x[ii, jj] ** 2
                        syy += w * y[ii, jj] ** 2
                        sxy += w * x[ii, jj] * y[ii, jj]
            vx, vy, cxy = sxx - sx * sx, syy - sy * sy, sxy - sx * sy
            out[i, j] = ((2 * sx * sy + C1) * (2 * cxy + C2)) / (
                (sx * sx + sy * sy + C1) * (vx + vy + C2)
            )
    return out


def test_identical_images_score_one(rng) -> None:
    """Test SSIM of an image with itself is 1."""
    x = rng.random((12, 16, 3))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_window_taps_normalized() -> None:
    """Test the Gaussian window sums to one and rejects even sizes."""
    assert gaussian_window(11, 1.5).sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        gaussian_window(4, 1.5)


def test_ssim_map_matches_windowed_reference(rng) -> None:
    """Test the separable implementation against explicit windowed sums."""
    x = rng.random((12, 16))
    y = np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1)
    np.testing.assert_allclose(ssim_map(x, y), _reference_ssim_map(x, y), atol=1e-6)


def test_shape_mismatch_raises(rng) -> None:
    """Test images of different shape are rejected."""
    with pytest.raises(ValueError):
        ssim_map(rng.random((4, 4)), rng.random((4, 5)))


def test_gradient_matches_finite_differences(rng) -> None:
    """Test the analytic SSIM gradient with central differences."""
    x = rng.random((10, 12, 3))
    y = rng.random((10, 12, 3))
    value, grad = ssim_with_grad(x, y, 7, 1.5)
    assert value == pytest.approx(ssim(x, y, 7, 1.5))

    h = 1e-6
    for _ in range(20):
        idx = tuple(int(rng.integers(0, n)) for n in x.shape)
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd = (ssim(xp, y, 7, 1.5) - ssim(xm, y, 7, 1.5)) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)
