"""Unit tests for Adam map optimization."""

import numpy as np
import pytest

from splatfusion.config import MapLossConfig, MapOptimizerConfig
from splatfusion.errors import NonFiniteLossError
from splatfusion.geometry import Pose, se3_exp
from splatfusion.gsmap import SupervisionFrame, optimize_map, orthonormalize, render


def _targets(gmap, camera):
    frames = []
    for k, twist in enumerate([np.zeros(6), np.array([0.1, 0.0, 0.0, 0.0, 0.02, 0.0])]):
        pose = se3_exp(twist)
        out = render(gmap, camera, pose)
        frames.append(SupervisionFrame(k, pose, out.color, out.normalized_depth(0.05)))
    return frames


def test_optimization_reduces_loss(small_camera, make_map, rng) -> None:
    """Test Adam lowers the loss of a perturbed map toward its own renderings."""
    target = make_map(rng, n=8)
    frames = _targets(target, small_camera)
    gmap = target.copy()
    gmap.means += rng.normal(0.0, 0.05, gmap.means.shape)
    gmap.colors = np.clip(gmap.colors + rng.normal(0.0, 0.1, gmap.colors.shape), 0, 1)

    result = optimize_map(
        gmap, small_camera, frames, MapLossConfig(), MapOptimizerConfig(), iters=40, frames_per_iter=None
    )

    assert result.final_loss < result.initial_loss
    assert result.relative_decrease > 0
    assert len(result.history) == 40
    assert np.all((gmap.colors >= 0) & (gmap.colors <= 1))
    np.testing.assert_allclose(np.linalg.det(gmap.rotations), 1.0, atol=1e-9)


def test_non_finite_parameter_names_gaussian(small_camera, make_map, rng) -> None:
    """Test a NaN parameter aborts with the offending Gaussian's index."""
    gmap = make_map(rng)
    frames = _targets(gmap, small_camera)
    gmap.means[2] = np.nan
    with pytest.raises(NonFiniteLossError, match="Gaussian 2"):
        optimize_map(gmap, small_camera, frames, MapLossConfig(), MapOptimizerConfig(), iters=3)


def test_rejects_zero_iterations(small_camera, make_map, rng) -> None:
    """Test iters must be positive."""
    gmap = make_map(rng)
    with pytest.raises(ValueError):
        optimize_map(gmap, small_camera, _targets(gmap, small_camera), MapLossConfig(), MapOptimizerConfig(), 0)


def test_orthonormalize_projects_to_rotation(rng) -> None:
    """Test noisy matrices project to proper rotations."""
    R = np.eye(3)[None] + rng.normal(0, 0.05, (5, 3, 3))
    R[0] = -np.eye(3)
    out = orthonormalize(R)
    np.testing.assert_allclose(out @ np.swapaxes(out, 1, 2), np.broadcast_to(np.eye(3), (5, 3, 3)), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(out), 1.0, atol=1e-12)
