"""Unit tests for the composite map loss and its analytic gradients."""

import numpy as np
import pytest

from splatfusion.config import MapLossConfig
from splatfusion.geometry import Pose, se3_exp, so3_exp
from splatfusion.gsmap import SupervisionFrame, map_loss, render, scale_regularizer


@pytest.fixture
def frames(small_camera, rng):
    H, W = small_camera.shape
    frames = []
    for k, twist in enumerate([np.zeros(6), np.array([0.08, 0.0, 0.02, 0.0, 0.03, 0.0])]):
        proxy = rng.uniform(1.5, 3.0, (H, W))
        proxy[rng.random((H, W)) < 0.2] = np.nan
        frames.append(SupervisionFrame(k, se3_exp(twist), rng.random((H, W, 3)), proxy))
    return frames


def _perturbed(gmap, group, j, c, h):
    out = gmap.copy()
    if group == "rotations":
        e = np.zeros(3)
        e[c] = h
        out.rotations[j] = out.rotations[j] @ so3_exp(e)
    elif group == "opacity_logits":
        out.opacity_logits[j] += h
    else:
        getattr(out, group)[j, c] += h
    return out


def test_gradients_match_finite_differences(small_camera, make_map, frames, rng) -> None:
    """Test every parameter group's gradient against central differences."""
    gmap = make_map(rng, n=6)
    config = MapLossConfig()
    _, grads = map_loss(gmap, small_camera, frames, config)

    def total(m):
        return map_loss(m, small_camera, frames, config, with_grad=False)[0].total

    groups = ["means", "rotations", "log_scales", "opacity_logits", "colors"]
    h = 1e-7
    for n in range(20):
        group = groups[n % len(groups)]
        j = int(rng.integers(0, len(gmap)))
        c = int(rng.integers(0, 3))
        fd = (total(_perturbed(gmap, group, j, c, h)) - total(_perturbed(gmap, group, j, c, -h))) / (2 * h)
        g = getattr(grads, group)
        analytic = g[j] if group == "opacity_logits" else g[j, c]
        assert analytic == pytest.approx(fd, rel=1e-3, abs=1e-6), f"{group}[{j}, {c}]"


def test_zero_mismatch_frame(small_camera, make_map, rng) -> None:
    """Test supervision equal to the rendering yields zero photometric and depth terms."""
    gmap = make_map(rng)
    pose = Pose.identity()
    out = render(gmap, small_camera, pose)
    frame = SupervisionFrame(0, pose, out.color.copy(), out.depth.copy())

    terms, _ = map_loss(gmap, small_camera, [frame], MapLossConfig())

    assert terms.l1 == 0.0
    assert terms.depth == 0.0
    assert terms.ssim == pytest.approx(0.0, abs=1e-12)
    assert terms.total == pytest.approx(terms.regularizer, abs=1e-12)


def test_total_is_weighted_sum(small_camera, make_map, frames, rng) -> None:
    """Test the per-frame weighting and the regularizer add up to the total."""
    config = MapLossConfig(lambda_ssim=0.3, lambda_depth=0.5, lambda_reg=2.0)
    gmap = make_map(rng)
    terms, grads = map_loss(gmap, small_camera, frames, config, with_grad=False)
    assert grads is None
    expected = 0.7 * terms.l1 + 0.3 * terms.ssim + 0.5 * terms.depth + terms.regularizer
    assert terms.total == pytest.approx(expected)
    assert len(terms.per_frame) == 2


def test_scale_regularizer_vanishes_for_isotropic() -> None:
    """Test isotropic scales are not penalized and anisotropy is."""
    value, grad = scale_regularizer(np.log(np.array([[0.2, 0.2, 0.2]])))
    assert value == pytest.approx(0.0)
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)
    assert scale_regularizer(np.log(np.array([[0.1, 0.2, 0.3]])))[0] == pytest.approx(0.02)


def test_empty_frames_rejected(small_camera, make_map, rng) -> None:
    """Test a loss without supervising frames is rejected."""
    with pytest.raises(ValueError):
        map_loss(make_map(rng), small_camera, [], MapLossConfig())
