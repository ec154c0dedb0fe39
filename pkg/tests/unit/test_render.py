"""Unit tests for Gaussian initialization and the splatting renderer."""

import numpy as np
import pytest

from splatfusion.geometry import Pose, se3_exp
from splatfusion.gsmap import GaussianMap, init_gaussians, render
from splatfusion.gsmap.render import CUTOFF_SIGMA, NEAR_PLANE
from splatfusion.tracking import Keyframe


def _reference_render(gmap, camera, pose):
    """Per-pixel front-to-back compositing of every Gaussian."""
    W = pose.rotation.T
    splats = []
    for g in gmap:
        m = W @ (g.mean - pose.translation)
        x, y, z = m
        if z <= NEAR_PLANE:
            continue
        J = np.array(
            [[camera.fx / z, 0.0, -camera.fx * x / z**2], [0.0, camera.fy / z, -camera.fy * y / z**2]]
        )
        cov = J @ W @ g.covariance @ W.T @ J.T
        center = np.array([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy])
        splats.append((z, center, np.linalg.inv(cov), g.opacity, g.color))
    splats.sort(key=lambda s: s[0])

    H, Wd = camera.shape
    color = np.zeros((H, Wd, 3))
    depth = np.zeros((H, Wd))
    alpha = np.zeros((H, Wd))
    for v in range(H):
        for u in range(Wd):
            T = 1.0
            for z, center, Q, opacity, c in splats:
                d = np.array([u, v], dtype=float) - center
                q = d @ Q @ d
                if q > CUTOFF_SIGMA**2:
                    continue
                a = opacity * np.exp(-0.5 * q)
                color[v, u] += T * a * c
                depth[v, u] += T * a * z
                alpha[v, u] += T * a
                T *= 1.0 - a
    return color, depth, alpha


def test_render_matches_reference(small_camera, make_map, rng) -> None:
    """Test vectorized compositing against a per-pixel reference."""
    gmap = make_map(rng, n=8)
    pose = se3_exp(np.array([0.05, -0.02, 0.1, 0.02, -0.03, 0.01]))

    out = render(gmap, small_camera, pose)
    color, depth, alpha = _reference_render(gmap, small_camera, pose)

    np.testing.assert_allclose(out.color, color, atol=1e-10)
    np.testing.assert_allclose(out.depth, depth, atol=1e-10)
    np.testing.assert_allclose(out.alpha, alpha, atol=1e-10)
    assert out.num_visible > 0


def test_empty_map_renders_zeros(small_camera) -> None:
    """Test an empty map produces zero color, depth and alpha."""
    out = render(GaussianMap(), small_camera, Pose.identity())
    assert out.color.shape == (12, 16, 3)
    assert not out.color.any() and not out.depth.any() and not out.alpha.any()
    assert out.num_visible == 0


def test_gaussians_behind_camera_are_culled(small_camera, make_map, rng) -> None:
    """Test a map entirely behind the camera renders nothing."""
    gmap = make_map(rng)
    gmap.means[:, 2] *= -1.0
    out = render(gmap, small_camera, Pose.identity())
    assert out.num_visible == 0
    assert not out.alpha.any()


def test_alpha_bounded_and_normalized_depth(small_camera, make_map, rng) -> None:
    """Test accumulated alpha stays in [0, 1) and normalized depth is NaN where uncovered."""
    out = render(make_map(rng, n=10), small_camera, Pose.identity())
    assert np.all((out.alpha >= 0) & (out.alpha < 1))
    nd = out.normalized_depth(min_alpha=0.5)
    covered = out.alpha > 0.5
    assert np.all(np.isnan(nd[~covered]))
    assert np.all((nd[covered] >= 1.5 - 1e-9) & (nd[covered] <= 3.0 + 1e-9))


def test_init_gaussians_from_proxy(small_camera) -> None:
    """Test one Gaussian per valid strided pixel with a footprint-sized scale."""
    H, W = small_camera.shape
    depth = np.full((H, W), 2.0)
    depth[0, 0] = np.nan
    kf = Keyframe(
        id=7,
        pose=Pose(np.eye(3), np.array([1.0, 0.0, 0.0])),
        image=np.full((H, W, 3), 0.25),
        inv_depth=np.full((H, W), 0.5),
        mono_prior=np.full((H, W), 2.0),
    )

    gmap = init_gaussians(kf, depth, small_camera, stride=2)

    assert len(gmap) == (H // 2) * (W // 2) - 1
    assert np.all(gmap.anchors == 7)
    np.testing.assert_allclose(gmap.means[:, 2], 2.0)
    np.testing.assert_allclose(gmap.scales, 2.0 * 2 / small_camera.fx)
    np.testing.assert_allclose(gmap.opacities, 0.5)
    np.testing.assert_allclose(gmap.colors, 0.25)
    assert gmap[0].mean[0] == pytest.approx(1.0 + 2.0 * (2 - small_camera.cx) / small_camera.fx)


def test_init_gaussians_rejects_bad_stride(small_camera) -> None:
    """Test a zero stride is rejected."""
    H, W = small_camera.shape
    kf = Keyframe(0, Pose.identity(), np.zeros((H, W, 3)), np.ones((H, W)), np.ones((H, W)))
    with pytest.raises(ValueError):
        init_gaussians(kf, np.ones((H, W)), small_camera, stride=0)


def test_map_from_gaussians_rebuilds_arrays(make_map, rng) -> None:
    """Test a map rebuilt from its Gaussians matches the original arrays."""
    gmap = make_map(rng, n=5, anchor=3)
    rebuilt = GaussianMap.from_gaussians(list(gmap))
    for name in GaussianMap.PARAMETERS:
        np.testing.assert_array_equal(getattr(rebuilt, name), getattr(gmap, name))
    np.testing.assert_array_equal(rebuilt.anchors, [3] * 5)
    assert len(GaussianMap.from_gaussians([])) == 0
