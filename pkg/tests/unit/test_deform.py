"""Unit tests for anchor-based map deformation."""

import numpy as np
import pytest

from splatfusion.errors import DanglingAnchorError
from splatfusion.geometry import Pose, se3_exp
from splatfusion.gsmap import deform_map, invert_updates, render


def test_identity_update_is_bit_identical(make_map, rng) -> None:
    """Test an unchanged pose leaves every parameter untouched."""
    gmap = make_map(rng)
    pose = se3_exp(np.array([0.1, 0.2, 0.0, 0.01, 0.0, 0.02]))
    out = deform_map(gmap, {0: (pose, pose)})
    for name in ("means", "rotations", "log_scales", "opacity_logits", "colors"):
        np.testing.assert_array_equal(getattr(out, name), getattr(gmap, name))


def test_rigid_update_preserves_view(small_camera, make_map, rng) -> None:
    """Test the deformed map seen from the new pose matches the original from the old."""
    gmap = make_map(rng, n=8)
    old = Pose.identity()
    new = se3_exp(np.array([0.3, -0.1, 0.2, 0.05, -0.1, 0.08]))

    moved = deform_map(gmap, {0: (old, new)})

    before = render(gmap, small_camera, old)
    after = render(moved, small_camera, new)
    np.testing.assert_allclose(after.color, before.color, atol=1e-6)
    np.testing.assert_allclose(after.depth, before.depth, atol=1e-6)
    np.testing.assert_array_equal(moved.log_scales, gmap.log_scales)


def test_only_updated_anchor_moves(make_map, rng) -> None:
    """Test Gaussians of other anchors are left alone."""
    a = make_map(rng, n=4, anchor=0)
    b = make_map(rng, n=4, anchor=5)
    a.extend(b)
    update = {5: (Pose.identity(), se3_exp(np.array([0.5, 0, 0, 0, 0, 0])))}

    out = deform_map(a, update)

    np.testing.assert_array_equal(out.means[:4], a.means[:4])
    np.testing.assert_allclose(out.means[4:], a.means[4:] + np.array([0.5, 0.0, 0.0]))


def test_inverse_update_restores_map(make_map, rng) -> None:
    """Test applying inverted updates undoes a deformation."""
    gmap = make_map(rng)
    updates = {0: (Pose.identity(), se3_exp(np.array([0.2, 0.1, -0.3, 0.1, 0.2, -0.1])))}
    restored = deform_map(deform_map(gmap, updates), invert_updates(updates))
    np.testing.assert_allclose(restored.means, gmap.means, atol=1e-12)
    np.testing.assert_allclose(restored.rotations, gmap.rotations, atol=1e-12)


def test_unknown_anchor_raises(make_map, rng) -> None:
    """Test an update for a keyframe the map does not know is rejected."""
    gmap = make_map(rng)
    with pytest.raises(DanglingAnchorError):
        deform_map(gmap, {3: (Pose.identity(), Pose.identity())})


def test_source_map_not_modified(make_map, rng) -> None:
    """Test deformation returns a copy."""
    gmap = make_map(rng)
    means = gmap.means.copy()
    deform_map(gmap, {0: (Pose.identity(), se3_exp(np.ones(6) * 0.1))})
    np.testing.assert_array_equal(gmap.means, means)
