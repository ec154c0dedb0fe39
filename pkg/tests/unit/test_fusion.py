"""Unit tests for consistency counting, confidence weights and proxy-depth fusion."""

import math

import numpy as np
import pytest

from splatfusion.config import FusionConfig
from splatfusion.fusion import (
    ConfidenceMap,
    compute_weights,
    consistency_count,
    consistency_counts,
    consistency_tolerance,
    fuse_keyframe,
    fuse_proxy_depth,
    scaled_prior_depth,
)
from splatfusion.geometry.camera import MIN_DEPTH


def _bilinear(grid: np.ndarray, u: float, v: float) -> float:
    h, w = grid.shape
    u0, v0 = int(math.floor(u)), int(math.floor(v))
    u1, v1 = min(u0 + 1, w - 1), min(v0 + 1, h - 1)
    fu, fv = u - u0, v - v0
    return (
        (1 - fu) * (1 - fv) * grid[v0, u0]
        + fu * (1 - fv) * grid[v0, u1]
        + (1 - fu) * fv * grid[v1, u0]
        + fu * fv * grid[v1, u1]
    )


def _brute_force_counts(graph, kf_id, neighbors, eta):
    """Pixel-by-pixel reference for consistency_count."""
    cam = graph.camera
    kf = graph.keyframe(kf_id)
    depth = kf.depth
    tol = eta * depth.mean()
    counts = np.zeros(cam.shape, dtype=np.int32)
    for y in range(cam.height):
        for x in range(cam.width):
            ray = np.array([(x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0])
            X = kf.pose.rotation @ (ray * depth[y, x]) + kf.pose.translation
            for k in neighbors:
                nb = graph.keyframe(k)
                Xc = nb.pose.rotation.T @ (X - nb.pose.translation)
                if Xc[2] <= MIN_DEPTH:
                    continue
                u = cam.fx * Xc[0] / Xc[2] + cam.cx
                v = cam.fy * Xc[1] / Xc[2] + cam.cy
                if not (0 <= u <= cam.width - 1 and 0 <= v <= cam.height - 1):
                    continue
                d = _bilinear(nb.depth, u, v)
                ray_k = np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0])
                Xk = nb.pose.rotation @ (ray_k * d) + nb.pose.translation
                if np.linalg.norm(X - Xk) < tol:
                    counts[y, x] += 1
    return counts


def test_weights_sum_to_one_and_bound_fusion(rng: np.random.Generator) -> None:
    """Test weight algebra and the fused-depth bounds over many random grids."""
    config = FusionConfig(n_key=30)
    counts = rng.integers(0, 60, size=(10000, 8, 8))
    weights = compute_weights(counts, config)

    assert np.all(weights.w_mv + weights.w_mono == 1.0)
    assert np.all((weights.w_mv >= 0) & (weights.w_mv <= 1))
    assert np.all(weights.w_mv[counts >= 30] == 1.0)

    mv = rng.uniform(0.5, 6.0, counts.shape)
    mono = rng.uniform(0.5, 6.0, counts.shape)
    proxy = fuse_proxy_depth(mv, mono, 1.0, 0.0, weights)
    # 1 / (1 / mono) can sit one ulp away from mono
    prior, _ = scaled_prior_depth(mono, 1.0, 0.0)
    np.testing.assert_allclose(prior, mono, rtol=1e-15)
    assert np.all(proxy.depth >= np.minimum(mv, prior))
    assert np.all(proxy.depth <= np.maximum(mv, prior))


def test_weight_extremes_select_one_source(rng: np.random.Generator) -> None:
    """Test zero counts give the prior and saturated counts give multi-view depth."""
    mv = rng.uniform(1.0, 3.0, (4, 5))
    mono = rng.uniform(1.0, 3.0, (4, 5))
    zero = compute_weights(np.zeros((4, 5), dtype=int), FusionConfig())
    full = compute_weights(np.full((4, 5), 50), FusionConfig())
    np.testing.assert_array_equal(fuse_proxy_depth(mv, mono, 1.0, 0.0, zero).depth, 1.0 / (1.0 / mono))
    np.testing.assert_array_equal(fuse_proxy_depth(mv, mono, 1.0, 0.0, full).depth, mv)


def test_negative_counts_rejected() -> None:
    """Test negative counts are invalid."""
    with pytest.raises(ValueError):
        compute_weights(np.array([[-1, 2]]), FusionConfig())


def test_invalid_prior_falls_back_to_multiview() -> None:
    """Test a non-positive aligned prior uses the multi-view depth."""
    mv = np.array([[2.0, 2.0]])
    mono = np.array([[1.0, 4.0]])
    # aligned inverse depth: 0.5 / mono - 0.2 -> [0.3, -0.075]
    depth, invalid = scaled_prior_depth(mono, 0.5, -0.2)
    assert invalid.tolist() == [[False, True]]
    assert np.isnan(depth[0, 1])

    proxy = fuse_proxy_depth(mv, mono, 0.5, -0.2, compute_weights(np.zeros((1, 2), int), FusionConfig()))
    assert proxy.depth[0, 0] == pytest.approx(1.0 / 0.3)
    assert proxy.depth[0, 1] == 2.0
    assert proxy.invalid_prior.tolist() == [[False, True]]
    assert proxy.valid.all()


def test_non_positive_scale_rejected() -> None:
    """Test fusion refuses a non-positive scale."""
    weights = ConfidenceMap.multiview_only((1, 1))
    with pytest.raises(ValueError):
        fuse_proxy_depth(np.ones((1, 1)), np.ones((1, 1)), 0.0, 0.0, weights)


def test_tolerance_ignores_invalid_pixels() -> None:
    """Test the tolerance averages only finite positive depths."""
    depth = np.array([[1.0, 3.0, np.nan, -1.0]])
    assert consistency_tolerance(depth, 0.1) == pytest.approx(0.2)
    assert consistency_tolerance(np.full((2, 2), np.nan), 0.1) == 0.0


def test_counts_match_brute_force(small_camera, make_sequence, make_graph, rng) -> None:
    """Test vectorized counts equal a per-pixel reference over random perturbations."""
    sequence = make_sequence(3, step=0.12, camera=small_camera)
    base = make_graph(sequence)
    clean = {k: base.keyframe(k).inv_depth.copy() for k in base.order}

    for _ in range(50):
        eta = float(rng.uniform(0.005, 0.05))
        for k in base.order:
            noise = rng.uniform(0.85, 1.15, small_camera.shape)
            keep = rng.random(small_camera.shape) < 0.5
            base.keyframe(k).inv_depth = np.where(keep, clean[k], clean[k] * noise)
        kf_id = int(rng.integers(0, 3))
        neighbors = [k for k in base.order if k != kf_id]

        counts = consistency_count(base, kf_id, neighbors, FusionConfig(eta=eta))

        np.testing.assert_array_equal(counts, _brute_force_counts(base, kf_id, neighbors, eta))


def test_exact_depths_are_consistent(make_sequence, make_graph) -> None:
    """Test ground-truth depths are consistent wherever the neighbour sees the point."""
    graph = make_graph(make_sequence(3))
    counts = consistency_count(graph, 1, [0, 2], FusionConfig())
    assert counts.max() == 2
    # central pixels are visible from both neighbours
    h, w = graph.camera.shape
    assert np.all(counts[h // 3 : 2 * h // 3, w // 3 : 2 * w // 3] == 2)


def test_no_neighbors_gives_zero(make_sequence, make_graph) -> None:
    """Test scoring against itself only yields zero counts."""
    graph = make_graph(make_sequence(2))
    assert not consistency_count(graph, 0, [0], FusionConfig()).any()


def test_parallel_counts_equal_sequential(make_sequence, make_graph) -> None:
    """Test threaded scoring matches the sequential path."""
    graph = make_graph(make_sequence(4))
    serial = consistency_counts(graph, graph.order, FusionConfig(), n_jobs=1)
    threaded = consistency_counts(graph, graph.order, FusionConfig(), n_jobs=2)
    for k in graph.order:
        np.testing.assert_array_equal(serial[k], threaded[k])


def test_fuse_keyframe_uses_stored_alignment(make_sequence, make_graph) -> None:
    """Test keyframe fusion applies the keyframe's scale and shift."""
    graph = make_graph(make_sequence(2, prior_scale=0.9, prior_shift=0.03))
    kf = graph.keyframe(0)
    kf.scale, kf.shift = 0.9, 0.03
    proxy = fuse_keyframe(kf, compute_weights(np.zeros(kf.shape, int), FusionConfig()))
    np.testing.assert_allclose(proxy.depth, kf.depth, rtol=1e-9)
