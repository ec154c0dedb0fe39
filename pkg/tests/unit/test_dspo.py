"""Unit tests for error classification, scale/shift fitting and prior-regularized refinement."""

import numpy as np
import pytest

from splatfusion.config import TrackingConfig
from splatfusion.geometry import Pose
from splatfusion.tracking import (
    ErrorClass,
    Keyframe,
    classify_depth_errors,
    dspo_objective,
    dspo_refine,
    fit_scale_shift,
    geometric_residual,
    initialize_scale_shift,
)


def _keyframe(inv_depth: np.ndarray, mono: np.ndarray) -> Keyframe:
    h, w = inv_depth.shape
    return Keyframe(id=0, pose=Pose.identity(), image=np.zeros((h, w, 3)), inv_depth=inv_depth, mono_prior=mono)


def test_fit_recovers_exact_affine(rng: np.random.Generator) -> None:
    """Test exact affine inputs recover (scale, shift) to 1e-9."""
    mono = rng.uniform(1.0, 4.0, (12, 16))
    kf = _keyframe(0.8 / mono + 0.05, mono)

    fit = fit_scale_shift(kf)

    assert fit.scale == pytest.approx(0.8, abs=1e-9)
    assert fit.shift == pytest.approx(0.05, abs=1e-9)
    assert not fit.degenerate


def test_fit_matches_normal_equations_on_low_error_set(rng: np.random.Generator) -> None:
    """Test the closed form agrees with a least-squares oracle over low-error pixels."""
    mono = rng.uniform(1.0, 4.0, (12, 16))
    inv = 1.2 / mono + 0.1 + rng.normal(0, 0.01, mono.shape)
    kf = _keyframe(np.abs(inv), mono)
    low = rng.random(mono.shape) < 0.6
    kf.error_class = np.where(low, ErrorClass.LOW, ErrorClass.HIGH).astype(np.uint8)

    fit = fit_scale_shift(kf)

    x = 1.0 / mono[low]
    A = np.stack([x, np.ones_like(x)], axis=1)
    (scale, shift), *_ = np.linalg.lstsq(A, kf.inv_depth[low], rcond=None)
    assert fit.scale == pytest.approx(scale, abs=1e-9)
    assert fit.shift == pytest.approx(shift, abs=1e-9)
    assert fit.num_pixels == int(low.sum())


def test_fit_degenerate_prior_falls_back(rng: np.random.Generator) -> None:
    """Test a constant prior yields scale 1 and a mean-difference shift."""
    mono = np.full((6, 8), 2.0)
    inv = rng.uniform(0.3, 0.6, mono.shape)
    fit = fit_scale_shift(_keyframe(inv, mono))
    assert fit.degenerate
    assert fit.scale == 1.0
    assert fit.shift == pytest.approx(inv.mean() - 0.5)


def test_initialize_stores_on_keyframe(rng: np.random.Generator) -> None:
    """Test initialization writes the fit to the keyframe."""
    mono = rng.uniform(1.0, 4.0, (6, 8))
    kf = _keyframe(0.5 / mono + 0.2, mono)
    initialize_scale_shift(kf)
    assert kf.scale_initialized
    assert kf.scale == pytest.approx(0.5, abs=1e-9)
    assert kf.shift == pytest.approx(0.2, abs=1e-9)


def test_classification_threshold(make_sequence, make_graph) -> None:
    """Test counts strictly above the threshold are low-error."""
    graph = make_graph(make_sequence(2))
    counts = np.zeros(graph.camera.shape, dtype=np.int32)
    counts[:, :10] = 2
    counts[:, 10:20] = 3
    labels = classify_depth_errors(graph, 0, counts, TrackingConfig(consistency_threshold=2))
    assert np.all(labels[:, :10] == ErrorClass.HIGH)
    assert np.all(labels[:, 10:20] == ErrorClass.LOW)
    assert graph.keyframe(0).error_class is labels


def test_classification_shape_mismatch_raises(make_sequence, make_graph) -> None:
    """Test a count grid of the wrong size is rejected."""
    graph = make_graph(make_sequence(2))
    with pytest.raises(ValueError):
        classify_depth_errors(graph, 0, np.zeros((3, 3)), TrackingConfig())


def test_objective_zero_at_ground_truth(make_sequence, make_graph) -> None:
    """Test exact flow and an identity prior give a vanishing objective."""
    graph = make_graph(make_sequence(3))
    config = TrackingConfig()
    for kf in graph.vertices.values():
        kf.scale, kf.shift, kf.scale_initialized = 1.0, 0.0, True
        classify_depth_errors(graph, kf.id, np.full(kf.shape, 5), config)

    objective = dspo_objective(graph, config)

    assert objective.total < 1e-12


def test_refine_keeps_exact_alignment(make_sequence, make_graph) -> None:
    """Test refinement at the optimum keeps the true prior alignment."""
    seq = make_sequence(3, prior_scale=0.9, prior_shift=0.03)
    graph = make_graph(seq)
    config = TrackingConfig()
    for kf in graph.vertices.values():
        classify_depth_errors(graph, kf.id, np.full(kf.shape, 3), config)
        initialize_scale_shift(kf)
        assert kf.scale == pytest.approx(0.9, abs=1e-9)

    result = dspo_refine(graph, config)

    assert len(result.rounds) == config.dspo_rounds
    for k in graph.order:
        assert result.scale[k] == pytest.approx(0.9, abs=1e-6)
        assert result.shift[k] == pytest.approx(0.03, abs=1e-6)
    assert result.objective is not None and result.objective.total < 1e-6


def test_refine_pulls_high_error_depth_to_prior(make_sequence, make_graph) -> None:
    """Test high-error pixels move toward the aligned prior."""
    seq = make_sequence(3)
    graph = make_graph(seq)
    config = TrackingConfig(alpha1=0.05)
    kf = graph.keyframe(2)
    kf.inv_depth[:4, :4] *= 1.5
    for k in graph.order:
        counts = np.full(graph.camera.shape, 5)
        if k == 2:
            counts[:4, :4] = 0
        classify_depth_errors(graph, k, counts, config)
        keyframe = graph.keyframe(k)
        keyframe.scale, keyframe.shift, keyframe.scale_initialized = 1.0, 0.0, True

    before = np.abs(kf.inv_depth[:4, :4] - kf.aligned_prior_inv_depth()[:4, :4]).mean()
    dspo_refine(graph, config, include_geometric_stage=False)
    after = np.abs(kf.inv_depth[:4, :4] - kf.aligned_prior_inv_depth()[:4, :4]).mean()

    assert after < before


def _mark_high_error(graph, kf_id: int, block, config: TrackingConfig) -> None:
    """Classify `block` of one keyframe high-error, everything else low-error, identity prior."""
    for k in graph.order:
        counts = np.full(graph.camera.shape, config.consistency_threshold + 3)
        if k == kf_id:
            counts[block] = 0
        classify_depth_errors(graph, k, counts, config)
        keyframe = graph.keyframe(k)
        keyframe.scale, keyframe.shift, keyframe.scale_initialized = 1.0, 0.0, True


def test_refine_repairs_tripled_depth_with_exact_prior(make_sequence, make_graph) -> None:
    """Test depths tripled on a high-error block come back within 2% under an exact prior."""
    seq = make_sequence(3)
    graph = make_graph(seq)
    config = TrackingConfig()
    block = (slice(10, 20), slice(14, 26))
    kf = graph.keyframe(1)
    kf.inv_depth[block] /= 3.0
    _mark_high_error(graph, 1, block, config)

    dspo_refine(graph, config, include_geometric_stage=False)

    gt = seq.frames[1].gt_depth[block]
    rel = np.abs(kf.depth[block] - gt) / gt
    assert np.median(rel) < 0.02


def test_zero_high_error_weight_leaves_depth_to_geometry(make_sequence, make_graph) -> None:
    """Test alpha1 = 0 ignores a wrong prior on high-error pixels and the objective adds up."""
    seq = make_sequence(3)
    graph = make_graph(seq)
    config = TrackingConfig(alpha1=0.0)
    block = (slice(10, 20), slice(14, 26))
    kf = graph.keyframe(1)
    kf.inv_depth[block] *= 1.3
    kf.mono_prior = kf.mono_prior.copy()
    kf.mono_prior[block] *= 2.0
    _mark_high_error(graph, 1, block, config)

    result = dspo_refine(graph, config, include_geometric_stage=False)

    gt = seq.frames[1].gt_depth[block]
    assert np.median(np.abs(kf.depth[block] - gt) / gt) < 0.02
    assert np.median(np.abs(kf.depth[block] - kf.mono_prior[block]) / gt) > 0.5

    objective = result.objective
    assert objective is not None
    assert objective.high_prior == 0.0
    geometric = 0.0
    for edge in graph.edges_within(graph.window):
        for v in range(graph.camera.height):
            for u in range(graph.camera.width):
                res = geometric_residual(graph, edge, (u, v))
                if res.valid:
                    geometric += float(res.whitened @ res.whitened)
    low = 0.0
    for k in graph.order:
        keyframe = graph.keyframe(k)
        mask = keyframe.low_error_mask()
        diff = keyframe.inv_depth - (keyframe.scale / keyframe.mono_prior + keyframe.shift)
        low += config.alpha2 * float(np.sum(diff[mask] ** 2))
    assert objective.geometric == pytest.approx(geometric, abs=1e-9)
    assert objective.low_prior == pytest.approx(low, abs=1e-9)
    assert objective.total == pytest.approx(geometric + low, abs=1e-9)
