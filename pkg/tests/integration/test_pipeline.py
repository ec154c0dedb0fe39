"""Integration tests for the end-to-end pipeline."""

from pathlib import Path

import numpy as np
import pytest

from splatfusion.config import Config
from splatfusion.fusion import scaled_prior_depth
from splatfusion.harness import dataset_io
from splatfusion.harness.metrics import NEAR_RANGE, ate_rmse, depth_l1
from splatfusion.harness.pipeline import run_pipeline
from splatfusion.harness.report import RunReport
from splatfusion.harness.scenarios import default_camera, get_scenario, lateral_trajectory, room
from splatfusion.harness.simulate import SequenceSpec, generate_sequence


def _config(scene: str, seed: int = 0, **pipeline) -> Config:
    config = Config()
    config.pipeline.scene = scene
    config.pipeline.seed = seed
    config.pipeline.write_artifacts = False
    for key, value in pipeline.items():
        setattr(config.pipeline, key, value)
    config.validate()
    return config


@pytest.mark.integration
@pytest.mark.slow
def test_smoke_run_writes_complete_report(tmp_path: Path) -> None:
    """Test the smoke scene runs end to end and writes every artifact."""
    config = _config("smoke", write_artifacts=True)
    result = run_pipeline(config, output_dir=tmp_path)
    report = result.report

    assert report.non_finite() == []
    assert report.num_frames == 12
    assert 2 <= report.num_keyframes <= 12
    assert report.gaussian_count > 0
    assert report.ate_rmse < 0.05
    assert set(report.timings) >= {"simulate", "tracking", "fusion", "mapping", "metrics"}

    saved = dataset_io.read_report_json(tmp_path / "report.json")
    assert RunReport.from_dict(saved).metrics() == report.metrics()
    for name in ("trajectory.txt", "map.cspl", "map_points.txt", "camera.yaml", "trajectory.png"):
        assert (tmp_path / name).exists(), name
    first = f"{result.graph.order[0]:06d}"
    assert (tmp_path / "proxy_depth" / f"{first}.png").exists()
    assert (tmp_path / "renders" / f"{first}.png").exists()
    assert (tmp_path / "confidence" / f"{first}_wmv.png").exists()


@pytest.mark.integration
@pytest.mark.slow
def test_runs_are_deterministic() -> None:
    """Test repeated runs and threaded vs sequential mapping give identical metrics."""
    first = run_pipeline(_config("smoke")).report.metrics()
    second = run_pipeline(_config("smoke")).report.metrics()
    sequential = run_pipeline(_config("smoke", sequential=True)).report.metrics()
    assert first == second
    assert first == sequential


@pytest.mark.integration
@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_fusion_beats_either_source_on_corrupted_depth(seed: int) -> None:
    """Test fused proxy depth beats pure multi-view and pure prior depth."""
    result = run_pipeline(_config("corrupt", seed=seed))

    fused, multiview, prior = [], [], []
    for k in result.graph.order:
        kf = result.graph.keyframe(k)
        gt = result.sequence.frames[k].gt_depth
        fused.append(depth_l1(result.proxies[k].depth, gt))
        multiview.append(depth_l1(kf.depth, gt))
        prior.append(depth_l1(scaled_prior_depth(kf.mono_prior, kf.scale, kf.shift)[0], gt))

    assert np.mean(fused) < np.mean(multiview)
    assert np.mean(fused) < np.mean(prior)


@pytest.mark.integration
@pytest.mark.slow
def test_fusion_disabled_is_worse() -> None:
    """Test forcing full multi-view weight raises the overall depth error."""
    scene, spec = get_scenario("corrupt", 0)
    sequence = generate_sequence(scene, spec)
    enabled = run_pipeline(_config("corrupt"), sequence=sequence).report
    disabled = run_pipeline(_config("corrupt", fusion_enabled=False), sequence=sequence).report
    assert enabled.depth_l1_overall < disabled.depth_l1_overall


@pytest.mark.integration
@pytest.mark.slow
def test_loop_closure_removes_drift() -> None:
    """Test loop edges cut the tracked trajectory error fourfold and are needed to do so."""
    scene, spec = get_scenario("loop", 0)
    sequence = generate_sequence(scene, spec)
    closed = run_pipeline(_config("loop"), sequence=sequence)
    open_ = run_pipeline(_config("loop", loop_closure_enabled=False), sequence=sequence)

    assert len(closed.tracked_estimate) == len(sequence)
    tracked = ate_rmse(closed.tracked_estimate, sequence.gt_poses)
    assert closed.report.ate_rmse_tracked == pytest.approx(tracked)
    assert closed.report.num_loops > 0
    assert open_.report.num_loops == 0
    assert closed.report.ate_rmse <= 0.25 * closed.report.ate_rmse_tracked
    assert open_.report.ate_rmse > 0.25 * open_.report.ate_rmse_tracked


@pytest.mark.integration
@pytest.mark.slow
def test_far_scene_leaves_near_depth_unset() -> None:
    """Test a scene entirely beyond the near range runs through with no near-depth score."""
    scene = room(depth=6.0, half_width=8.0, floor=5.0, ceiling=-5.0)
    spec = SequenceSpec(
        trajectory=lateral_trajectory(5, 0.5), camera=default_camera(), seed=0, name="far"
    )
    sequence = generate_sequence(scene, spec)
    assert all(np.nanmin(f.gt_depth) > NEAR_RANGE for f in sequence.frames)

    report = run_pipeline(_config("smoke"), sequence=sequence).report

    assert report.depth_l1_near is None
    assert report.non_finite() == []
    assert report.num_keyframes >= 2
