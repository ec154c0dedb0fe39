"""Unit tests for the run report and its plots."""

from pathlib import Path

import numpy as np

from splatfusion.geometry import Pose, Similarity
from splatfusion.harness.report import RunReport, plot_confidence, plot_trajectory
from splatfusion.harness.scenarios import lateral_trajectory


def _report(**overrides) -> RunReport:
    values = dict(
        scene="smoke",
        seed=0,
        num_frames=12,
        num_keyframes=6,
        num_loops=0,
        ate_rmse=0.01,
        ate_mean=0.009,
        ate_median=0.008,
        ate_rmse_frontend=0.02,
        ate_rmse_tracked=0.018,
        depth_l1_overall=0.05,
        depth_l1_near=0.04,
        render_depth_l1=0.06,
        psnr=24.0,
        ssim=0.8,
        accuracy=0.02,
        completion=0.03,
        completion_ratio=0.9,
        chamfer_l1=0.025,
        gaussian_count=500,
        map_size_mb=0.03,
        fps=3.0,
        total_seconds=4.0,
        timings={"tracking": 1.0},
    )
    values.update(overrides)
    return RunReport(**values)


def test_metrics_exclude_wall_clock() -> None:
    """Test metrics() drops the timing fields."""
    report = _report()
    metrics = report.metrics()
    assert "fps" not in metrics
    assert "total_seconds" not in metrics
    assert "timings" not in metrics
    assert metrics["ate_rmse"] == 0.01
    assert _report(fps=99.0, timings={}).metrics() == metrics


def test_non_finite_lists_bad_fields() -> None:
    """Test NaN and infinite metrics are reported by name."""
    assert _report().non_finite() == []
    bad = _report(psnr=float("inf"), depth_l1_near=float("nan"), fps=float("nan"))
    assert sorted(bad.non_finite()) == ["depth_l1_near", "psnr"]


def test_from_dict_ignores_unknown_keys() -> None:
    """Test a report dict with extra keys loads back."""
    report = _report()
    data = report.to_dict()
    data["written_by"] = "someone"
    assert RunReport.from_dict(data) == report


def test_unscored_optional_metrics_are_not_flagged() -> None:
    """Test a far scene with no near pixels leaves optional metrics unset, not NaN."""
    report = _report(depth_l1_near=None, render_depth_l1=None)
    assert report.non_finite() == []
    assert RunReport.from_dict(report.to_dict()) == report


def test_plot_trajectory_writes_png(tmp_path: Path) -> None:
    """Test the trajectory plot is written, with and without alignment."""
    gt = lateral_trajectory(6, 0.2)
    estimate = [Pose(p.rotation, p.translation + 0.01) for p in gt]
    alignment = Similarity(1.0, np.eye(3), np.array([-0.01, -0.01, -0.01]))

    out = tmp_path / "plots" / "trajectory.png"
    plot_trajectory(out, gt, estimate, frontend=gt, alignment=alignment)
    assert out.exists() and out.stat().st_size > 0

    bare = tmp_path / "bare.png"
    plot_trajectory(bare, gt, estimate)
    assert bare.exists()


def test_plot_confidence_writes_png(tmp_path: Path) -> None:
    """Test the confidence heat-map is written."""
    out = tmp_path / "conf" / "000000_wmv.png"
    plot_confidence(out, np.linspace(0.0, 1.0, 12).reshape(3, 4), "Keyframe 0")
    assert out.exists() and out.stat().st_size > 0
