"""Unit tests for the command-line interface."""

import logging
from pathlib import Path
from typing import Callable

import numpy as np
import pytest
from typer.testing import CliRunner

from splatfusion import __version__
from splatfusion.cli import EXIT_CONFIG_ERROR, app
from splatfusion.config import Config
from splatfusion.geometry import Pose
from splatfusion.gsmap import GaussianMap, save_map
from splatfusion.harness import dataset_io
from splatfusion.harness.scenarios import default_camera, lateral_trajectory
from splatfusion.logging_setup import setup_logging

runner = CliRunner()


def test_version() -> None:
    """Test the version command."""
    result = runner.invoke(app, ["version"])
    assert result.exit_code == 0
    assert __version__ in result.stdout


def test_init_writes_loadable_config(tmp_path: Path) -> None:
    """Test init writes a config that loads back as the defaults."""
    path = tmp_path / "config.yaml"
    result = runner.invoke(app, ["init", "--config", str(path)])
    assert result.exit_code == 0
    assert Config.load(path).to_dict() == Config().to_dict()


def test_run_rejects_invalid_config(tmp_path: Path) -> None:
    """Test an invalid config file exits with the config error code."""
    path = tmp_path / "bad.yaml"
    path.write_text("fusion:\n  eta: -1\n")
    result = runner.invoke(app, ["run", "--config", str(path)])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_run_rejects_unknown_scene() -> None:
    """Test an unknown scene preset exits before any work."""
    result = runner.invoke(app, ["run", "--scene", "atlantis"])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_simulate_writes_sequence(tmp_path: Path) -> None:
    """Test simulate writes images, depth, priors and ground truth."""
    out = tmp_path / "smoke"
    result = runner.invoke(app, ["simulate", "--scene", "smoke", "--output", str(out)])
    assert result.exit_code == 0
    assert len(list((out / "rgb").glob("*.png"))) == 12
    assert len(list((out / "mono").glob("*.f32"))) == 12
    _, poses = dataset_io.read_tum(out / "groundtruth.txt")
    assert len(poses) == 12
    assert dataset_io.read_camera_yaml(out / "camera.yaml") == default_camera()


def test_simulate_unknown_scene(tmp_path: Path) -> None:
    """Test simulate rejects unknown presets."""
    result = runner.invoke(app, ["simulate", "--scene", "atlantis", "--output", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_evaluate_trajectory_files(tmp_path: Path) -> None:
    """Test evaluate on identical trajectories and depth directories."""
    poses = lateral_trajectory(6, 0.2)
    stamps = [k / 30.0 for k in range(6)]
    dataset_io.write_tum(tmp_path / "est.txt", stamps, poses)
    dataset_io.write_tum(tmp_path / "gt.txt", stamps, poses)
    depth = np.full((30, 40), 2.0)
    dataset_io.write_depth_png(tmp_path / "est" / "000000.png", depth)
    dataset_io.write_depth_png(tmp_path / "gt" / "000000.png", depth)

    result = runner.invoke(
        app,
        [
            "evaluate",
            "--est", str(tmp_path / "est.txt"),
            "--gt", str(tmp_path / "gt.txt"),
            "--est-depth", str(tmp_path / "est"),
            "--gt-depth", str(tmp_path / "gt"),
        ],
    )
    assert result.exit_code == 0
    assert "ATE RMSE" in result.stdout


def test_evaluate_unknown_alignment(tmp_path: Path) -> None:
    """Test evaluate rejects an unknown alignment mode."""
    result = runner.invoke(
        app,
        ["evaluate", "--est", str(tmp_path / "a"), "--gt", str(tmp_path / "b"), "--align", "affine"],
    )
    assert result.exit_code == EXIT_CONFIG_ERROR


def test_render_saved_map(
    tmp_path: Path, rng: np.random.Generator, make_map: Callable[..., GaussianMap]
) -> None:
    """Test render writes a color and depth image per pose."""
    camera = default_camera()
    save_map(make_map(rng, n=10), tmp_path / "map.cspl")
    dataset_io.write_tum(tmp_path / "traj.txt", [0.0, 0.1], [Pose.identity()] * 2)
    dataset_io.write_camera_yaml(tmp_path / "camera.yaml", camera)

    out = tmp_path / "renders"
    result = runner.invoke(
        app,
        [
            "render",
            "--map", str(tmp_path / "map.cspl"),
            "--trajectory", str(tmp_path / "traj.txt"),
            "--camera", str(tmp_path / "camera.yaml"),
            "--output", str(out),
        ],
    )
    assert result.exit_code == 0
    assert sorted(p.name for p in out.glob("*.png")) == [
        "000000.png",
        "000000_depth.png",
        "000001.png",
        "000001_depth.png",
    ]


def test_setup_logging_file_handler(tmp_path: Path) -> None:
    """Test debug records reach the log file but not the console handler."""
    log_file = tmp_path / "logs" / "run.log"
    logger = setup_logging(level="DEBUG", log_file=str(log_file))
    try:
        logging.getLogger("splatfusion.tracking").debug("solver chatter")
        for handler in logger.handlers:
            handler.flush()
        assert "solver chatter" in log_file.read_text()
        console = [h for h in logger.handlers if not isinstance(h, logging.FileHandler)]
        assert console[0].level == logging.INFO
    finally:
        for handler in logger.handlers:
            handler.close()
        logger.handlers.clear()


@pytest.mark.parametrize("level", ["WARNING", "error"])
def test_setup_logging_levels(level: str) -> None:
    """Test the level name is case-insensitive."""
    logger = setup_logging(level=level)
    assert logger.level == getattr(logging, level.upper())
    logger.handlers.clear()


def test_setup_logging_console_level() -> None:
    """Test the console floor can be raised above the package level."""
    logger = setup_logging(level="DEBUG", console_level="WARNING")
    assert logger.level == logging.DEBUG
    assert logger.handlers[0].level == logging.WARNING
    assert logging.getLogger("matplotlib").level == logging.WARNING
    logger.handlers.clear()
