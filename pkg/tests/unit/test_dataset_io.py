"""Unit tests for sequence and artifact I/O."""

import numpy as np
import pytest

from splatfusion.geometry import se3_exp
from splatfusion.harness import dataset_io


def test_tum_round_trip(tmp_path, rng) -> None:
    """Test trajectories survive the TUM text format."""
    poses = [se3_exp(rng.normal(0, 0.5, 6)) for _ in range(5)]
    stamps = np.arange(5) / 30.0
    path = tmp_path / "traj.txt"
    dataset_io.write_tum(path, stamps, poses)

    read_stamps, read_poses = dataset_io.read_tum(path)

    np.testing.assert_allclose(read_stamps, stamps, atol=1e-9)
    for a, b in zip(read_poses, poses):
        assert a.allclose(b, atol=1e-8)
    assert path.read_text().startswith("# timestamp")


def test_tum_malformed(tmp_path) -> None:
    """Test a line with missing columns is rejected."""
    path = tmp_path / "bad.txt"
    path.write_text("0.0 1 2 3\n")
    with pytest.raises(ValueError):
        dataset_io.read_tum(path)


def test_png_round_trip(tmp_path, rng) -> None:
    """Test 8-bit PNG quantization."""
    image = rng.random((6, 7, 3))
    dataset_io.write_png(tmp_path / "a.png", image)
    np.testing.assert_allclose(dataset_io.read_png(tmp_path / "a.png"), image, atol=0.5 / 255 + 1e-12)


def test_depth_png_round_trip(tmp_path) -> None:
    """Test 16-bit depth at 5000 units per meter with zero as invalid."""
    depth = np.array([[1.0, 2.5], [np.nan, 0.0002]])
    dataset_io.write_depth_png(tmp_path / "d.png", depth)
    back = dataset_io.read_depth_png(tmp_path / "d.png")
    assert back[0, 0] == 1.0 and back[0, 1] == 2.5
    assert np.isnan(back[1, 0])
    assert back[1, 1] == pytest.approx(0.0002)


def test_raw_f32_round_trip(tmp_path, rng) -> None:
    """Test the width/height header and float32 body."""
    grid = rng.random((3, 5))
    path = tmp_path / "g.f32"
    dataset_io.write_raw_f32(path, grid)
    assert path.stat().st_size == 8 + 15 * 4
    np.testing.assert_allclose(dataset_io.read_raw_f32(path), grid, rtol=1e-7)
    with pytest.raises(ValueError):
        dataset_io.write_raw_f32(path, np.zeros((2, 2, 2)))


def test_camera_yaml_round_trip(tmp_path, camera) -> None:
    """Test intrinsics survive YAML."""
    path = tmp_path / "camera.yaml"
    dataset_io.write_camera_yaml(path, camera)
    assert dataset_io.read_camera_yaml(path) == camera
    path.write_text("fx: 1.0\n")
    with pytest.raises(ValueError):
        dataset_io.read_camera_yaml(path)


def test_write_sequence_layout(tmp_path, make_sequence, small_camera) -> None:
    """Test the on-disk sequence layout."""
    seq = make_sequence(2, camera=small_camera)
    out = dataset_io.write_sequence(seq, tmp_path / "seq")
    for sub in ("rgb", "depth"):
        assert sorted(p.name for p in (out / sub).iterdir()) == ["000000.png", "000001.png"]
    np.testing.assert_allclose(
        dataset_io.read_raw_f32(out / "mono" / "000001.f32"), seq.frames[1].mono_prior, rtol=1e-6
    )
    _, poses = dataset_io.read_tum(out / "groundtruth.txt")
    assert len(poses) == 2
    assert dataset_io.read_camera_yaml(out / "camera.yaml") == small_camera
