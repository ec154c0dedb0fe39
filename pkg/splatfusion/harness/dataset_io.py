"""Reading and writing sequences, trajectories, depth maps and run artifacts."""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import cv2
import numpy as np
import numpy.typing as npt
import pandas as pd
import yaml

from splatfusion.geometry import Camera, Pose

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]
PathLike = Union[str, Path]

DEPTH_PNG_SCALE = 5000.0  # units per meter
RAW_HEADER = struct.Struct("<II")
TUM_COLUMNS = ["timestamp", "tx", "ty", "tz", "qx", "qy", "qz", "qw"]


def _ensure_parent(path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


def write_tum(path: PathLike, timestamps: Sequence[float], poses: Sequence[Pose]) -> None:
    """Write `timestamp tx ty tz qx qy qz qw` lines with a comment header."""
    if len(timestamps) != len(poses):
        raise ValueError("timestamps and poses differ in length")
    rows = [[t, *p.translation, *p.quaternion()] for t, p in zip(timestamps, poses)]
    df = pd.DataFrame(rows, columns=TUM_COLUMNS)
    path = _ensure_parent(Path(path))
    with open(path, "w") as f:
        f.write("# " + " ".join(TUM_COLUMNS) + "\n")
        df.to_csv(f, sep=" ", header=False, index=False, float_format="%.9f")
    logger.debug(f"Wrote {len(poses)} poses to {path}")


def read_tum(path: PathLike) -> Tuple[ArrayF, List[Pose]]:
    """Parse a TUM trajectory; returns (timestamps, poses)."""
    df = pd.read_csv(path, sep=r"\s+", comment="#", header=None, names=TUM_COLUMNS)
    if df.isnull().values.any():
        raise ValueError(f"{path}: malformed TUM trajectory")
    poses = [
        Pose.from_quaternion(row[["qx", "qy", "qz", "qw"]].to_numpy(), row[["tx", "ty", "tz"]].to_numpy())
        for _, row in df.iterrows()
    ]
    return df["timestamp"].to_numpy(dtype=np.float64), poses


# ---------------------------------------------------------------------------
# Images and depth
# ---------------------------------------------------------------------------


def write_png(path: PathLike, image: ArrayF) -> None:
    """RGB float image in [0, 1] to an 8-bit PNG."""
    rgb = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    path = _ensure_parent(Path(path))
    if not cv2.imwrite(str(path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise OSError(f"Could not write {path}")


def read_png(path: PathLike) -> ArrayF:
    """8-bit PNG to an RGB float image in [0, 1]."""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise OSError(f"Could not read {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0


def write_depth_png(path: PathLike, depth: ArrayF) -> None:
    """Depth in meters to a 16-bit PNG (5000 units per meter, 0 = invalid)."""
    d = np.asarray(depth, dtype=np.float64)
    units = np.where(np.isfinite(d) & (d > 0), np.rint(d * DEPTH_PNG_SCALE), 0)
    path = _ensure_parent(Path(path))
    if not cv2.imwrite(str(path), np.clip(units, 0, 65535).astype(np.uint16)):
        raise OSError(f"Could not write {path}")


def read_depth_png(path: PathLike) -> ArrayF:
    """16-bit depth PNG to meters; zero pixels become NaN."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise OSError(f"Could not read {path}")
    depth = raw.astype(np.float64) / DEPTH_PNG_SCALE
    return np.where(raw > 0, depth, np.nan)


def write_raw_f32(path: PathLike, grid: ArrayF) -> None:
    """(H, W) grid as width u32, height u32, then row-major little-endian float32."""
    g = np.asarray(grid)
    if g.ndim != 2:
        raise ValueError(f"raw f32 grids must be 2-D (got shape {g.shape})")
    h, w = g.shape
    path = _ensure_parent(Path(path))
    with open(path, "wb") as f:
        f.write(RAW_HEADER.pack(w, h))
        f.write(g.astype("<f4").tobytes())


def read_raw_f32(path: PathLike) -> ArrayF:
    data = Path(path).read_bytes()
    w, h = RAW_HEADER.unpack_from(data, 0)
    body = np.frombuffer(data, dtype="<f4", offset=RAW_HEADER.size)
    if body.size != w * h:
        raise ValueError(f"{path}: expected {w * h} values, found {body.size}")
    return body.reshape(h, w).astype(np.float64)


# ---------------------------------------------------------------------------
# Camera, confidence and reports
# ---------------------------------------------------------------------------


def write_camera_yaml(path: PathLike, camera: Camera) -> None:
    path = _ensure_parent(Path(path))
    with open(path, "w") as f:
        yaml.safe_dump(camera.to_dict(), f, default_flow_style=False, sort_keys=False)


def read_camera_yaml(path: PathLike) -> Camera:
    with open(path, "r") as f:
        data = yaml.safe_load(f) or {}
    try:
        return Camera(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )
    except KeyError as e:
        raise ValueError(f"{path}: missing camera field {e}") from None


def write_confidence(directory: PathLike, kf_id: int, counts: npt.ArrayLike, w_mv: ArrayF) -> None:
    """Consistency counts as a 16-bit PNG and w_mv as raw float32."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    c = np.clip(np.asarray(counts), 0, 65535).astype(np.uint16)
    if not cv2.imwrite(str(directory / f"{kf_id:06d}_counts.png"), c):
        raise OSError(f"Could not write confidence counts for keyframe {kf_id}")
    write_raw_f32(directory / f"{kf_id:06d}_wmv.f32", w_mv)


def write_report_json(path: PathLike, report: Dict[str, Any]) -> None:
    path = _ensure_parent(Path(path))
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)


def read_report_json(path: PathLike) -> Dict[str, Any]:
    with open(path, "r") as f:
        return json.load(f)


def write_sequence(sequence, directory: PathLike) -> Path:
    """
    Write a synthetic sequence to disk.

    Layout: rgb/NNNNNN.png, depth/NNNNNN.png (16-bit), mono/NNNNNN.f32,
    groundtruth.txt (TUM) and camera.yaml.

    Returns:
        The output directory
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for frame in sequence.frames:
        name = f"{frame.index:06d}"
        write_png(out / "rgb" / f"{name}.png", frame.image)
        write_depth_png(out / "depth" / f"{name}.png", frame.gt_depth)
        write_raw_f32(out / "mono" / f"{name}.f32", frame.mono_prior)
    write_tum(out / "groundtruth.txt", [f.timestamp for f in sequence.frames], sequence.gt_poses)
    write_camera_yaml(out / "camera.yaml", sequence.camera)
    logger.info(f"Wrote {len(sequence.frames)} frames to {out}")
    return out
