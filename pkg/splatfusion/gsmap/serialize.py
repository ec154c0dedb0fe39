"""Versioned binary map format and plain-text point-cloud export.

Layout (little-endian):
    header   magic b"CSPL", version u32, count u64
    record   mean 3xf32, quaternion xyzw 4xf32, log_scales 3xf32,
             opacity_logit f32, color 3xf32, anchor u32
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
from scipy.spatial.transform import Rotation

from splatfusion.gsmap.gaussians import GaussianMap

logger = logging.getLogger(__name__)

MAGIC = b"CSPL"
VERSION = 1
HEADER = struct.Struct("<4sIQ")
RECORD = np.dtype(
    [
        ("mean", "<f4", (3,)),
        ("quat", "<f4", (4,)),
        ("log_scales", "<f4", (3,)),
        ("opacity_logit", "<f4"),
        ("color", "<f4", (3,)),
        ("anchor", "<u4"),
    ]
)

PathLike = Union[str, Path]


def save_map(gmap: GaussianMap, path: PathLike) -> int:
    """
    Write the map to a CSPL file.

    Returns:
        Number of bytes written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = len(gmap)
    records = np.zeros(n, dtype=RECORD)
    if n:
        records["mean"] = gmap.means
        records["quat"] = Rotation.from_matrix(gmap.rotations).as_quat()
        records["log_scales"] = gmap.log_scales
        records["opacity_logit"] = gmap.opacity_logits
        records["color"] = gmap.colors
        records["anchor"] = gmap.anchors
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, VERSION, n))
        f.write(records.tobytes())
    size = HEADER.size + records.nbytes
    logger.info(f"Saved {n} Gaussians to {path} ({size / 1e6:.3f} MB)")
    return size


def load_map(path: PathLike) -> GaussianMap:
    """Read a CSPL file; raises ValueError on a bad header or truncated body."""
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise ValueError(f"{path}: file too short for a CSPL header")
    magic, version, n = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported CSPL version {version}")
    body = data[HEADER.size :]
    if len(body) != n * RECORD.itemsize:
        raise ValueError(f"{path}: expected {n} records, body has {len(body)} bytes")
    records = np.frombuffer(body, dtype=RECORD, count=n)
    if n == 0:
        return GaussianMap()
    return GaussianMap(
        means=records["mean"].astype(np.float64),
        rotations=Rotation.from_quat(records["quat"].astype(np.float64)).as_matrix(),
        log_scales=records["log_scales"].astype(np.float64),
        opacity_logits=records["opacity_logit"].astype(np.float64),
        colors=records["color"].astype(np.float64),
        anchors=records["anchor"].astype(np.int64),
    )


def map_size_bytes(num_gaussians: int) -> int:
    """Serialized size of a map with the given Gaussian count."""
    return HEADER.size + num_gaussians * RECORD.itemsize


def export_point_cloud(gmap: GaussianMap, path: PathLike) -> None:
    """One Gaussian per line: x y z r g b."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.hstack([gmap.means, gmap.colors]) if len(gmap) else np.zeros((0, 6))
    np.savetxt(path, table, fmt="%.6f", delimiter=" ")
    logger.debug(f"Exported {len(gmap)} points to {path}")
