"""Run report and the plots written next to it."""

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import matplotlib
import matplotlib.pyplot as plt
import numpy as np

from splatfusion.geometry import Pose, Similarity, positions

matplotlib.use("Agg")  # Non-interactive backend

logger = logging.getLogger(__name__)

# Wall-clock dependent; left out of determinism comparisons.
NONDETERMINISTIC_KEYS = ("fps", "total_seconds", "timings")


@dataclass
class RunReport:
    """
    Metrics of one pipeline run. Distances in meters, PSNR in dB.

    ate_rmse_tracked scores the keyframe poses as they stood before the first
    backend pass that could move them. depth_l1_near and render_depth_l1 are
    None when no keyframe has a pixel they can score.
    """

    scene: str
    seed: int
    num_frames: int
    num_keyframes: int
    num_loops: int
    ate_rmse: float
    ate_mean: float
    ate_median: float
    ate_rmse_frontend: float
    ate_rmse_tracked: float
    depth_l1_overall: float
    depth_l1_near: Optional[float]
    render_depth_l1: Optional[float]
    psnr: float
    ssim: float
    accuracy: float
    completion: float
    completion_ratio: float
    chamfer_l1: float
    gaussian_count: int
    map_size_mb: float
    fps: float = 0.0
    total_seconds: float = 0.0
    timings: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def metrics(self) -> Dict[str, Any]:
        """Every field except the wall-clock ones."""
        return {k: v for k, v in self.to_dict().items() if k not in NONDETERMINISTIC_KEYS}

    def non_finite(self) -> List[str]:
        """Names of float metrics that are NaN or infinite; unset optional metrics are skipped."""
        bad = []
        for key, value in self.metrics().items():
            if isinstance(value, float) and not math.isfinite(value):
                bad.append(key)
        return bad

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunReport":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def plot_trajectory(
    output_path: Path,
    gt: Sequence[Pose],
    estimate: Sequence[Pose],
    frontend: Optional[Sequence[Pose]] = None,
    alignment: Optional[Similarity] = None,
) -> None:
    """
    Top view (x-z plane) of the ground truth, aligned estimate and raw odometry.

    Args:
        output_path: PNG to write
        gt: Ground-truth poses
        estimate: Estimated poses, same length as gt
        frontend: Optional odometry poses before the backend
        alignment: Similarity mapping the estimate onto the ground truth
    """
    g = positions(gt)
    e = positions(estimate)
    if alignment is not None:
        e = alignment.apply(e)

    plt.figure(figsize=(8, 6))
    plt.plot(g[:, 0], g[:, 2], "k-", linewidth=2, label="Ground truth")
    plt.plot(e[:, 0], e[:, 2], "o-", linewidth=1.5, markersize=3, label="Estimate")
    if frontend is not None:
        f = positions(frontend)
        if alignment is not None:
            f = alignment.apply(f)
        plt.plot(f[:, 0], f[:, 2], "--", linewidth=1, alpha=0.7, label="Odometry")
    plt.xlabel("x [m]")
    plt.ylabel("z [m]")
    plt.title("Trajectory (top view)")
    plt.axis("equal")
    plt.legend()
    plt.grid(True, alpha=0.3)

    output_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(output_path, dpi=150, bbox_inches="tight")
    plt.close()

    logger.info(f"Trajectory plot saved to {output_path}")


def plot_confidence(output_path: Path, w_mv: np.ndarray, title: str = "Multi-view weight") -> None:
    """Heat-map of a keyframe's multi-view weight in [0, 1]."""
    plt.figure(figsize=(8, 6))
    plt.imshow(w_mv, cmap="viridis", vmin=0.0, vmax=1.0)
    plt.colorbar(label="w_mv")
    plt.title(title)
    plt.axis("off")

    output_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(output_path, dpi=150, bbox_inches="tight")
    plt.close()

    logger.info(f"Confidence plot saved to {output_path}")
