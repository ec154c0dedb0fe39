"""Trajectory, depth, image and reconstruction metrics."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt
from sklearn.neighbors import NearestNeighbors

from splatfusion.errors import EmptyMaskError, RankDeficientError
from splatfusion.geometry import Similarity, positions, umeyama_align
from splatfusion.geometry.align import Trajectory
from splatfusion.gsmap.ssim import ssim as _ssim

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]

PSNR_CAP = 100.0
NEAR_RANGE = 4.0
ALIGNMENTS = ("rigid", "sim3", "none")


@dataclass
class AteResult:
    """Absolute trajectory error statistics in meters."""

    rmse: float
    mean: float
    median: float
    errors: ArrayF
    alignment: Similarity


def _translation_only(a: ArrayF, b: ArrayF) -> Similarity:
    return Similarity(1.0, np.eye(3), b.mean(axis=0) - a.mean(axis=0))


def ate(est: Trajectory, gt: Trajectory, alignment: str = "rigid") -> AteResult:
    """
    Absolute trajectory error after aligning est to gt.

    Args:
        est: Estimated poses or (N, 3) positions
        gt: Ground-truth poses or (N, 3) positions
        alignment: "rigid" (unit scale), "sim3" (with scale) or "none"

    Returns:
        AteResult

    Raises:
        ValueError: length mismatch, fewer than 3 poses or unknown alignment
    """
    a = positions(est)
    b = positions(gt)
    if a.shape != b.shape:
        raise ValueError(f"Trajectory lengths differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 3:
        raise ValueError(f"ATE needs at least 3 poses (got {a.shape[0]})")
    if alignment not in ALIGNMENTS:
        raise ValueError(f"Unknown alignment '{alignment}' (use {ALIGNMENTS})")

    if alignment == "none":
        sim = Similarity(1.0, np.eye(3), np.zeros(3))
    else:
        try:
            sim = umeyama_align(a, b, with_scale=alignment == "sim3")
        except RankDeficientError:
            logger.warning("Degenerate trajectory for alignment; aligning centroids only")
            sim = _translation_only(a, b)

    errors = np.linalg.norm(sim.apply(a) - b, axis=1)
    return AteResult(
        rmse=float(np.sqrt(np.mean(errors**2))),
        mean=float(np.mean(errors)),
        median=float(np.median(errors)),
        errors=errors,
        alignment=sim,
    )


def ate_rmse(est: Trajectory, gt: Trajectory, alignment: str = "rigid") -> float:
    return ate(est, gt, alignment).rmse


def depth_l1(est: ArrayF, gt: ArrayF, max_range: Optional[float] = None) -> float:
    """
    Mean |est - gt| over pixels with valid gt (and gt <= max_range when set).

    Pixels where est is not finite are excluded as well.

    Raises:
        EmptyMaskError: no pixel passes the mask
    """
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"Depth shapes differ: {est.shape} vs {gt.shape}")
    with np.errstate(invalid="ignore"):
        mask = np.isfinite(gt) & (gt > 0) & np.isfinite(est)
        if max_range is not None:
            mask &= gt <= max_range
    if not np.any(mask):
        raise EmptyMaskError("depth_l1: no valid pixels")
    return float(np.mean(np.abs(est[mask] - gt[mask])))


def psnr(a: ArrayF, b: ArrayF, cap: Optional[float] = PSNR_CAP) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; identical images give `cap` (inf when None)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"Image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    value = np.inf if mse == 0 else 10.0 * np.log10(1.0 / mse)
    return float(value if cap is None else min(value, cap))


def ssim(a: ArrayF, b: ArrayF, window: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM with a Gaussian window."""
    return _ssim(a, b, window, sigma)


@dataclass
class ReconstructionMetrics:
    """Point-cloud accuracy / completion in meters and completion ratio in [0, 1]."""

    accuracy: float
    completion: float
    completion_ratio: float

    @property
    def chamfer_l1(self) -> float:
        return 0.5 * (self.accuracy + self.completion)


def _nn_distance(query: ArrayF, reference: ArrayF) -> ArrayF:
    nn = NearestNeighbors(n_neighbors=1).fit(reference)
    dist, _ = nn.kneighbors(query)
    return dist[:, 0]


def reconstruction_metrics(
    est_points: ArrayF, gt_points: ArrayF, threshold: float = 0.05
) -> ReconstructionMetrics:
    """
    Accuracy (mean est -> gt distance), completion (mean gt -> est distance)
    and the fraction of gt points closer than `threshold` to the estimate.
    """
    est = np.asarray(est_points, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt_points, dtype=np.float64).reshape(-1, 3)
    if est.shape[0] == 0 or gt.shape[0] == 0:
        raise EmptyMaskError("reconstruction_metrics: empty point set")
    acc = _nn_distance(est, gt)
    comp = _nn_distance(gt, est)
    return ReconstructionMetrics(
        accuracy=float(np.mean(acc)),
        completion=float(np.mean(comp)),
        completion_ratio=float(np.mean(comp < threshold)),
    )
