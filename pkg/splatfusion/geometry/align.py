"""Closed-form similarity alignment of point sets / trajectories (Umeyama)."""

from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
import numpy.typing as npt

from splatfusion.errors import RankDeficientError
from splatfusion.geometry.se3 import Pose, positions

Trajectory = Union[Iterable[Pose], npt.NDArray[np.float64]]


@dataclass(frozen=True, eq=False)
class Similarity:
    """x -> scale * R x + t."""

    scale: float
    rotation: npt.NDArray[np.float64]
    translation: npt.NDArray[np.float64]
    residual_rms: float = 0.0

    def apply(self, points: npt.ArrayLike) -> npt.NDArray[np.float64]:
        p = np.asarray(points, dtype=np.float64)
        return self.scale * p @ self.rotation.T + self.translation


def umeyama_align(
    traj_a: Trajectory,
    traj_b: Trajectory,
    with_scale: bool = True,
) -> Similarity:
    """
    Least-squares similarity minimizing sum ||s R a_i + t - b_i||^2.

    Args:
        traj_a: Source poses or (N, 3) positions
        traj_b: Target poses or (N, 3) positions
        with_scale: Estimate scale; False fixes scale to 1 (rigid alignment)

    Returns:
        Similarity with the RMS residual of the aligned positions

    Raises:
        RankDeficientError: fewer than 3 points, or collinear/identical positions
    """
    a = positions(traj_a)
    b = positions(traj_b)
    if a.shape != b.shape:
        raise ValueError(f"Trajectory shapes differ: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 3:
        raise RankDeficientError(f"Need at least 3 positions, got {n}")

    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    a0 = a - mu_a
    b0 = b - mu_b

    sv_a = np.linalg.svd(a0, compute_uv=False)
    if sv_a[0] < 1e-12 or sv_a[1] < 1e-9 * sv_a[0]:
        raise RankDeficientError("Positions are identical or collinear")

    cov = b0.T @ a0 / n
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt

    if with_scale:
        var_a = float(np.mean(np.sum(a0**2, axis=1)))
        scale = float(np.trace(np.diag(D) @ S)) / var_a
    else:
        scale = 1.0
    t = mu_b - scale * R @ mu_a

    aligned = scale * a @ R.T + t
    rms = float(np.sqrt(np.mean(np.sum((aligned - b) ** 2, axis=1))))
    return Similarity(scale, R, t, rms)
