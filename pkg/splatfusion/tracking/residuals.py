"""Dense reprojection residuals of flow edges and their analytic Jacobians.

For a source pixel p with inverse depth d:
    X = (1/d) K^-1 [p; 1]                (source camera frame)
    Y = T_dst^-1 T_src X                 (destination camera frame)
    r = flow_target(p) - project(Y)

Jacobians use the right-multiplicative convention T <- T exp(delta) with
twists ordered (rho, omega).
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from splatfusion.geometry import Camera, Pose, project_jacobian, project_points
from splatfusion.geometry.se3 import hat_batch
from splatfusion.tracking.graph import FactorGraph, FlowEdge

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]


@dataclass
class EdgeResiduals:
    """
    Residuals of one edge over all source pixels (flattened row-major).

    Rows where `valid` is False carry zero residual and zero Jacobians.
    """

    residual: ArrayF  # (P, 2)
    valid: npt.NDArray[np.bool_]  # (P,)
    jac_src: Optional[ArrayF] = None  # (P, 2, 6)
    jac_dst: Optional[ArrayF] = None  # (P, 2, 6)
    jac_depth: Optional[ArrayF] = None  # (P, 2)


def _source_points(camera: Camera, inv_depth: ArrayF) -> ArrayF:
    rays = camera.rays().reshape(-1, 3)
    return rays / inv_depth.reshape(-1, 1)


def edge_residuals(
    camera: Camera,
    pose_src: Pose,
    pose_dst: Pose,
    inv_depth_src: ArrayF,
    edge: FlowEdge,
    with_jacobians: bool = True,
    support: Optional[npt.NDArray[np.bool_]] = None,
) -> EdgeResiduals:
    """
    Evaluate r = target - project(T_dst^-1 T_src X) for every source pixel.

    A pixel is valid when its target is finite, the warped point lies in front
    of the destination camera and projects inside the destination image.  With
    `support` the image-bounds test is replaced by membership in that row set,
    so a cost can be compared over a fixed set of rows.
    """
    X = _source_points(camera, inv_depth_src)
    R_rel = pose_dst.rotation.T @ pose_src.rotation
    t_rel = pose_dst.rotation.T @ (pose_src.translation - pose_dst.translation)
    Y = X @ R_rel.T + t_rel

    uv, in_front = project_points(camera, Y)
    target = edge.flow_target.reshape(-1, 2)
    valid = in_front & np.all(np.isfinite(target), axis=1)
    valid &= camera.in_bounds(uv) if support is None else support

    residual = np.where(valid[:, None], target - np.where(valid[:, None], uv, 0.0), 0.0)
    out = EdgeResiduals(residual=residual, valid=valid)
    if not with_jacobians:
        return out

    safe_Y = np.where(valid[:, None], Y, np.array([0.0, 0.0, 1.0]))
    safe_X = np.where(valid[:, None], X, 0.0)
    J_proj = project_jacobian(camera, safe_Y)  # (P, 2, 3)

    n = X.shape[0]
    dY_src = np.empty((n, 3, 6))
    dY_src[:, :, :3] = R_rel
    dY_src[:, :, 3:] = -R_rel @ hat_batch(safe_X)

    dY_dst = np.empty((n, 3, 6))
    dY_dst[:, :, :3] = -np.eye(3)
    dY_dst[:, :, 3:] = hat_batch(safe_Y)

    d = inv_depth_src.reshape(-1)
    dY_dd = -(safe_X @ R_rel.T) / d[:, None]

    mask = valid[:, None, None]
    out.jac_src = np.where(mask, -J_proj @ dY_src, 0.0)
    out.jac_dst = np.where(mask, -J_proj @ dY_dst, 0.0)
    out.jac_depth = np.where(valid[:, None], -np.einsum("pij,pj->pi", J_proj, dY_dd), 0.0)
    return out


def whiten(residual: npt.ArrayLike, covariance: npt.ArrayLike) -> ArrayF:
    """Apply the symmetric inverse square root of a 2x2 covariance to a residual."""
    cov = np.asarray(covariance, dtype=np.float64)
    vals, vecs = np.linalg.eigh(cov)
    sqrt_info = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T
    return sqrt_info @ np.asarray(residual, dtype=np.float64)


def whitened_edge(edge: FlowEdge, res: EdgeResiduals) -> ArrayF:
    """Sigma^(-1/2) r per pixel, (P, 2)."""
    return np.einsum("pij,pj->pi", edge.sqrt_information, res.residual)


@dataclass
class PixelResidual:
    """Residual and Jacobians of one edge at one pixel."""

    residual: ArrayF  # (2,)
    whitened: ArrayF  # (2,)
    jac_src: ArrayF  # (2, 6)
    jac_dst: ArrayF  # (2, 6)
    jac_depth: ArrayF  # (2,)
    valid: bool


def geometric_residual(graph: FactorGraph, edge: FlowEdge, pixel: npt.ArrayLike) -> PixelResidual:
    """
    Residual of `edge` at an integer source pixel plus its Jacobians.

    Args:
        graph: Factor graph holding both endpoints
        edge: Flow edge
        pixel: (u, v) pixel-centre coordinates inside the source image

    Returns:
        PixelResidual; `valid` is False when the warped point is behind the
        destination camera or leaves its image, in which case the residual is
        excluded from the normal equations.
    """
    camera = graph.camera
    u, v = (int(round(c)) for c in np.asarray(pixel, dtype=np.float64))
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise ValueError(f"Pixel ({u}, {v}) outside the {camera.width}x{camera.height} image")

    src = graph.keyframe(edge.src)
    dst = graph.keyframe(edge.dst)
    flat = v * camera.width + u

    X = camera.rays()[v, u] / src.inv_depth[v, u]
    R_rel = dst.pose.rotation.T @ src.pose.rotation
    t_rel = dst.pose.rotation.T @ (src.pose.translation - dst.pose.translation)
    Y = R_rel @ X + t_rel
    uv, in_front = project_points(camera, Y[None, :])
    target = edge.flow_target[v, u]
    valid = bool(in_front[0] and camera.in_bounds(uv)[0] and np.all(np.isfinite(target)))

    J_proj = project_jacobian(camera, Y[None, :])[0]
    dY_src = np.hstack([R_rel, -R_rel @ hat_batch(X[None, :])[0]])
    dY_dst = np.hstack([-np.eye(3), hat_batch(Y[None, :])[0]])
    dY_dd = -(R_rel @ X) / src.inv_depth[v, u]

    residual = target - uv[0]
    return PixelResidual(
        residual=residual,
        whitened=edge.sqrt_information[flat] @ residual,
        jac_src=-J_proj @ dY_src,
        jac_dst=-J_proj @ dY_dst,
        jac_depth=-J_proj @ dY_dd,
        valid=valid,
    )


def geometric_cost(graph: FactorGraph, edges: Optional[list] = None) -> float:
    """Total whitened squared residual sum(r^T Sigma^-1 r) over valid pixels."""
    edges = graph.edges if edges is None else edges
    total = 0.0
    for edge in edges:
        src = graph.keyframe(edge.src)
        dst = graph.keyframe(edge.dst)
        res = edge_residuals(graph.camera, src.pose, dst.pose, src.inv_depth, edge, False)
        total += float(np.sum(whitened_edge(edge, res) ** 2))
    return total
