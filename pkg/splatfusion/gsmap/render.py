"""Tile-free CPU splatting renderer with an analytic backward pass.

Every Gaussian is projected with the first-order footprint
Sigma_2D = J W Sigma W^T J^T and truncated at 3 sigma (Mahalanobis q > 9).
Gaussians are sorted front to back by the camera-frame depth of their mean
and alpha-composited per pixel:
    alpha_j = opacity_j * exp(-q_j / 2)
    w_j     = alpha_j * prod_{k<j} (1 - alpha_k)
    C = sum w_j c_j,  D = sum w_j z_j,  A = sum w_j
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy.special import expit

from splatfusion.geometry import Camera, Pose
from splatfusion.gsmap.gaussians import GaussianMap

logger = logging.getLogger(__name__)

ArrayF = npt.NDArray[np.float64]

NEAR_PLANE = 1e-2
CUTOFF_SIGMA = 3.0
_MIN_TRANSMITTANCE = 1e-10


@dataclass
class _Projection:
    """Per visible Gaussian camera-space quantities, in composite order."""

    index: npt.NDArray[np.intp]  # map indices, sorted front to back
    W: ArrayF  # world -> camera rotation
    m_cam: ArrayF  # (G, 3)
    J: ArrayF  # (G, 2, 3)
    cov_cam: ArrayF  # (G, 3, 3)
    Q: ArrayF  # (G, 2, 2) inverse footprint
    uv: ArrayF  # (G, 2)
    opacity: ArrayF  # (G,)
    colors: ArrayF  # (G, 3)


@dataclass
class RenderOutput:
    """Rendered color (H, W, 3), depth (H, W) and accumulated alpha (H, W)."""

    color: ArrayF
    depth: ArrayF
    alpha: ArrayF
    num_visible: int = 0
    _proj: Optional[_Projection] = field(default=None, repr=False)
    _delta: Optional[ArrayF] = field(default=None, repr=False)
    _alphas: Optional[ArrayF] = field(default=None, repr=False)
    _gauss: Optional[ArrayF] = field(default=None, repr=False)
    _trans: Optional[ArrayF] = field(default=None, repr=False)
    _weights: Optional[ArrayF] = field(default=None, repr=False)

    def normalized_depth(self, min_alpha: float = 0.5) -> ArrayF:
        """D / A where alpha exceeds min_alpha, NaN elsewhere."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.alpha > min_alpha, self.depth / self.alpha, np.nan)


@dataclass
class MapGradients:
    """Loss gradients per parameter group; rotations in the right tangent space."""

    means: ArrayF
    rotations: ArrayF
    log_scales: ArrayF
    opacity_logits: ArrayF
    colors: ArrayF

    @classmethod
    def zeros(cls, n: int) -> "MapGradients":
        return cls(
            means=np.zeros((n, 3)),
            rotations=np.zeros((n, 3)),
            log_scales=np.zeros((n, 3)),
            opacity_logits=np.zeros(n),
            colors=np.zeros((n, 3)),
        )

    def __iadd__(self, other: "MapGradients") -> "MapGradients":
        self.means += other.means
        self.rotations += other.rotations
        self.log_scales += other.log_scales
        self.opacity_logits += other.opacity_logits
        self.colors += other.colors
        return self

    def finite(self) -> npt.NDArray[np.bool_]:
        """Per-Gaussian flag: every gradient finite."""
        return (
            np.all(np.isfinite(self.means), axis=1)
            & np.all(np.isfinite(self.rotations), axis=1)
            & np.all(np.isfinite(self.log_scales), axis=1)
            & np.isfinite(self.opacity_logits)
            & np.all(np.isfinite(self.colors), axis=1)
        )


def _project(gmap: GaussianMap, camera: Camera, pose: Pose) -> _Projection:
    W = pose.rotation.T
    m_cam = (gmap.means - pose.translation) @ W.T
    z = m_cam[:, 2]
    front = np.flatnonzero(z > NEAR_PLANE)

    m = m_cam[front]
    x, y, zf = m[:, 0], m[:, 1], m[:, 2]
    J = np.zeros((front.size, 2, 3))
    J[:, 0, 0] = camera.fx / zf
    J[:, 0, 2] = -camera.fx * x / zf**2
    J[:, 1, 1] = camera.fy / zf
    J[:, 1, 2] = -camera.fy * y / zf**2

    R = gmap.rotations[front]
    s2 = np.exp(2.0 * gmap.log_scales[front])
    cov_world = np.einsum("gij,gj,gkj->gik", R, s2, R)
    cov_cam = W @ cov_world @ W.T
    cov_2d = J @ cov_cam @ np.swapaxes(J, 1, 2)

    a, b, c = cov_2d[:, 0, 0], cov_2d[:, 0, 1], cov_2d[:, 1, 1]
    det = a * c - b * b
    Q = np.empty_like(cov_2d)
    Q[:, 0, 0] = c / det
    Q[:, 0, 1] = -b / det
    Q[:, 1, 0] = -b / det
    Q[:, 1, 1] = a / det

    uv = np.stack([camera.fx * x / zf + camera.cx, camera.fy * y / zf + camera.cy], axis=1)

    # Cull footprints whose 3-sigma disc misses the image
    radius = CUTOFF_SIGMA * np.sqrt(0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b))
    overlap = (
        (det > 0)
        & (uv[:, 0] + radius >= 0)
        & (uv[:, 0] - radius <= camera.width - 1)
        & (uv[:, 1] + radius >= 0)
        & (uv[:, 1] - radius <= camera.height - 1)
    )
    keep = np.flatnonzero(overlap)
    order = keep[np.argsort(zf[keep], kind="stable")]
    index = front[order]
    return _Projection(
        index=index,
        W=W,
        m_cam=m[order],
        J=J[order],
        cov_cam=cov_cam[order],
        Q=Q[order],
        uv=uv[order],
        opacity=expit(gmap.opacity_logits[index]),
        colors=gmap.colors[index],
    )


def render(gmap: GaussianMap, camera: Camera, pose: Pose, keep_cache: bool = False) -> RenderOutput:
    """
    Render color, depth and alpha of the map seen from a camera pose.

    Args:
        gmap: Gaussian map
        camera: Intrinsics and image size
        pose: Camera-to-world pose
        keep_cache: Keep intermediate arrays for render_backward

    Returns:
        RenderOutput; an empty map renders zeros everywhere
    """
    H, Wd = camera.shape
    proj = _project(gmap, camera, pose)
    G = proj.index.size
    if G == 0:
        return RenderOutput(np.zeros((H, Wd, 3)), np.zeros((H, Wd)), np.zeros((H, Wd)), 0, proj)

    u, v = camera.pixel_coordinates()
    pix = np.stack([u.ravel(), v.ravel()], axis=1)
    delta = pix[:, None, :] - proj.uv[None, :, :]  # (P, G, 2)
    dx, dy = delta[..., 0], delta[..., 1]
    Q = proj.Q
    q = Q[:, 0, 0] * dx * dx + 2.0 * Q[:, 0, 1] * dx * dy + Q[:, 1, 1] * dy * dy
    inside = q <= CUTOFF_SIGMA**2
    gauss = np.where(inside, np.exp(-0.5 * np.where(inside, q, 0.0)), 0.0)
    alphas = proj.opacity[None, :] * gauss

    trans = np.ones_like(alphas)
    if G > 1:
        trans[:, 1:] = np.cumprod(1.0 - alphas[:, :-1], axis=1)
    weights = alphas * trans

    color = (weights @ proj.colors).reshape(H, Wd, 3)
    depth = (weights @ proj.m_cam[:, 2]).reshape(H, Wd)
    alpha = weights.sum(axis=1).reshape(H, Wd)
    out = RenderOutput(color, depth, alpha, G, proj)
    if keep_cache:
        out._delta = delta
        out._alphas = alphas
        out._gauss = gauss
        out._trans = trans
        out._weights = weights
    return out


def render_backward(
    gmap: GaussianMap,
    camera: Camera,
    out: RenderOutput,
    grad_color: ArrayF,
    grad_depth: Optional[ArrayF] = None,
    grad_alpha: Optional[ArrayF] = None,
) -> MapGradients:
    """
    Back-propagate image-space gradients to every Gaussian parameter.

    Args:
        gmap: The map that produced `out`
        camera: Intrinsics
        out: RenderOutput from render(..., keep_cache=True)
        grad_color: dL/dC, (H, W, 3)
        grad_depth: dL/dD, (H, W)
        grad_alpha: dL/dA, (H, W)

    Returns:
        MapGradients over the full map (zero for culled Gaussians)
    """
    grads = MapGradients.zeros(len(gmap))
    proj = out._proj
    if proj is None or proj.index.size == 0:
        return grads
    if out._weights is None:
        raise ValueError("render_backward needs a render made with keep_cache=True")

    P = camera.num_pixels
    gC = np.asarray(grad_color, dtype=np.float64).reshape(P, 3)
    gD = np.zeros(P) if grad_depth is None else np.asarray(grad_depth, dtype=np.float64).ravel()
    gA = np.zeros(P) if grad_alpha is None else np.asarray(grad_alpha, dtype=np.float64).ravel()

    weights = out._weights
    alphas = out._alphas
    trans = out._trans
    gauss = out._gauss
    delta = out._delta
    z = proj.m_cam[:, 2]

    # Compositing
    f = gC @ proj.colors.T + gD[:, None] * z[None, :] + gA[:, None]
    wf = weights * f
    suffix = wf.sum(axis=1, keepdims=True) - np.cumsum(wf, axis=1)
    g_alpha = trans * f - suffix / np.maximum(1.0 - alphas, _MIN_TRANSMITTANCE)

    g_colors = weights.T @ gC
    g_z = weights.T @ gD
    g_opacity = np.sum(g_alpha * gauss, axis=0)

    # alpha = o exp(-q/2)
    g_q = -0.5 * g_alpha * alphas
    Q = proj.Q
    dx, dy = delta[..., 0], delta[..., 1]
    Qd_x = Q[None, :, 0, 0] * dx + Q[None, :, 0, 1] * dy
    Qd_y = Q[None, :, 1, 0] * dx + Q[None, :, 1, 1] * dy
    g_uv = np.stack([-2.0 * np.sum(g_q * Qd_x, axis=0), -2.0 * np.sum(g_q * Qd_y, axis=0)], axis=1)

    gQ = np.empty_like(Q)
    gQ[:, 0, 0] = np.sum(g_q * dx * dx, axis=0)
    gQ[:, 0, 1] = np.sum(g_q * dx * dy, axis=0)
    gQ[:, 1, 0] = gQ[:, 0, 1]
    gQ[:, 1, 1] = np.sum(g_q * dy * dy, axis=0)
    g_cov2d = -Q @ gQ @ Q

    # Sigma_2D = J Sigma_cam J^T
    J = proj.J
    Jt = np.swapaxes(J, 1, 2)
    g_cov_cam = Jt @ g_cov2d @ J
    gJ = 2.0 * g_cov2d @ J @ proj.cov_cam

    m = proj.m_cam
    x, y = m[:, 0], m[:, 1]
    fx, fy = camera.fx, camera.fy
    g_m = np.einsum("gij,gi->gj", J, g_uv)
    g_m[:, 2] += g_z
    g_m[:, 0] += gJ[:, 0, 2] * (-fx / z**2)
    g_m[:, 1] += gJ[:, 1, 2] * (-fy / z**2)
    g_m[:, 2] += (
        gJ[:, 0, 0] * (-fx / z**2)
        + gJ[:, 0, 2] * (2.0 * fx * x / z**3)
        + gJ[:, 1, 1] * (-fy / z**2)
        + gJ[:, 1, 2] * (2.0 * fy * y / z**3)
    )

    W = proj.W
    idx = proj.index
    g_means = g_m @ W
    g_cov_world = W.T @ g_cov_cam @ W

    R = gmap.rotations[idx]
    s2 = np.exp(2.0 * gmap.log_scales[idx])
    M = np.swapaxes(R, 1, 2) @ g_cov_world @ R
    g_log_scales = 2.0 * s2 * np.diagonal(M, axis1=1, axis2=2)
    N = s2[:, :, None] * M - M * s2[:, None, :]
    g_rot = np.stack([N[:, 1, 2] - N[:, 2, 1], N[:, 2, 0] - N[:, 0, 2], N[:, 0, 1] - N[:, 1, 0]], axis=1)

    o = proj.opacity
    grads.means[idx] = g_means
    grads.rotations[idx] = g_rot
    grads.log_scales[idx] = g_log_scales
    grads.opacity_logits[idx] = g_opacity * o * (1.0 - o)
    grads.colors[idx] = g_colors
    return grads
