"""Deformable Gaussian-splat map: initialization, rendering, optimization, deformation."""

from .deform import deform_map, invert_updates
from .gaussians import Gaussian, GaussianMap, init_gaussians
from .loss import LossTerms, SupervisionFrame, map_loss, scale_regularizer
from .mapper import FinalizeMessage, KeyframeMessage, Mapper, PoseUpdateMessage
from .optimizer import MapAdam, MapOptimizationResult, optimize_map, orthonormalize
from .render import MapGradients, RenderOutput, render, render_backward
from .serialize import export_point_cloud, load_map, map_size_bytes, save_map
from .ssim import ssim, ssim_map, ssim_with_grad

__all__ = [
    "Gaussian",
    "GaussianMap",
    "init_gaussians",
    "RenderOutput",
    "MapGradients",
    "render",
    "render_backward",
    "ssim",
    "ssim_map",
    "ssim_with_grad",
    "SupervisionFrame",
    "LossTerms",
    "map_loss",
    "scale_regularizer",
    "MapAdam",
    "MapOptimizationResult",
    "optimize_map",
    "orthonormalize",
    "deform_map",
    "invert_updates",
    "save_map",
    "load_map",
    "map_size_bytes",
    "export_point_cloud",
    "Mapper",
    "KeyframeMessage",
    "PoseUpdateMessage",
    "FinalizeMessage",
]
