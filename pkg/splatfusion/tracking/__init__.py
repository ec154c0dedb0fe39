"""Sliding-window factor graph and disparity/scale/pose optimization."""

from .dspo import (
    DSPOObjective,
    DSPOResult,
    ScaleShiftFit,
    classify_depth_errors,
    dspo_objective,
    dspo_refine,
    fit_scale_shift,
    initialize_scale_shift,
    refine_prior_alignment,
    should_insert_keyframe,
)
from .graph import ErrorClass, FactorGraph, FlowEdge, Keyframe
from .residuals import (
    EdgeResiduals,
    PixelResidual,
    edge_residuals,
    geometric_cost,
    geometric_residual,
    whiten,
)
from .solver import SolveSummary, optimize_keyframes, optimize_window

__all__ = [
    "ErrorClass",
    "Keyframe",
    "FlowEdge",
    "FactorGraph",
    "EdgeResiduals",
    "PixelResidual",
    "edge_residuals",
    "geometric_residual",
    "geometric_cost",
    "whiten",
    "SolveSummary",
    "optimize_window",
    "optimize_keyframes",
    "should_insert_keyframe",
    "classify_depth_errors",
    "ScaleShiftFit",
    "fit_scale_shift",
    "initialize_scale_shift",
    "DSPOObjective",
    "DSPOResult",
    "dspo_objective",
    "dspo_refine",
    "refine_prior_alignment",
]
