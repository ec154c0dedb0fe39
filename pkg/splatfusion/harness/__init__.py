"""Synthetic scenes and sequences, metrics, dataset I/O and the end-to-end pipeline."""

from .metrics import (
    AteResult,
    ReconstructionMetrics,
    ate,
    ate_rmse,
    depth_l1,
    psnr,
    reconstruction_metrics,
    ssim,
)
from .pipeline import Pipeline, PipelineResult, run_pipeline
from .report import RunReport, plot_confidence, plot_trajectory
from .scenarios import SCENARIOS, get_scenario
from .scene import Plane, Sphere, SyntheticScene, Texture
from .simulate import CorruptRegion, Frame, SequenceSpec, SyntheticSequence, generate_sequence
from .worker import MappingWorker

__all__ = [
    "AteResult",
    "ReconstructionMetrics",
    "ate",
    "ate_rmse",
    "depth_l1",
    "psnr",
    "ssim",
    "reconstruction_metrics",
    "Pipeline",
    "PipelineResult",
    "run_pipeline",
    "RunReport",
    "plot_trajectory",
    "plot_confidence",
    "SCENARIOS",
    "get_scenario",
    "Plane",
    "Sphere",
    "SyntheticScene",
    "Texture",
    "CorruptRegion",
    "Frame",
    "SequenceSpec",
    "SyntheticSequence",
    "generate_sequence",
    "MappingWorker",
]
