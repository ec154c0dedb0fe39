"""SE(3) and pinhole-camera primitives."""

from .align import Similarity, umeyama_align
from .camera import (
    Camera,
    PixelGrid,
    project,
    project_jacobian,
    project_points,
    sample_grid,
    unproject,
    unproject_grid,
)
from .se3 import (
    Pose,
    compose,
    hat,
    inverse,
    pose_delta,
    positions,
    retract,
    se3_exp,
    se3_log,
    so3_exp,
    so3_log,
    transform,
)

__all__ = [
    "Pose",
    "Camera",
    "PixelGrid",
    "Similarity",
    "compose",
    "inverse",
    "transform",
    "hat",
    "se3_exp",
    "se3_log",
    "so3_exp",
    "so3_log",
    "retract",
    "pose_delta",
    "positions",
    "project",
    "project_points",
    "project_jacobian",
    "unproject",
    "unproject_grid",
    "sample_grid",
    "umeyama_align",
]
