"""Mapping stage: owns the Gaussian map and applies messages from tracking."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt

from splatfusion.config import MapLossConfig, MapOptimizerConfig
from splatfusion.fusion.proxy import ProxyDepth
from splatfusion.geometry import Camera, Pose
from splatfusion.gsmap.deform import deform_map
from splatfusion.gsmap.gaussians import GaussianMap, init_gaussians
from splatfusion.gsmap.loss import SupervisionFrame
from splatfusion.gsmap.optimizer import MapOptimizationResult, optimize_map
from splatfusion.tracking.graph import Keyframe

logger = logging.getLogger(__name__)


@dataclass
class KeyframeMessage:
    """A new keyframe (snapshot) and its fused proxy depth."""

    keyframe: Keyframe
    proxy: ProxyDepth


@dataclass
class PoseUpdateMessage:
    """Backend pose corrections: kf_id -> (old pose, new pose)."""

    updates: Dict[int, Tuple[Pose, Pose]]


@dataclass
class FinalizeMessage:
    """Refreshed poses and proxy depths for every keyframe, then a final pass."""

    frames: Dict[int, Tuple[Pose, npt.NDArray[np.float64]]] = field(default_factory=dict)


MapperMessage = Union[KeyframeMessage, PoseUpdateMessage, FinalizeMessage]


class Mapper:
    """
    Gaussian map maintained from keyframe, pose-update and finalize messages.

    Not thread-safe; a single mapping thread (or the caller, in sequential
    mode) drives it.
    """

    def __init__(
        self,
        camera: Camera,
        loss_config: MapLossConfig,
        optimizer_config: MapOptimizerConfig,
        supervision_window: int = 5,
    ):
        self.camera = camera
        self.loss_config = loss_config
        self.optimizer_config = optimizer_config
        self.supervision_window = supervision_window
        self.gmap = GaussianMap()
        self.frames: Dict[int, SupervisionFrame] = {}
        self.results: List[MapOptimizationResult] = []
        self.finalized = False

    def handle(self, message: MapperMessage) -> None:
        if isinstance(message, KeyframeMessage):
            self.add_keyframe(message.keyframe, message.proxy)
        elif isinstance(message, PoseUpdateMessage):
            self.apply_pose_updates(message.updates)
        elif isinstance(message, FinalizeMessage):
            self.finalize(message.frames)
        else:
            raise TypeError(f"Unknown mapper message {type(message).__name__}")

    def add_keyframe(self, kf: Keyframe, proxy: ProxyDepth) -> Optional[MapOptimizationResult]:
        """Seed Gaussians from the proxy depth, then optimize on recent keyframes."""
        new = init_gaussians(kf, proxy, self.camera, self.optimizer_config.init_stride)
        self.gmap.extend(new)
        self.frames[kf.id] = SupervisionFrame.from_keyframe(kf, proxy)
        logger.info(f"Mapper: keyframe {kf.id} added {len(new)} Gaussians (total {len(self.gmap)})")

        recent = list(self.frames)[-self.supervision_window :]
        supervising = [self.frames[k] for k in reversed(recent)]
        iters = self.optimizer_config.iters_per_keyframe
        if iters < 1:
            return None
        result = optimize_map(
            self.gmap, self.camera, supervising, self.loss_config, self.optimizer_config, iters
        )
        self.results.append(result)
        return result

    def apply_pose_updates(self, updates: Dict[int, Tuple[Pose, Pose]]) -> None:
        """Deform the map and move the supervising poses to their new values."""
        self.gmap = deform_map(self.gmap, updates, known_keyframes=self.frames.keys())
        for kf_id, (_, new) in updates.items():
            self.frames[kf_id].pose = new
        logger.info(f"Mapper: applied {len(updates)} pose updates")

    def finalize(
        self, refreshed: Dict[int, Tuple[Pose, npt.NDArray[np.float64]]]
    ) -> Optional[MapOptimizationResult]:
        """Replace poses and proxy depths, then optimize over every keyframe."""
        for kf_id, (pose, depth) in refreshed.items():
            frame = self.frames.get(kf_id)
            if frame is None:
                continue
            frame.pose = pose
            frame.proxy_depth = np.asarray(depth, dtype=np.float64)
        self.finalized = True
        iters = self.optimizer_config.final_iters
        if iters < 1 or not self.frames:
            return None
        result = optimize_map(
            self.gmap,
            self.camera,
            list(self.frames.values()),
            self.loss_config,
            self.optimizer_config,
            iters,
        )
        self.results.append(result)
        return result

    def supervision(self) -> List[SupervisionFrame]:
        return list(self.frames.values())
