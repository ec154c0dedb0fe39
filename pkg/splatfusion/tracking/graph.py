"""Keyframe factor graph: vertices, flow-constraint edges and the sliding window."""

import copy
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import numpy.typing as npt

from splatfusion.geometry import Camera, Pose

logger = logging.getLogger(__name__)

MIN_EIGENVALUE = 1e-12


class ErrorClass(IntEnum):
    """Per-pixel depth reliability label."""

    HIGH = 0
    LOW = 1


@dataclass
class Keyframe:
    """
    One graph vertex.

    inv_depth is in 1/meters, mono_prior in meters; (scale, shift) align the
    prior in inverse-depth space: d_prior = scale / mono_prior + shift.
    """

    id: int
    pose: Pose
    image: npt.NDArray[np.float64]
    inv_depth: npt.NDArray[np.float64]
    mono_prior: npt.NDArray[np.float64]
    scale: float = 1.0
    shift: float = 0.0
    error_class: Optional[npt.NDArray[np.uint8]] = None
    scale_initialized: bool = False
    frame_index: int = -1
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        self.image = np.asarray(self.image, dtype=np.float64)
        self.inv_depth = np.array(self.inv_depth, dtype=np.float64)
        self.mono_prior = np.asarray(self.mono_prior, dtype=np.float64)
        if self.inv_depth.shape != self.mono_prior.shape:
            raise ValueError(
                f"Keyframe {self.id}: inv_depth {self.inv_depth.shape} and "
                f"mono_prior {self.mono_prior.shape} differ"
            )
        if self.image.shape[:2] != self.inv_depth.shape:
            raise ValueError(f"Keyframe {self.id}: image and depth sizes differ")
        if not np.all(self.inv_depth > 0):
            raise ValueError(f"Keyframe {self.id}: inv_depth must be positive everywhere")
        if not np.all(self.mono_prior > 0):
            raise ValueError(f"Keyframe {self.id}: mono_prior must be positive everywhere")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.inv_depth.shape  # type: ignore[return-value]

    @property
    def depth(self) -> npt.NDArray[np.float64]:
        """Multi-view depth in meters."""
        return 1.0 / self.inv_depth

    def aligned_prior_inv_depth(self) -> npt.NDArray[np.float64]:
        return self.scale / self.mono_prior + self.shift

    def low_error_mask(self) -> npt.NDArray[np.bool_]:
        """Pixels labelled low-error; every pixel when unclassified."""
        if self.error_class is None:
            return np.ones(self.shape, dtype=bool)
        return self.error_class == ErrorClass.LOW

    def snapshot(self) -> "Keyframe":
        """Deep copy safe to hand to another thread."""
        return copy.deepcopy(self)


@dataclass
class FlowEdge:
    """Dense correspondences from keyframe src into keyframe dst."""

    src: int
    dst: int
    flow_target: npt.NDArray[np.float64]  # (H, W, 2) pixel targets in dst
    covariance: npt.NDArray[np.float64]  # (H, W, 2, 2)
    is_loop: bool = False

    def __post_init__(self) -> None:
        self.flow_target = np.asarray(self.flow_target, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if self.flow_target.shape[-1] != 2 or self.covariance.shape[-2:] != (2, 2):
            raise ValueError("FlowEdge: flow_target must be (H,W,2), covariance (H,W,2,2)")
        if self.flow_target.shape[:2] != self.covariance.shape[:2]:
            raise ValueError("FlowEdge: flow_target and covariance sizes differ")

    def validate(self) -> None:
        """Check per-pixel symmetry and positive definiteness."""
        cov = self.covariance
        if not np.allclose(cov, np.swapaxes(cov, -1, -2), atol=1e-12):
            raise ValueError(f"Edge {self.src}->{self.dst}: covariance not symmetric")
        if np.min(self._eigen[0]) <= MIN_EIGENVALUE:
            raise ValueError(f"Edge {self.src}->{self.dst}: covariance not positive definite")

    @cached_property
    def _eigen(self) -> Tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        vals, vecs = np.linalg.eigh(self.covariance.reshape(-1, 2, 2))
        return vals, vecs

    @cached_property
    def sqrt_information(self) -> npt.NDArray[np.float64]:
        """Symmetric Sigma^(-1/2) per pixel, flattened to (H*W, 2, 2)."""
        vals, vecs = self._eigen
        return np.einsum("pij,pj,pkj->pik", vecs, 1.0 / np.sqrt(vals), vecs)

    @cached_property
    def information(self) -> npt.NDArray[np.float64]:
        """Sigma^-1 per pixel, flattened to (H*W, 2, 2)."""
        vals, vecs = self._eigen
        return np.einsum("pij,pj,pkj->pik", vecs, 1.0 / vals, vecs)

    @property
    def key(self) -> Tuple[int, int]:
        return (self.src, self.dst)


@dataclass
class FactorGraph:
    """Keyframe vertices, flow edges and the active window (a suffix of insertion order)."""

    camera: Camera
    window_size: int = 5
    vertices: Dict[int, Keyframe] = field(default_factory=dict)
    edges: List[FlowEdge] = field(default_factory=list)
    order: List[int] = field(default_factory=list)

    @property
    def window(self) -> List[int]:
        return self.order[-self.window_size :]

    def __len__(self) -> int:
        return len(self.order)

    def __contains__(self, kf_id: int) -> bool:
        return kf_id in self.vertices

    def keyframe(self, kf_id: int) -> Keyframe:
        try:
            return self.vertices[kf_id]
        except KeyError:
            raise KeyError(f"Unknown keyframe {kf_id}") from None

    def add_keyframe(self, kf: Keyframe) -> None:
        if kf.id in self.vertices:
            raise ValueError(f"Keyframe {kf.id} already in graph")
        if kf.shape != self.camera.shape:
            raise ValueError(
                f"Keyframe {kf.id} size {kf.shape} does not match camera {self.camera.shape}"
            )
        self.vertices[kf.id] = kf
        self.order.append(kf.id)
        logger.debug(f"Added keyframe {kf.id} (window={self.window})")

    def add_edge(self, edge: FlowEdge, validate: bool = True) -> None:
        for end in (edge.src, edge.dst):
            if end not in self.vertices:
                raise KeyError(f"Edge endpoint {end} is not a graph vertex")
        if edge.src == edge.dst:
            raise ValueError("Self edges are not allowed")
        if edge.flow_target.shape[:2] != self.camera.shape:
            raise ValueError("Edge size does not match camera")
        if validate:
            edge.validate()
        self.edges.append(edge)

    def has_edge(self, src: int, dst: int) -> bool:
        return any(e.src == src and e.dst == dst for e in self.edges)

    def position(self, kf_id: int) -> int:
        """Index of a keyframe in insertion order."""
        return self.order.index(kf_id)

    def edges_within(self, ids: Iterable[int]) -> List[FlowEdge]:
        """Edges whose both endpoints are in ids."""
        members = set(ids)
        return [e for e in self.edges if e.src in members and e.dst in members]

    def window_neighbors(self, kf_id: int) -> List[int]:
        """Other keyframes of the active window."""
        return [k for k in self.window if k != kf_id]

    def neighborhood(self, kf_id: int, size: Optional[int] = None) -> List[int]:
        """Contiguous run of `size` keyframes in insertion order containing kf_id, centred when possible."""
        size = size or self.window_size
        pos = self.position(kf_id)
        start = max(0, min(pos - (size - 1) // 2, len(self.order) - size))
        return self.order[start : start + size]

    def temporal_neighbors(self, kf_id: int, radius: int) -> List[int]:
        """Keyframes within `radius` insertion steps, including kf_id."""
        pos = self.position(kf_id)
        return self.order[max(0, pos - radius) : pos + radius + 1]

    def poses(self) -> Dict[int, Pose]:
        return {k: self.vertices[k].pose for k in self.order}

    def snapshot(self, ids: Optional[Iterable[int]] = None) -> Dict[int, Keyframe]:
        """Deep copies of the requested (default: all) keyframes."""
        ids = self.order if ids is None else list(ids)
        return {k: self.vertices[k].snapshot() for k in ids}
