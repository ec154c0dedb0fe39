"""Test fixtures and configuration."""

from typing import Callable, List, Optional

import numpy as np
import pytest

from splatfusion.config import TrackingConfig
from splatfusion.geometry import Camera, Pose
from splatfusion.geometry.se3 import so3_exp_batch
from splatfusion.gsmap import GaussianMap
from splatfusion.harness.scenarios import default_camera, lateral_trajectory, room
from splatfusion.harness.simulate import SequenceSpec, SyntheticSequence, generate_sequence
from splatfusion.tracking import FactorGraph, Keyframe


def pytest_configure(config: pytest.Config) -> None:
    """Configure pytest."""
    config.addinivalue_line("markers", "slow: marks tests as slow")
    config.addinivalue_line("markers", "integration: marks integration tests")


@pytest.fixture
def camera() -> Camera:
    """Default 40x30 pinhole camera."""
    return default_camera()


@pytest.fixture
def small_camera() -> Camera:
    """16x12 camera for brute-force oracles."""
    return default_camera(width=16, height=12, focal=14.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture
def make_sequence() -> Callable[..., SyntheticSequence]:
    """Noise-free lateral sequence in front of the textured room."""

    def _make(
        n: int = 3,
        step: float = 0.15,
        camera: Optional[Camera] = None,
        trajectory: Optional[List[Pose]] = None,
        **spec_kwargs,
    ) -> SyntheticSequence:
        scene = room(depth=3.0, half_width=3.2, floor=0.8, ceiling=-1.3, x_shift=1.0)
        spec_kwargs.setdefault("flow_noise_sigma", 0.0)
        spec_kwargs.setdefault("init_noise", 0.0)
        spec = SequenceSpec(
            trajectory=trajectory or lateral_trajectory(n, step),
            camera=camera or default_camera(),
            **spec_kwargs,
        )
        return generate_sequence(scene, spec)

    return _make


@pytest.fixture
def make_graph() -> Callable[..., FactorGraph]:
    """Factor graph of a sequence at ground-truth depth with edges between all frame pairs."""

    def _make(
        sequence: SyntheticSequence,
        window_size: int = 5,
        poses: Optional[List[Pose]] = None,
        all_pairs: bool = True,
    ) -> FactorGraph:
        graph = FactorGraph(sequence.camera, window_size=window_size)
        for k, frame in enumerate(sequence.frames):
            graph.add_keyframe(
                Keyframe(
                    id=k,
                    pose=frame.gt_pose if poses is None else poses[k],
                    image=frame.image,
                    inv_depth=1.0 / frame.gt_depth,
                    mono_prior=frame.mono_prior,
                    frame_index=k,
                )
            )
        n = len(sequence)
        for i in range(n):
            for j in range(n):
                if i != j and (all_pairs or abs(i - j) == 1):
                    graph.add_edge(sequence.flow_edge(i, j))
        return graph

    return _make


@pytest.fixture
def tracking_config() -> TrackingConfig:
    return TrackingConfig()


@pytest.fixture
def make_map() -> Callable[..., GaussianMap]:
    """Random anisotropic Gaussians in front of a camera at the origin looking down +z."""

    def _make(rng: np.random.Generator, n: int = 6, anchor: int = 0) -> GaussianMap:
        means = np.column_stack(
            [rng.uniform(-0.6, 0.6, n), rng.uniform(-0.4, 0.4, n), rng.uniform(1.5, 3.0, n)]
        )
        return GaussianMap(
            means=means,
            rotations=so3_exp_batch(rng.normal(0.0, 0.6, (n, 3))),
            log_scales=np.log(rng.uniform(0.1, 0.35, (n, 3))),
            opacity_logits=rng.normal(0.0, 1.0, n),
            colors=rng.uniform(0.1, 0.9, (n, 3)),
            anchors=np.full(n, anchor),
        )

    return _make
