"""Named scene + sequence presets used by the CLI, the pipeline and the tests."""

import logging
from typing import Callable, Dict, List, Tuple

import numpy as np

from splatfusion.geometry import Camera, Pose, so3_exp
from splatfusion.harness.scene import Plane, SyntheticScene, Texture
from splatfusion.harness.simulate import CorruptRegion, SequenceSpec

logger = logging.getLogger(__name__)

Scenario = Tuple[SyntheticScene, SequenceSpec]


def default_camera(width: int = 40, height: int = 30, focal: float = 36.0) -> Camera:
    return Camera(fx=focal, fy=focal, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height)


def _wall(normal, offset, base, phase, frequency=9.0, textured=True) -> Plane:
    return Plane(
        normal=np.asarray(normal, dtype=np.float64),
        offset=offset,
        texture=Texture(base=base, phase=phase, frequency=frequency, textured=textured),
    )


def room(depth: float, half_width: float, floor: float, ceiling: float, x_shift: float = 0.0) -> SyntheticScene:
    """Closed box seen from inside: back wall at z=depth, floor at y=floor (y points down)."""
    surfaces = [
        _wall((0, 0, 1), depth, (0.55, 0.45, 0.40), (0.0, 1.3, 2.6)),
        _wall((0, 1, 0), floor, (0.40, 0.50, 0.45), (0.7, 2.1, 0.2), frequency=7.0),
        _wall((0, 1, 0), ceiling, (0.60, 0.60, 0.55), (1.9, 0.4, 1.1), frequency=6.0),
        _wall((1, 0, 0), x_shift - half_width, (0.45, 0.40, 0.55), (2.2, 0.9, 1.7), frequency=8.0),
        _wall((1, 0, 0), x_shift + half_width, (0.50, 0.55, 0.40), (0.3, 1.6, 2.9), frequency=8.0),
        _wall((0, 0, 1), -3.0, (0.5, 0.5, 0.5), (0.0, 0.0, 0.0)),
    ]
    return SyntheticScene(surfaces=surfaces)


def lateral_trajectory(n: int, step: float, start: float = 0.0) -> List[Pose]:
    """Camera looking down +z, sliding along +x."""
    return [Pose(np.eye(3), np.array([start + k * step, 0.0, 0.0])) for k in range(n)]


def circle_trajectory(n: int, radius: float, yaw_amplitude: float = 0.03) -> List[Pose]:
    """n + 1 poses circling in the image plane (x-y); the last coincides with the first."""
    poses = []
    for k in range(n + 1):
        a = 2.0 * np.pi * k / n
        t = np.array([radius * np.cos(a) - radius, radius * np.sin(a), 0.0])
        R = so3_exp(np.array([0.0, yaw_amplitude * np.sin(a), 0.0]))
        poses.append(Pose(R, t))
    return poses


def smoke(seed: int = 0) -> Scenario:
    """Lateral motion in front of a textured wall, floor and side wall; 12 frames."""
    scene = room(depth=3.0, half_width=3.2, floor=0.8, ceiling=-1.3, x_shift=2.0)
    scene.name = "smoke"
    spec = SequenceSpec(
        trajectory=lateral_trajectory(12, 0.18),
        camera=default_camera(),
        flow_noise_sigma=0.1,
        prior_scale=0.9,
        prior_shift=0.03,
        prior_noise_sigma=0.005,
        init_noise=0.02,
        seed=seed,
        name="smoke",
    )
    return scene, spec


def loop(seed: int = 0, drift: bool = True) -> Scenario:
    """Circular trajectory facing a wall at 2 m that returns to its start; odometry drifts."""
    scene = room(depth=2.0, half_width=2.5, floor=1.2, ceiling=-1.2)
    scene.name = "loop"
    twist = np.array([0.012, -0.006, 0.004, 0.002, 0.003, 0.004]) if drift else None
    spec = SequenceSpec(
        trajectory=circle_trajectory(16, 0.4),
        camera=default_camera(),
        flow_noise_sigma=0.05,
        prior_noise_sigma=0.0,
        init_noise=0.01,
        drift=twist,
        seed=seed,
        name="loop",
    )
    return scene, spec


def corrupt(seed: int = 0) -> Scenario:
    """Five lateral keyframes with a rectangle of corrupted multi-view depth and a noisy prior."""
    scene = room(depth=3.0, half_width=3.2, floor=0.8, ceiling=-1.3, x_shift=2.0)
    scene.name = "corrupt"
    camera = default_camera()
    spec = SequenceSpec(
        trajectory=lateral_trajectory(5, 0.2),
        camera=camera,
        flow_noise_sigma=0.1,
        prior_scale=0.8,
        prior_shift=0.05,
        prior_noise_sigma=0.01,
        corrupt_region=CorruptRegion(u0=12, v0=8, u1=28, v1=20, factor=1.5, spread=0.3),
        init_noise=0.02,
        seed=seed,
        name="corrupt",
    )
    return scene, spec


def straight(seed: int = 0) -> Scenario:
    """Long straight lateral run with no revisit."""
    scene = room(depth=2.0, half_width=8.0, floor=1.2, ceiling=-1.2, x_shift=3.0)
    scene.name = "straight"
    spec = SequenceSpec(
        trajectory=lateral_trajectory(14, 0.3),
        camera=default_camera(),
        flow_noise_sigma=0.05,
        init_noise=0.01,
        seed=seed,
        name="straight",
    )
    return scene, spec


SCENARIOS: Dict[str, Callable[..., Scenario]] = {
    "smoke": smoke,
    "loop": loop,
    "corrupt": corrupt,
    "straight": straight,
}


def get_scenario(name: str, seed: int = 0) -> Scenario:
    """Build a preset by name; raises KeyError listing the known presets."""
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise KeyError(f"Unknown scene '{name}' (choose from {sorted(SCENARIOS)})") from None
    return factory(seed=seed)
