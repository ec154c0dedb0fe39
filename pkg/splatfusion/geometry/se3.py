"""SE(3) poses, exponential/logarithm maps and composition.

Conventions:
    - A Pose maps camera-frame points to the world frame: X_w = R @ X_c + t.
    - Twists are 6-vectors ordered (rho, omega): translation part first.
    - Optimizer updates are right-multiplicative: pose <- pose @ exp(delta).
"""

from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np
import numpy.typing as npt
from scipy.spatial.transform import Rotation

from splatfusion.errors import CutLocusError

ArrayF = npt.NDArray[np.float64]

_SMALL_ANGLE = 1e-8
CUT_LOCUS_MARGIN = 1e-6


def _frozen(array: npt.ArrayLike, shape: tuple) -> ArrayF:
    out = np.array(array, dtype=np.float64).reshape(shape)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform camera -> world. Immutable; arrays are read-only."""

    rotation: ArrayF
    translation: ArrayF

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: npt.ArrayLike) -> "Pose":
        m = np.asarray(matrix, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_quaternion(cls, quat_xyzw: npt.ArrayLike, translation: npt.ArrayLike) -> "Pose":
        """Build from a scalar-last quaternion (TUM order) and translation."""
        rot = Rotation.from_quat(np.asarray(quat_xyzw, dtype=np.float64)).as_matrix()
        return cls(rot, translation)

    def as_matrix(self) -> ArrayF:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def quaternion(self) -> ArrayF:
        """Scalar-last unit quaternion (x, y, z, w)."""
        return Rotation.from_matrix(self.rotation).as_quat()

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def transform(self, points: npt.ArrayLike) -> ArrayF:
        """Apply R x + t to a 3-vector or an (..., 3) array."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )

    def __repr__(self) -> str:
        t = np.array2string(self.translation, precision=4)
        w = np.array2string(so3_log(self.rotation), precision=4)
        return f"Pose(t={t}, rotvec={w})"


def compose(a: Pose, b: Pose) -> Pose:
    """a ∘ b."""
    return a @ b


def inverse(pose: Pose) -> Pose:
    return pose.inverse()


def transform(pose: Pose, point: npt.ArrayLike) -> ArrayF:
    """Rigidly transform a point (or array of points) by the pose."""
    return pose.transform(point)


def hat(w: npt.ArrayLike) -> ArrayF:
    """Skew-symmetric matrix with hat(w) @ x == cross(w, x)."""
    x, y, z = np.asarray(w, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: ArrayF) -> ArrayF:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def hat_batch(w: ArrayF) -> ArrayF:
    """Vectorized hat for (..., 3) input."""
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def so3_exp(omega: npt.ArrayLike) -> ArrayF:
    """Rodrigues' formula."""
    w = np.asarray(omega, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    W = hat(w)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + W + 0.5 * W @ W
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + a * W + b * W @ W


def so3_exp_batch(omega: ArrayF) -> ArrayF:
    """Vectorized Rodrigues for (N, 3) rotation vectors."""
    theta = np.linalg.norm(omega, axis=-1)
    W = hat_batch(omega)
    WW = W @ W
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a[..., None, None] * W + b[..., None, None] * WW


def so3_log(rotation: ArrayF) -> ArrayF:
    """Rotation vector of R; raises CutLocusError within 1e-6 of pi."""
    R = np.asarray(rotation, dtype=np.float64)
    axis = vee(R - R.T)
    s = 0.5 * float(np.linalg.norm(axis))
    c = 0.5 * (float(np.trace(R)) - 1.0)
    theta = float(np.arctan2(s, c))
    if theta >= np.pi - CUT_LOCUS_MARGIN:
        raise CutLocusError(f"rotation angle {theta:.9f} too close to pi")
    if theta < _SMALL_ANGLE:
        return 0.5 * axis
    return theta / (2.0 * np.sin(theta)) * axis


def _left_jacobian(omega: ArrayF) -> ArrayF:
    theta = float(np.linalg.norm(omega))
    W = hat(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    return (
        np.eye(3)
        + (1.0 - np.cos(theta)) / theta**2 * W
        + (theta - np.sin(theta)) / theta**3 * W @ W
    )


def _left_jacobian_inv(omega: ArrayF) -> ArrayF:
    theta = float(np.linalg.norm(omega))
    W = hat(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) - 0.5 * W + W @ W / 12.0
    coef = (1.0 - theta * np.sin(theta) / (2.0 * (1.0 - np.cos(theta)))) / theta**2
    return np.eye(3) - 0.5 * W + coef * W @ W


def se3_exp(twist: npt.ArrayLike) -> Pose:
    """Exponential map of a (rho, omega) twist."""
    xi = np.asarray(twist, dtype=np.float64).reshape(6)
    rho, omega = xi[:3], xi[3:]
    return Pose(so3_exp(omega), _left_jacobian(omega) @ rho)


def se3_log(pose: Pose) -> ArrayF:
    """Logarithm of a pose as a (rho, omega) twist."""
    omega = so3_log(pose.rotation)
    rho = _left_jacobian_inv(omega) @ pose.translation
    return np.concatenate([rho, omega])


def retract(pose: Pose, delta: npt.ArrayLike) -> Pose:
    """Right-multiplicative update pose @ exp(delta)."""
    return pose @ se3_exp(delta)


def pose_delta(a: Pose, b: Pose) -> ArrayF:
    """Twist taking a to b under the right-multiplicative convention."""
    return se3_log(a.inverse() @ b)


def positions(trajectory: Union[Iterable[Pose], npt.ArrayLike]) -> ArrayF:
    """Stack pose translations to (N, 3); arrays pass through unchanged."""
    if isinstance(trajectory, np.ndarray):
        return np.asarray(trajectory, dtype=np.float64).reshape(-1, 3)
    items = list(trajectory)  # type: ignore[arg-type]
    if items and isinstance(items[0], Pose):
        return np.stack([p.translation for p in items])
    return np.asarray(items, dtype=np.float64).reshape(-1, 3)
