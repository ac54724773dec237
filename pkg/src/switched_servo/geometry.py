"""Rigid-body primitives: quaternions, frame-tagged poses and twists.

Quaternions use the Hamilton convention with the scalar part first,
``q = (w, x, y, z)``.  A pose tagged ``from_frame='world', to_frame='camera'``
is the pose of the camera frame expressed in the world frame: applying it to
point coordinates written in the camera frame yields world coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrameMismatchError

# Below this rotation angle (rad) the log/exp maps fall back to their
# first-order series to avoid 0/0.
_SMALL_ANGLE = 1e-6


@dataclass(frozen=True)
class UnitQuaternion:
    """Unit quaternion, scalar first.

    The constructor normalizes, so small numeric drift from upstream
    arithmetic is absorbed here instead of accumulating.
    """

    wxyz: np.ndarray

    def __init__(self, wxyz):
        arr = np.asarray(wxyz, dtype=float).reshape(4).copy()
        norm = np.linalg.norm(arr)
        if not np.isfinite(norm) or norm < 1e-12:
            raise ValueError(f"cannot normalize quaternion {arr}")
        object.__setattr__(self, "wxyz", arr / norm)

    @staticmethod
    def identity() -> "UnitQuaternion":
        return UnitQuaternion([1.0, 0.0, 0.0, 0.0])

    @property
    def w(self) -> float:
        return float(self.wxyz[0])

    @property
    def vec(self) -> np.ndarray:
        return self.wxyz[1:].copy()

    def canonical(self) -> "UnitQuaternion":
        """Pick the representative with non-negative scalar part.

        ``q`` and ``-q`` encode the same rotation; the logarithm below is
        only single-valued on the w >= 0 half of the double cover.
        """
        if self.wxyz[0] < 0.0:
            return UnitQuaternion(-self.wxyz)
        return self

    def multiply(self, other: "UnitQuaternion") -> "UnitQuaternion":
        """Hamilton product ``self * other``."""
        w1, x1, y1, z1 = self.wxyz
        w2, x2, y2, z2 = other.wxyz
        return UnitQuaternion(
            [
                w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
                w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
                w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
                w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            ]
        )

    def conjugate(self) -> "UnitQuaternion":
        w, x, y, z = self.wxyz
        return UnitQuaternion([w, -x, -y, -z])

    inverse = conjugate

    def rotate(self, v) -> np.ndarray:
        """Rotate a 3-vector (or Nx3 stack) by this quaternion."""
        return np.asarray(v, dtype=float) @ self.matrix().T

    def matrix(self) -> np.ndarray:
        """Equivalent 3x3 rotation matrix."""
        w, x, y, z = self.wxyz
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )


def quat_log(q: UnitQuaternion) -> np.ndarray:
    """Rotation vector ``r = 2 log(q)``, angle times unit axis, ||r|| <= pi.

    The sign ambiguity of the double cover is resolved by canonicalizing to
    w >= 0 first, which keeps the returned angle in [0, pi].
    """
    q = q.canonical()
    w = q.w
    v = q.vec
    s = np.linalg.norm(v)
    angle = 2.0 * np.arctan2(s, w)
    if angle < _SMALL_ANGLE:
        # First-order series: r ~ 2 v / w, exact at the identity.
        return 2.0 * v / w
    return (angle / s) * v


def quat_exp(r) -> UnitQuaternion:
    """Inverse of :func:`quat_log`: rotation vector to unit quaternion."""
    r = np.asarray(r, dtype=float).reshape(3)
    angle = np.linalg.norm(r)
    if angle < _SMALL_ANGLE:
        return UnitQuaternion(np.concatenate(([1.0], 0.5 * r)))
    axis = r / angle
    half = 0.5 * angle
    return UnitQuaternion(np.concatenate(([np.cos(half)], np.sin(half) * axis)))


def quat_derivative(q: UnitQuaternion, omega_body) -> np.ndarray:
    """Raw 4-vector derivative ``q_dot = q * (0, omega) / 2``.

    ``omega_body`` is the angular velocity expressed in the child (body)
    frame of ``q``.  Returned unnormalized; integrators renormalize.
    """
    w1, x1, y1, z1 = q.wxyz
    wx, wy, wz = np.asarray(omega_body, dtype=float)
    return 0.5 * np.array(
        [
            -x1 * wx - y1 * wy - z1 * wz,
            w1 * wx + y1 * wz - z1 * wy,
            w1 * wy - x1 * wz + z1 * wx,
            w1 * wz + x1 * wy - y1 * wx,
        ]
    )


@dataclass(frozen=True)
class Pose:
    """Pose of ``to_frame`` expressed in ``from_frame``.

    ``transform(p)`` maps point coordinates from ``to_frame`` into
    ``from_frame``; composition chains when the inner frame ids agree.
    """

    rotation: UnitQuaternion
    translation: np.ndarray
    from_frame: str
    to_frame: str

    def __init__(self, rotation, translation, from_frame, to_frame):
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(
            self, "translation", np.asarray(translation, dtype=float).reshape(3).copy()
        )
        object.__setattr__(self, "from_frame", str(from_frame))
        object.__setattr__(self, "to_frame", str(to_frame))

    @staticmethod
    def identity(frame: str) -> "Pose":
        return Pose(UnitQuaternion.identity(), np.zeros(3), frame, frame)

    def compose(self, other: "Pose") -> "Pose":
        """``self (from a to b) . other (from b to c) -> from a to c``."""
        if self.to_frame != other.from_frame:
            raise FrameMismatchError(
                f"cannot compose {self.from_frame}->{self.to_frame} "
                f"with {other.from_frame}->{other.to_frame}"
            )
        rot = self.rotation.multiply(other.rotation)
        trans = self.translation + self.rotation.rotate(other.translation)
        return Pose(rot, trans, self.from_frame, other.to_frame)

    def inverse(self) -> "Pose":
        inv_rot = self.rotation.conjugate()
        return Pose(
            inv_rot,
            -inv_rot.rotate(self.translation),
            self.to_frame,
            self.from_frame,
        )

    def transform(self, points) -> np.ndarray:
        """Map point coordinates from ``to_frame`` into ``from_frame``."""
        return self.rotation.rotate(points) + self.translation


@dataclass(frozen=True)
class Twist:
    """Linear and angular velocity, tagged with the frame the coordinates
    are written in."""

    linear: np.ndarray
    angular: np.ndarray
    frame: str

    def __init__(self, linear, angular, frame):
        object.__setattr__(self, "linear", np.asarray(linear, dtype=float).reshape(3).copy())
        object.__setattr__(self, "angular", np.asarray(angular, dtype=float).reshape(3).copy())
        object.__setattr__(self, "frame", str(frame))

    @staticmethod
    def zero(frame: str) -> "Twist":
        return Twist(np.zeros(3), np.zeros(3), frame)

    @staticmethod
    def from_vector(vec, frame: str) -> "Twist":
        vec = np.asarray(vec, dtype=float).reshape(6)
        return Twist(vec[:3], vec[3:], frame)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class StateX:
    """Regulation state: pose error stacked with the commanded twist.

    ``e_p`` is the 6-vector (translation, rotation-vector) error of the
    camera relative to its goal; ``xi`` is the camera twist written in the
    goal frame.
    """

    e_p: np.ndarray
    xi: Twist

    def __init__(self, e_p, xi: Twist):
        object.__setattr__(self, "e_p", np.asarray(e_p, dtype=float).reshape(6).copy())
        object.__setattr__(self, "xi", xi)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.e_p, self.xi.as_vector()])


def pose_error(pose: Pose, goal: Pose) -> np.ndarray:
    """Pose of ``pose`` relative to ``goal`` as a 6-vector.

    Both arguments must be expressed in the same parent frame.  The return
    is ``(t, r)`` where ``t`` is the translation of the relative pose
    goal^-1 . pose and ``r = 2 log(q)`` its rotation vector.
    """
    if pose.from_frame != goal.from_frame:
        raise FrameMismatchError(
            f"pose in frame {pose.from_frame!r}, goal in frame {goal.from_frame!r}"
        )
    rel = goal.inverse().compose(pose)
    return np.concatenate([rel.translation, quat_log(rel.rotation)])


def relative_rotation(pose: Pose, goal: Pose) -> UnitQuaternion:
    """Rotation of the goal^-1 . pose relative pose (maps current-frame
    coordinates into goal-frame coordinates)."""
    if pose.from_frame != goal.from_frame:
        raise FrameMismatchError(
            f"pose in frame {pose.from_frame!r}, goal in frame {goal.from_frame!r}"
        )
    return goal.rotation.conjugate().multiply(pose.rotation)


def twist_to_frame(xi: Twist, rotation: UnitQuaternion, from_frame: str, to_frame: str) -> Twist:
    """Re-express a twist in another frame sharing the same origin point.

    ``rotation`` maps coordinates from ``from_frame`` into ``to_frame``;
    both 3-vector parts rotate independently.
    """
    if xi.frame != from_frame:
        raise FrameMismatchError(f"twist is in frame {xi.frame!r}, expected {from_frame!r}")
    return Twist(rotation.rotate(xi.linear), rotation.rotate(xi.angular), to_frame)
