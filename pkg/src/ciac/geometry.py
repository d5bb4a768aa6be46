"""Geometric and kinematic value types shared by the whole control stack.

Conventions: SI units (meters, seconds, radians) everywhere; degrees appear
only in reported metrics. Rotations are stored as 3x3 row-major matrices,
matching the recording format's 9-element encoding. All types here are
immutable values and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

ORTHONORMAL_TOL = 1e-9


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """Build a finite 3-vector (float64)."""
    v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vec3 components must be finite, got {v}")
    return v


def as_vec3(v) -> np.ndarray:
    """Coerce to a finite (3,) float array."""
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected shape (3,), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"vector components must be finite, got {a}")
    return a


def _skew(w: np.ndarray) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = as_vec3(axis)
    n = np.linalg.norm(a)
    if n == 0.0:
        if angle != 0.0:
            raise ValueError("zero axis with nonzero angle")
        return np.eye(3)
    a = a / n
    k = _skew(a)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class Rot3:
    """A proper rotation. The constructor rejects non-orthonormal input."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("rotation entries must be finite")
        err = np.abs(m @ m.T - np.eye(3)).max()
        if err > ORTHONORMAL_TOL:
            raise ValueError(f"matrix is not orthonormal (max error {err:.3e})")
        det = np.linalg.det(m)
        if abs(det - 1.0) > ORTHONORMAL_TOL:
            raise ValueError(f"matrix determinant {det} is not +1")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @staticmethod
    def identity() -> "Rot3":
        return Rot3(np.eye(3))

    @staticmethod
    def from_axis_angle(axis, angle: float) -> "Rot3":
        return Rot3(axis_angle_matrix(axis, angle))

    @staticmethod
    def random(rng: np.random.Generator) -> "Rot3":
        """Uniform random rotation (QR of a Gaussian matrix, sign-fixed)."""
        q, r = np.linalg.qr(rng.standard_normal((3, 3)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 2] = -q[:, 2]
        return Rot3(q)

    def apply(self, v) -> np.ndarray:
        return self.m @ as_vec3(v)

    def inverse(self) -> "Rot3":
        return Rot3(self.m.T)

    def compose(self, other: "Rot3") -> "Rot3":
        return Rot3(self.m @ other.m)

    def axis(self, i: int) -> np.ndarray:
        """The i-th column: the image of the i-th body axis in world frame."""
        return self.m[:, i].copy()

    def log(self) -> np.ndarray:
        """Rotation vector (axis * angle) of this rotation."""
        tr = np.clip((np.trace(self.m) - 1.0) * 0.5, -1.0, 1.0)
        theta = math.acos(tr)
        if theta < 1e-12:
            return np.zeros(3)
        if math.pi - theta < 1e-6:
            # Near pi: extract axis from the symmetric part.
            a = np.sqrt(np.clip((np.diag(self.m) + 1.0) * 0.5, 0.0, None))
            i = int(np.argmax(a))
            ax = np.zeros(3)
            ax[i] = a[i]
            for j in range(3):
                if j != i:
                    ax[j] = (self.m[i, j] + self.m[j, i]) / (4.0 * a[i])
            # Fix the sign using the skew part where it is nonzero.
            w = np.array([self.m[2, 1] - self.m[1, 2],
                          self.m[0, 2] - self.m[2, 0],
                          self.m[1, 0] - self.m[0, 1]])
            if np.dot(w, ax) < 0:
                ax = -ax
            return ax / np.linalg.norm(ax) * theta
        w = np.array([self.m[2, 1] - self.m[1, 2],
                      self.m[0, 2] - self.m[2, 0],
                      self.m[1, 0] - self.m[0, 1]])
        return w * (theta / (2.0 * math.sin(theta)))

    def angle_to(self, other: "Rot3") -> float:
        """Geodesic distance on SO(3), in radians."""
        return float(np.linalg.norm(other.compose(self.inverse()).log()))

    def slerp(self, other: "Rot3", t: float) -> "Rot3":
        """Geodesic interpolation from self (t=0) to other (t=1)."""
        delta = other.compose(self.inverse()).log()
        return Rot3(_exp(delta * t) @ self.m)


def _exp(w: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(w))
    if theta < 1e-12:
        return np.eye(3) + _skew(w)
    return axis_angle_matrix(w / theta, theta)


def rotation_between(a, b) -> Rot3:
    """Minimal rotation taking unit direction a onto unit direction b."""
    a = as_vec3(a)
    b = as_vec3(b)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-12:
        return Rot3.identity()
    if c < -1.0 + 1e-12:
        # Antiparallel: rotate pi about any axis orthogonal to a.
        helper = np.array([1.0, 0.0, 0.0])
        if abs(a[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        return Rot3.from_axis_angle(axis, math.pi)
    axis = np.cross(a, b)
    return Rot3.from_axis_angle(axis, math.acos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: Rot3

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))


class DeviceId(Enum):
    """The four teleoperation devices: two patient-side arms, two hand interfaces."""

    PSM1 = "PSM1"
    PSM2 = "PSM2"
    SIGMA_R = "SIGMA_R"
    SIGMA_L = "SIGMA_L"


DEVICE_ORDER = (DeviceId.PSM1, DeviceId.PSM2, DeviceId.SIGMA_R, DeviceId.SIGMA_L)

# Per-device feature layout: position(3) + rotation(9) + linear velocity(3)
# + angular velocity(3) + gripper(1).
FEATURES_PER_DEVICE = 19
# The subset that feeds classification: velocities + gripper.
STREAM_FEATURES_PER_DEVICE = 7


@dataclass(frozen=True)
class KinematicSample:
    """One 20 Hz frame of a single device's state."""

    device: DeviceId
    position: np.ndarray
    orientation: Rot3
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    gripper_angle: float
    timestamp: float

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))
        object.__setattr__(self, "linear_velocity", as_vec3(self.linear_velocity))
        object.__setattr__(self, "angular_velocity", as_vec3(self.angular_velocity))

    def feature_vector(self) -> np.ndarray:
        """All 19 numeric features, in recording column order."""
        return np.concatenate([
            self.position,
            np.asarray(self.orientation.m).reshape(9),
            self.linear_velocity,
            self.angular_velocity,
            [self.gripper_angle],
        ])

    def stream_features(self) -> np.ndarray:
        """The 7 features used by the streaming classifier."""
        return np.concatenate([
            self.linear_velocity,
            self.angular_velocity,
            [self.gripper_angle],
        ])


@dataclass(frozen=True)
class TaskFrame:
    """Tissue-attached frame: x along the wound, y in-plane perpendicular,
    z the outward tissue normal."""

    origin: np.ndarray
    orientation: Rot3

    def __post_init__(self):
        object.__setattr__(self, "origin", as_vec3(self.origin))

    @staticmethod
    def identity() -> "TaskFrame":
        return TaskFrame(np.zeros(3), Rot3.identity())

    def wound_axis(self) -> np.ndarray:
        return self.orientation.axis(0)

    def tissue_normal(self) -> np.ndarray:
        return self.orientation.axis(2)


def to_task_frame(p, frame: TaskFrame) -> np.ndarray:
    """World point to task-frame coordinates."""
    return frame.orientation.m.T @ (as_vec3(p) - frame.origin)


def from_task_frame(p, frame: TaskFrame) -> np.ndarray:
    """Task-frame coordinates back to world."""
    return frame.orientation.m @ as_vec3(p) + frame.origin


@dataclass(frozen=True)
class EntryPointSet:
    """Planned needle entry points in task-frame coordinates, ordered along +x."""

    points: tuple
    index: int = 0

    def __post_init__(self):
        pts = tuple(as_vec3(p) for p in self.points)
        if not pts:
            raise ValueError("entry point set must not be empty")
        xs = [p[0] for p in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("entry points must be strictly increasing along x")
        if not (0 <= self.index < len(pts)):
            raise ValueError(f"entry index {self.index} out of range")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def current(self) -> np.ndarray:
        return self.points[self.index]

    def following(self) -> tuple[np.ndarray, bool]:
        """The next entry point, or the last one (flagged) when none remains."""
        if self.index + 1 < len(self.points):
            return self.points[self.index + 1], False
        return self.points[self.index], True

    def advanced(self) -> "EntryPointSet":
        if self.index + 1 >= len(self.points):
            return self
        return EntryPointSet(self.points, self.index + 1)


# The needle plane is held perpendicular to the gripper by the holder, so one
# fixed tool axis stands in for the plane normal; tool x is the convention.
NEEDLE_PLANE_AXIS = 0


def perpendicularity_error(tool: Rot3, frame: TaskFrame) -> float:
    """Angle in degrees between the needle-plane normal (tool x-axis) and the
    wound direction (task x-axis). Zero means a perfectly perpendicular plane."""
    a = tool.axis(NEEDLE_PLANE_AXIS)
    b = frame.wound_axis()
    c = np.clip(np.dot(a, b), -1.0, 1.0)
    return math.degrees(math.acos(c))


def aligned_tool_orientation(current: Rot3, frame: TaskFrame) -> Rot3:
    """Closest orientation to `current` whose needle-plane normal lies along
    the wound axis (the auto-orientation target)."""
    return rotation_between(current.axis(NEEDLE_PLANE_AXIS), frame.wound_axis()).compose(current)
