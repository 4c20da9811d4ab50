"""Rigid-body poses, Euler/quaternion conversions, and point transforms.

Rotation convention used throughout the package: fixed-axis (extrinsic)
X(roll) -> Y(pitch) -> Z(yaw), i.e. R = Rz(yaw) @ Ry(pitch) @ Rx(roll).
All angles are radians, wrapped to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_TWO_PI = 2.0 * math.pi


def wrap_angle(angle):
    """Wrap an angle (scalar or ndarray) into (-pi, pi].

    Values already in range are returned bit-identically, so wrapping is
    idempotent.
    """
    a = np.asarray(angle, dtype=float)
    needs = (a > np.pi) | (a <= -np.pi)
    wrapped = np.where(needs, np.pi - np.mod(np.pi - a, _TWO_PI), a)
    return wrapped.item() if wrapped.ndim == 0 else wrapped


@dataclass(frozen=True)
class Pose6D:
    """6-DoF rigid-body state: position in meters plus roll/pitch/yaw.

    Angles are normalized to (-pi, pi] on construction, so every operation
    returning a Pose6D yields wrapped angles.
    """

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("roll", "pitch", "yaw"):
            object.__setattr__(self, name, float(wrap_angle(getattr(self, name))))

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_array(self) -> np.ndarray:
        """Return [x, y, z, roll, pitch, yaw] as a float64 array."""
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Pose6D":
        x, y, z, roll, pitch, yaw = (float(v) for v in values)
        return cls(x, y, z, roll, pitch, yaw)


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion (w, x, y, z) representing a rotation."""

    w: float
    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n <= 0.0:
            raise ValueError("cannot normalize a zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z


def euler_to_matrix(roll, pitch, yaw) -> np.ndarray:
    """Rotation matrices for roll/pitch/yaw; scalars give (3, 3), arrays (..., 3, 3)."""
    roll, pitch, yaw = np.broadcast_arrays(
        np.asarray(roll, dtype=float), np.asarray(pitch, dtype=float), np.asarray(yaw, dtype=float)
    )
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    row0 = np.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr], axis=-1)
    row1 = np.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr], axis=-1)
    row2 = np.stack([-sp, cp * sr, cp * cr], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def matrix_to_euler(matrix: np.ndarray):
    """Invert euler_to_matrix; returns (roll, pitch, yaw) scalars or arrays.

    The arcsine input is clamped to [-1, 1] so rounding noise near
    pitch = +-pi/2 cannot produce NaN.
    """
    m = np.asarray(matrix, dtype=float)
    sp = np.clip(-m[..., 2, 0], -1.0, 1.0)
    pitch = np.arcsin(sp)
    roll = np.arctan2(m[..., 2, 1], m[..., 2, 2])
    yaw = np.arctan2(m[..., 1, 0], m[..., 0, 0])
    if m.ndim == 2:
        return float(roll), float(pitch), float(yaw)
    return roll, pitch, yaw


def rotation_matrix(pose: Pose6D) -> np.ndarray:
    return euler_to_matrix(pose.roll, pose.pitch, pose.yaw)


def compose(a: Pose6D, b: Pose6D) -> Pose6D:
    """Rigid-body composition a * b (apply b first, then a)."""
    ra = rotation_matrix(a)
    rb = rotation_matrix(b)
    r = ra @ rb
    t = ra @ b.translation() + a.translation()
    roll, pitch, yaw = matrix_to_euler(r)
    return Pose6D(t[0], t[1], t[2], roll, pitch, yaw)


def inverse(pose: Pose6D) -> Pose6D:
    """Pose p^-1, so that compose(p, inverse(p)) is the identity."""
    r = rotation_matrix(pose).T
    t = -r @ pose.translation()
    roll, pitch, yaw = matrix_to_euler(r)
    return Pose6D(t[0], t[1], t[2], roll, pitch, yaw)


def transform_point(pose: Pose6D, point: Sequence[float]) -> np.ndarray:
    """Map a 3-vector from the pose's local frame into the parent frame."""
    return rotation_matrix(pose) @ np.asarray(point, dtype=float) + pose.translation()


def transform_points(pose: Pose6D, points: np.ndarray) -> np.ndarray:
    """Vectorized transform_point for an (..., 3) array."""
    pts = np.asarray(points, dtype=float)
    return pts @ rotation_matrix(pose).T + pose.translation()


def euler_to_quaternion_components(roll, pitch, yaw):
    """Quaternion components (w, x, y, z) for roll/pitch/yaw; broadcasts over arrays."""
    roll = np.asarray(roll, dtype=float)
    pitch = np.asarray(pitch, dtype=float)
    yaw = np.asarray(yaw, dtype=float)
    cr, sr = np.cos(roll / 2.0), np.sin(roll / 2.0)
    cp, sp = np.cos(pitch / 2.0), np.sin(pitch / 2.0)
    cy, sy = np.cos(yaw / 2.0), np.sin(yaw / 2.0)
    w = cy * cp * cr + sy * sp * sr
    x = cy * cp * sr - sy * sp * cr
    y = cy * sp * cr + sy * cp * sr
    z = sy * cp * cr - cy * sp * sr
    return w, x, y, z


def euler_to_quaternion(roll: float, pitch: float, yaw: float) -> Quaternion:
    w, x, y, z = euler_to_quaternion_components(roll, pitch, yaw)
    return Quaternion(float(w), float(x), float(y), float(z))


def quaternion_to_euler(q: Quaternion):
    """Roll/pitch/yaw of a unit quaternion; pitch input clamped against rounding."""
    sinp = 2.0 * (q.w * q.y - q.z * q.x)
    pitch = math.asin(max(-1.0, min(1.0, sinp)))
    roll = math.atan2(2.0 * (q.w * q.x + q.y * q.z), 1.0 - 2.0 * (q.x**2 + q.y**2))
    yaw = math.atan2(2.0 * (q.w * q.z + q.x * q.y), 1.0 - 2.0 * (q.y**2 + q.z**2))
    return wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)


def quaternion_to_pose(x: float, y: float, z: float, q: Quaternion) -> Pose6D:
    roll, pitch, yaw = quaternion_to_euler(q)
    return Pose6D(x, y, z, roll, pitch, yaw)


def rotation_angle_between(a: Pose6D, b: Pose6D) -> float:
    """Geodesic angle (radians) between the orientations of two poses."""
    qa = euler_to_quaternion(a.roll, a.pitch, a.yaw)
    qb = euler_to_quaternion(b.roll, b.pitch, b.yaw)
    d = min(1.0, abs(qa.dot(qb)))
    return 2.0 * math.acos(d)


# Trajectory text format: one line per stamp, `t x y z roll pitch yaw`,
# space-separated decimals, meters and radians.

def write_trajectory(path, stamped_poses: Iterable[tuple[float, Pose6D]]) -> None:
    lines = []
    for t, p in stamped_poses:
        lines.append(f"{t:.9g} {p.x:.17g} {p.y:.17g} {p.z:.17g} {p.roll:.17g} {p.pitch:.17g} {p.yaw:.17g}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_trajectory(path) -> list[tuple[float, Pose6D]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 fields, got {len(fields)}")
        t, *pose = (float(v) for v in fields)
        out.append((t, Pose6D.from_array(pose)))
    return out
