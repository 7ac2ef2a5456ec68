"""Rigid-body math: frames, poses, quaternions, camera model, pose errors.

Conventions used throughout the package:
  - quaternions are (w, x, y, z), unit norm, right-handed frames, Z-up world;
  - Euler angles are roll-pitch-yaw, intrinsic X-Y-Z
    (R = Rx(roll) @ Ry(pitch) @ Rz(yaw));
  - positions in meters, angles in radians unless a name says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class FrameError(ValueError):
    """Raised when poses from incompatible frames are combined."""


class Frame(Enum):
    CAMERA = "camera"
    ROBOT_BASE = "robot_base"
    WORLD = "world"
    OBJECT = "object"


# Cross-frame compositions compose(a, b) where `a` is the pose of b's frame
# origin expressed in a.frame.  Same-frame and OBJECT-child compositions are
# always allowed.
_FRAME_CHAINS = {
    (Frame.ROBOT_BASE, Frame.CAMERA),
    (Frame.WORLD, Frame.ROBOT_BASE),
    (Frame.WORLD, Frame.CAMERA),
}


# ---------------------------------------------------------------------------
# quaternion primitives (arrays are (4,) w,x,y,z)

def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m):
    """Shepperd's method; always returns a unit quaternion with w >= 0."""
    m = np.asarray(m, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis / n))


def quat_rotate(q, v):
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


def quat_angle(q):
    """Geodesic rotation angle of a unit quaternion, radians in [0, pi]."""
    return 2.0 * np.arccos(min(1.0, abs(float(q[0]))))


def rpy_to_matrix(roll, pitch, yaw):
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rx @ ry @ rz


def matrix_to_rpy(m):
    """Inverse of rpy_to_matrix (intrinsic X-Y-Z decomposition)."""
    sp = np.clip(m[0, 2], -1.0, 1.0)
    pitch = np.arcsin(sp)
    if abs(sp) < 1.0 - 1e-12:
        roll = np.arctan2(-m[1, 2], m[2, 2])
        yaw = np.arctan2(-m[0, 1], m[0, 0])
    else:
        # Gimbal lock: only roll+/-yaw observable; put it all in roll.
        roll = np.arctan2(m[2, 1], m[1, 1])
        yaw = 0.0
    return roll, pitch, yaw


def rpy_to_quat(roll, pitch, yaw):
    return matrix_to_quat(rpy_to_matrix(roll, pitch, yaw))


# ---------------------------------------------------------------------------
# Pose6D

@dataclass(frozen=True)
class Pose6D:
    """Rigid transform: position (m) + unit quaternion (w,x,y,z) + frame tag.

    The tag names the frame the pose is expressed in.  Values are immutable;
    the backing arrays are copies marked read-only.
    """

    position: np.ndarray
    quat: np.ndarray
    frame: Frame = Frame.WORLD

    def __post_init__(self):
        pos = np.array(self.position, dtype=np.float64).reshape(3)
        q = quat_normalize(np.array(self.quat, dtype=np.float64).reshape(4))
        pos.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "quat", q)
        if not isinstance(self.frame, Frame):
            object.__setattr__(self, "frame", Frame(self.frame))

    # -- constructors -------------------------------------------------------
    @classmethod
    def identity(cls, frame: Frame = Frame.WORLD) -> "Pose6D":
        return cls(np.zeros(3), np.array([1.0, 0, 0, 0]), frame)

    @classmethod
    def from_translation(cls, xyz, frame: Frame = Frame.WORLD) -> "Pose6D":
        return cls(np.asarray(xyz, dtype=np.float64), np.array([1.0, 0, 0, 0]), frame)

    @classmethod
    def from_axis_angle(cls, axis, angle, xyz=(0.0, 0.0, 0.0),
                        frame: Frame = Frame.WORLD) -> "Pose6D":
        return cls(np.asarray(xyz, dtype=np.float64),
                   quat_from_axis_angle(axis, angle), frame)

    @classmethod
    def from_rpy(cls, roll, pitch, yaw, xyz=(0.0, 0.0, 0.0),
                 frame: Frame = Frame.WORLD) -> "Pose6D":
        return cls(np.asarray(xyz, dtype=np.float64), rpy_to_quat(roll, pitch, yaw), frame)

    @classmethod
    def from_matrix(cls, m, frame: Frame = Frame.WORLD) -> "Pose6D":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, 3], matrix_to_quat(m[:3, :3]), frame)

    # -- views --------------------------------------------------------------
    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.position
        return m

    def retag(self, frame: Frame) -> "Pose6D":
        """Relabel the frame without changing the transform (escape hatch)."""
        return Pose6D(self.position, self.quat, frame)

    # -- transform algebra ---------------------------------------------------
    def inverse(self) -> "Pose6D":
        qi = quat_conjugate(self.quat)
        return Pose6D(-quat_rotate(qi, self.position), qi, self.frame)

    def transform_point(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=np.float64) + self.position

    def transform_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation.T + self.position

    def compose(self, other: "Pose6D") -> "Pose6D":
        return compose(self, other)

    def almost_equal(self, other: "Pose6D", tol: float = 1e-9) -> bool:
        dq = min(np.linalg.norm(self.quat - other.quat),
                 np.linalg.norm(self.quat + other.quat))
        return bool(np.linalg.norm(self.position - other.position) < tol and dq < tol)


def compose(a: Pose6D, b: Pose6D) -> Pose6D:
    """a o b: apply b first, then a.  Result is expressed in a.frame.

    Allowed combinations: same frame (relative offsets), b in OBJECT frame
    (attaching local geometry), or (a.frame, b.frame) in the standard chains
    robot_base<-camera, world<-robot_base, world<-camera where `a` is the
    pose of b's frame origin.  Anything else raises FrameError.
    """
    if b.frame is not Frame.OBJECT and a.frame is not b.frame \
            and (a.frame, b.frame) not in _FRAME_CHAINS:
        raise FrameError(f"cannot compose {a.frame.value} pose with "
                         f"{b.frame.value} pose")
    q = quat_normalize(quat_mul(a.quat, b.quat))
    p = a.transform_point(b.position)
    return Pose6D(p, q, a.frame)


def world_to_base(p: Pose6D, robot_base_pose: Pose6D) -> Pose6D:
    """Re-express a WORLD pose in the ROBOT_BASE frame."""
    if p.frame is not Frame.WORLD:
        raise FrameError(f"expected world pose, got {p.frame.value}")
    if robot_base_pose.frame is not Frame.WORLD:
        raise FrameError("robot_base_pose must be expressed in world")
    inv = robot_base_pose.inverse()
    q = quat_normalize(quat_mul(inv.quat, p.quat))
    return Pose6D(inv.transform_point(p.position), q, Frame.ROBOT_BASE)


def base_to_world(p: Pose6D, robot_base_pose: Pose6D) -> Pose6D:
    """Re-express a ROBOT_BASE pose in the WORLD frame."""
    if p.frame is not Frame.ROBOT_BASE:
        raise FrameError(f"expected robot_base pose, got {p.frame.value}")
    return compose(robot_base_pose, p)


# ---------------------------------------------------------------------------
# camera

@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: +z optical axis, +x right, +y down in camera frame."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: Pose6D = field(default_factory=lambda: Pose6D.identity(Frame.ROBOT_BASE))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.extrinsics.frame is not Frame.ROBOT_BASE:
            raise FrameError("camera extrinsics must be expressed in robot_base")

    @property
    def intrinsic_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def project(self, pts_cam: np.ndarray) -> np.ndarray:
        """Camera-frame points (N,3) -> pixel coordinates (N,2)."""
        pts_cam = np.atleast_2d(np.asarray(pts_cam, dtype=np.float64))
        z = pts_cam[:, 2]
        return np.column_stack([self.fx * pts_cam[:, 0] / z + self.cx,
                                self.fy * pts_cam[:, 1] / z + self.cy])

    def back_project(self, u, v, z):
        """Pixel coordinates + depth -> camera-frame points."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        return np.stack([(u - self.cx) / self.fx * z,
                         (v - self.cy) / self.fy * z, z], axis=-1)


def camera_to_base(p: Pose6D, cam: CameraModel) -> Pose6D:
    """Re-express a CAMERA-frame pose in the ROBOT_BASE frame."""
    if p.frame is not Frame.CAMERA:
        raise FrameError(f"expected camera pose, got {p.frame.value}")
    return compose(cam.extrinsics, p)


# ---------------------------------------------------------------------------
# symmetry + pose error

class SymmetryKind(Enum):
    NONE = "none"
    DISCRETE_Z = "discrete_z"
    CONTINUOUS_Z = "continuous_z"


@dataclass(frozen=True)
class Symmetry:
    """Rotational symmetry of an object about its local z axis."""

    kind: SymmetryKind = SymmetryKind.NONE
    order: int = 1

    @classmethod
    def none(cls) -> "Symmetry":
        return cls(SymmetryKind.NONE, 1)

    @classmethod
    def discrete_z(cls, k: int) -> "Symmetry":
        if k < 2:
            raise ValueError("discrete symmetry order must be >= 2")
        return cls(SymmetryKind.DISCRETE_Z, k)

    @classmethod
    def continuous_z(cls) -> "Symmetry":
        return cls(SymmetryKind.CONTINUOUS_Z, 0)


def _rotz(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


@dataclass(frozen=True)
class PoseError:
    """Position error in cm and symmetry-quotiented rotation errors in deg."""

    position_cm: float
    roll_deg: float
    pitch_deg: float
    yaw_deg: float
    angle_deg: float

    @property
    def rotation_deg(self) -> np.ndarray:
        return np.array([self.roll_deg, self.pitch_deg, self.yaw_deg])


def pose_error(estimate: Pose6D, truth: Pose6D, symmetry: Symmetry) -> PoseError:
    """Position distance (cm) + per-axis rotation error (deg, absolute).

    Rotation error is minimized over the object's symmetry group: the
    residual R_truth^T R_est Rz(theta) with the smallest geodesic angle is
    decomposed into roll-pitch-yaw.  For continuous z symmetry the spin
    component about the object axis is quotiented out entirely.  Position
    error and the total angle are symmetric in (estimate, truth); the
    per-axis split of large rotations need not be.
    """
    if estimate.frame is not truth.frame:
        raise FrameError("pose_error requires both poses in the same frame")
    pos_cm = float(np.linalg.norm(estimate.position - truth.position) * 100.0)

    rel = quat_to_matrix(truth.quat).T @ quat_to_matrix(estimate.quat)
    if symmetry.kind is SymmetryKind.CONTINUOUS_Z:
        theta = np.arctan2(rel[1, 0] - rel[0, 1], rel[0, 0] + rel[1, 1])
        candidates = [rel @ _rotz(-theta)]
    elif symmetry.kind is SymmetryKind.DISCRETE_Z:
        candidates = [rel @ _rotz(2.0 * np.pi * j / symmetry.order)
                      for j in range(symmetry.order)]
    else:
        candidates = [rel]

    best = max(candidates, key=lambda r: np.trace(r))
    angle = np.degrees(np.arccos(np.clip((np.trace(best) - 1.0) / 2.0, -1.0, 1.0)))
    roll, pitch, yaw = matrix_to_rpy(best)
    return PoseError(pos_cm, abs(np.degrees(roll)), abs(np.degrees(pitch)),
                     abs(np.degrees(yaw)), float(angle))
