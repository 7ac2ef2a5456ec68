"""UR3 arm model: DH forward kinematics, closed-form IK, gripper state.

The analytic IK covers the UR kinematic family (a = [0,a2,a3,0,0,0],
d = [d1,0,0,d4,d5,d6], alpha = [pi/2,0,0,pi/2,-pi/2,0], zero offsets) and
returns up to 8 branch solutions, every one re-verified through FK before
being returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lucidlab.geometry import Frame, FrameError, Pose6D

TWO_PI = 2.0 * math.pi

# Public vendor kinematic sheet values for the UR3 (meters).
UR3_DH_ROWS = (
    # (a, alpha, d, theta_offset)
    (0.0, math.pi / 2, 0.1519, 0.0),
    (-0.24365, 0.0, 0.0, 0.0),
    (-0.21325, 0.0, 0.0, 0.0),
    (0.0, math.pi / 2, 0.11235, 0.0),
    (0.0, -math.pi / 2, 0.08535, 0.0),
    (0.0, 0.0, 0.0819, 0.0),
)

GRIPPER_MAX_WIDTH = 0.085


class KinematicsError(ValueError):
    """Malformed kinematic input (wrong frame, unsupported DH, bad limits)."""


class JointLimitError(KinematicsError):
    """A joint value violates the configured limits."""


@dataclass(frozen=True)
class DHTable:
    """Standard DH rows plus the flange->TCP tool transform."""

    rows: tuple[tuple[float, float, float, float], ...] = UR3_DH_ROWS
    tool: Pose6D = field(default_factory=lambda: Pose6D.from_translation(
        (0.0, 0.0, 0.15), Frame.OBJECT))
    limits: tuple[tuple[float, float], ...] = ((-TWO_PI, TWO_PI),) * 6

    def __post_init__(self):
        if len(self.rows) != 6 or len(self.limits) != 6:
            raise KinematicsError("DH table needs exactly 6 rows and 6 limit pairs")

    def check_limits(self, q) -> None:
        for i, (lo, hi) in enumerate(self.limits):
            if not (lo <= q[i] <= hi):
                raise JointLimitError(f"joint {i} value {q[i]:.4f} outside [{lo}, {hi}]")

    def is_ur_family(self) -> bool:
        a = [r[0] for r in self.rows]
        d = [r[2] for r in self.rows]
        alpha = [r[1] for r in self.rows]
        off = [r[3] for r in self.rows]
        pattern = [math.pi / 2, 0.0, 0.0, math.pi / 2, -math.pi / 2, 0.0]
        return (all(abs(x) < 1e-12 for x in (a[0], a[3], a[4], a[5], d[1], d[2]))
                and all(abs(al - p) < 1e-12 for al, p in zip(alpha, pattern))
                and all(abs(o) < 1e-12 for o in off))


@dataclass(frozen=True)
class GripperState:
    """Two-finger gripper: opening width plus normalized force/speed settings."""

    width: float = GRIPPER_MAX_WIDTH
    force_setting: float = 0.5
    speed_setting: float = 0.5
    held_object: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.width <= GRIPPER_MAX_WIDTH):
            raise ValueError(f"gripper width {self.width} outside [0, {GRIPPER_MAX_WIDTH}]")
        if not (0.0 <= self.force_setting <= 1.0 and 0.0 <= self.speed_setting <= 1.0):
            raise ValueError("force/speed settings are normalized to [0, 1]")


def _dh_mat(a, alpha, d, theta):
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def _flange_matrix(q, dh: DHTable) -> np.ndarray:
    m = _dh_mat(*dh.rows[0][:3], dh.rows[0][3] + q[0])
    for i in range(1, 6):
        a, alpha, d, off = dh.rows[i]
        m = m @ _dh_mat(a, alpha, d, off + q[i])
    return m


def fk(q, dh: DHTable) -> Pose6D:
    """TCP pose in the ROBOT_BASE frame for joint config q (6 radians)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (6,):
        raise KinematicsError("joint config must have 6 entries")
    dh.check_limits(q)
    m = _flange_matrix(q, dh) @ dh.tool.matrix
    return Pose6D.from_matrix(m, Frame.ROBOT_BASE)


def _wrap(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(angle + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def _inv_rigid(m: np.ndarray) -> np.ndarray:
    out = np.eye(4)
    rt = m[:3, :3].T
    out[:3, :3] = rt
    out[:3, 3] = -rt @ m[:3, 3]
    return out


def _fk_ok(q, dh, target_mat, tol=1e-9) -> bool:
    m = _flange_matrix(q, dh)
    return (np.abs(m[:3, 3] - target_mat[:3, 3]).max() < tol
            and np.abs(m[:3, :3] - target_mat[:3, :3]).max() < 10 * tol)


def _planar_ok(q2, q3, q4, t14, a2, a3, d4, tol=1e-9) -> bool:
    """A2(q2)A3(q3)A4(q4) must reproduce t14; with exact A1/A5/A6 this is
    equivalent to full-chain FK verification of the candidate."""
    m = _dh_mat(a2, 0.0, 0.0, q2) @ _dh_mat(a3, 0.0, 0.0, q3) \
        @ _dh_mat(0.0, math.pi / 2, d4, q4)
    return (np.abs(m[:3, 3] - t14[:3, 3]).max() < tol
            and np.abs(m[:3, :3] - t14[:3, :3]).max() < 10 * tol)


def ik(target: Pose6D, dh: DHTable, wrist_hint: float = 0.0) -> list[np.ndarray]:
    """All closed-form joint solutions reaching the TCP target (up to 8).

    Unreachable targets yield an empty list; malformed input (wrong frame or
    non-UR DH pattern) raises KinematicsError.  At a wrist singularity
    (|sin q5| < 1e-8) the one-parameter family is represented by the member
    with q4 = wrist_hint.
    """
    if target.frame is not Frame.ROBOT_BASE:
        raise KinematicsError(f"IK target must be in robot_base, got {target.frame.value}")
    if not dh.is_ur_family():
        raise KinematicsError("analytic IK requires the UR DH pattern")

    d1 = dh.rows[0][2]
    a2 = dh.rows[1][0]
    a3 = dh.rows[2][0]
    d4 = dh.rows[3][2]
    d5 = dh.rows[4][2]
    d6 = dh.rows[5][2]

    t06 = target.matrix @ np.linalg.inv(dh.tool.matrix)
    r = t06[:3, :3]
    px, py, pz = t06[:3, 3]

    # Shoulder: frame-5 origin projects onto a circle of radius d4 about z0.
    p5x = px - d6 * r[0, 2]
    p5y = py - d6 * r[1, 2]
    rad = math.hypot(p5x, p5y)
    if rad < abs(d4):
        return []
    psi = math.atan2(p5y, p5x)
    phi = math.asin(min(1.0, max(-1.0, d4 / rad)))
    theta1s = [_wrap(psi + phi), _wrap(psi + math.pi - phi)]

    sols: list[np.ndarray] = []
    for q1 in theta1s:
        s1, c1 = math.sin(q1), math.cos(q1)
        c5 = (px * s1 - py * c1 - d4) / d6
        if abs(c5) > 1.0 + 1e-12:
            continue
        if abs(c5) >= 1.0 - 1e-12:
            # Wrist singularity: q4/q6 redundant; pin q4 at the hint.
            q5 = 0.0 if c5 > 0 else math.pi
            for cand in _singular_family(t06, q1, q5, wrist_hint,
                                         d1, a2, a3, d4, d5, d6):
                if _fk_ok(cand, dh, t06, tol=1e-8):
                    _push(sols, cand)
            continue
        c5 = min(1.0, max(-1.0, c5))
        for q5 in (math.acos(c5), -math.acos(c5)):
            s5 = math.sin(q5)
            q6 = math.atan2((-r[0, 1] * s1 + r[1, 1] * c1) / s5,
                            (r[0, 0] * s1 - r[1, 0] * c1) / s5)
            for q2, q3, q4, t14 in _solve_planar(t06, q1, q5, q6, d1, a2, a3, d4, d5, d6):
                if _planar_ok(q2, q3, q4, t14, a2, a3, d4):
                    _push(sols, np.array([q1, q2, q3, q4, q5, q6]))
    return sols


def _singular_family(t06, q1, q5, wrist_hint, d1, a2, a3, d4, d5, d6):
    """Representatives of the singular one-parameter family with q4 = hint.

    The measured q4 depends on the assumed q6, so slide q6 by fixed-point
    iteration until q4 lands on the hint (both slide directions tried; the
    elbow branches give up to two members).
    """
    out = []
    for branch in (0, 1):
        for sign in (1.0, -1.0):
            q6 = 0.0
            result = None
            for _ in range(50):
                planar = _solve_planar(t06, q1, q5, q6, d1, a2, a3, d4, d5, d6)
                if len(planar) <= branch:
                    result = None
                    break
                q2, q3, q4, _ = planar[branch]
                err = _wrap(q4 - wrist_hint)
                result = np.array([q1, q2, q3, q4, q5, q6])
                if abs(err) < 1e-12:
                    break
                q6 = _wrap(q6 + sign * err)
            if result is not None and abs(_wrap(result[3] - wrist_hint)) < 1e-9:
                out.append(result)
                break
    return out


def _solve_planar(t06, q1, q5, q6, d1, a2, a3, d4, d5, d6):
    """(q2, q3, q4, t14) tuples for fixed q1, q5, q6 (elbow up/down)."""
    a1m = _dh_mat(0.0, math.pi / 2, d1, q1)
    a5m = _dh_mat(0.0, -math.pi / 2, d5, q5)
    a6m = _dh_mat(0.0, 0.0, d6, q6)
    t14 = _inv_rigid(a1m) @ t06 @ _inv_rigid(a5m @ a6m)
    x14, y14 = t14[0, 3], t14[1, 3]
    c3 = (x14 * x14 + y14 * y14 - a2 * a2 - a3 * a3) / (2.0 * a2 * a3)
    if abs(c3) > 1.0 + 1e-12:
        return []
    c3 = min(1.0, max(-1.0, c3))
    q234 = math.atan2(t14[1, 0], t14[0, 0])
    out = []
    for q3 in (math.acos(c3), -math.acos(c3)):
        q2 = math.atan2(y14, x14) - math.atan2(a3 * math.sin(q3), a2 + a3 * math.cos(q3))
        q4 = q234 - q2 - q3
        out.append((_wrap(q2), _wrap(q3), _wrap(q4), t14))
    return out


def _push(sols: list[np.ndarray], cand: np.ndarray, tol: float = 1e-8) -> None:
    for s in sols:
        if np.abs(s - cand).max() < tol:
            return
    sols.append(cand)


def select_solution(solutions: list[np.ndarray], current,
                    weights=None) -> np.ndarray:
    """Solution minimizing the weighted max joint displacement from current.

    Ties break toward the lowest list index.
    """
    if not solutions:
        raise KinematicsError("no IK solutions to select from")
    current = np.asarray(current, dtype=np.float64)
    w = np.ones(6) if weights is None else np.asarray(weights, dtype=np.float64)
    best, best_cost = None, math.inf
    for s in solutions:
        cost = float(np.max(w * np.abs(s - current)))
        if cost < best_cost - 1e-15:
            best, best_cost = s, cost
    return best
