"""DH forward kinematics, geometric Jacobians and pose arithmetic.

Rows follow the standard (distal) DH convention,
``T_i = Rz(theta_i) Tz(d_i) Tx(a_i) Rx(alpha_i)``. Joint indices in this
module are 0-based; configs and logs use 1-based numbering (q1 = spine).

Quaternions are stored scalar-last ``(x, y, z, w)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .qp import DimensionMismatch

HALF_PI = np.pi / 2


class InvalidScale(ValueError):
    pass


class InvalidBaseSpec(ValueError):
    pass


@dataclass(frozen=True)
class DhRow:
    theta_offset: float
    a: float
    alpha: float
    d: float
    prismatic: bool = False
    sign: float = 1.0

    def transform(self, q: float) -> np.ndarray:
        if self.prismatic:
            theta, d = self.theta_offset, self.d + self.sign * q
        else:
            theta, d = self.theta_offset + self.sign * q, self.d
        return dh_transform(theta, self.a, self.alpha, d)


def dh_transform(theta: float, a: float, alpha: float, d: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


@dataclass(frozen=True)
class KinematicChain:
    rows: tuple[DhRow, ...]
    q_min: np.ndarray
    q_max: np.ndarray
    qd_min: np.ndarray
    qd_max: np.ndarray
    base_transform: np.ndarray = field(default_factory=lambda: np.eye(4))
    base_frame: str = "base"
    joint_names: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.rows)
        for name in ("q_min", "q_max", "qd_min", "qd_max"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape[0] != n:
                raise DimensionMismatch(f"{name} has {v.shape[0]} entries for {n} joints")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if np.any(self.q_min > self.q_max):
            raise ValueError("q_min exceeds q_max")
        if np.any(self.qd_min > 0) or np.any(self.qd_max < 0):
            raise ValueError("velocity limits must bracket zero")
        bt = np.asarray(self.base_transform, dtype=float)
        bt.setflags(write=False)
        object.__setattr__(self, "base_transform", bt)
        if not self.joint_names:
            object.__setattr__(self, "joint_names", tuple(f"q{i + 1}" for i in range(n)))

    @property
    def n_joints(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class Pose:
    position: np.ndarray
    quaternion: np.ndarray  # (x, y, z, w)

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        q = q / np.linalg.norm(q)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        return cls(T[:3, 3], Rotation.from_matrix(T[:3, :3]).as_quat())

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]))

    @property
    def rotation(self) -> np.ndarray:
        return Rotation.from_quat(self.quaternion).as_matrix()

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def compose(self, other: "Pose") -> "Pose":
        """``self * other`` with ``other`` expressed in this pose's frame."""
        return Pose.from_matrix(self.matrix() @ other.matrix())

    def inverse(self) -> "Pose":
        R = self.rotation
        T = np.eye(4)
        T[:3, :3] = R.T
        T[:3, 3] = -R.T @ self.position
        return Pose.from_matrix(T)

    def integrate(self, twist: np.ndarray, dt: float) -> "Pose":
        """Advance by a twist ``(v, w)`` expressed in the parent frame."""
        twist = np.asarray(twist, dtype=float)
        rot = Rotation.from_rotvec(twist[3:] * dt) * Rotation.from_quat(self.quaternion)
        return Pose(self.position + twist[:3] * dt, rot.as_quat())


def pose_error(target: Pose, measured: Pose) -> np.ndarray:
    """Position difference stacked with the rotation vector of R_t R_m^T."""
    dp = target.position - measured.position
    rel = Rotation.from_quat(target.quaternion) * Rotation.from_quat(measured.quaternion).inv()
    return np.concatenate([dp, rel.as_rotvec()])


def forward_frames(chain: KinematicChain, q) -> list[np.ndarray]:
    """Base frame followed by the frame after each joint, all in the base frame."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != chain.n_joints:
        raise DimensionMismatch(f"expected {chain.n_joints} joint values, got {q.shape[0]}")
    T = np.array(chain.base_transform)
    frames = [T]
    for row, qi in zip(chain.rows, q):
        T = T @ row.transform(qi)
        frames.append(T)
    return frames


def fk(chain: KinematicChain, q) -> Pose:
    return Pose.from_matrix(forward_frames(chain, q)[-1])


def geometric_jacobian(chain: KinematicChain, q) -> np.ndarray:
    frames = forward_frames(chain, q)
    p_end = frames[-1][:3, 3]
    J = np.zeros((6, chain.n_joints))
    for i, row in enumerate(chain.rows):
        z = frames[i][:3, 2] * row.sign
        if row.prismatic:
            J[:3, i] = z
        else:
            J[:3, i] = np.cross(z, p_end - frames[i][:3, 3])
            J[3:, i] = z
    return J


def joint_axis_world(chain: KinematicChain, q, joint_index: int) -> np.ndarray:
    """Motion axis of joint ``joint_index`` (0-based) in the chain's base frame."""
    if not 0 <= joint_index < chain.n_joints:
        raise DimensionMismatch(f"joint index {joint_index} out of range")
    frames = forward_frames(chain, q)
    return frames[joint_index][:3, 2] * chain.rows[joint_index].sign


def joint_axes(chain: KinematicChain, q) -> np.ndarray:
    frames = forward_frames(chain, q)
    return np.array([frames[i][:3, 2] * r.sign for i, r in enumerate(chain.rows)])


# --------------------------------------------------------------------------
# human upper limb

HUMAN_JOINTS = (
    "spine_flexion",
    "shoulder_abduction",
    "shoulder_flexion",
    "shoulder_rotation",
    "elbow_flexion",
    "forearm_pronation",
    "wrist_flexion",
    "wrist_deviation",
)


def human_dh_rows(l_spine, l_humerus, l_radius) -> tuple[DhRow, ...]:
    """The eight rows of the human upper-limb table for given link vectors."""
    ls = np.asarray(l_spine, dtype=float)
    lh = np.asarray(l_humerus, dtype=float)
    lr = np.asarray(l_radius, dtype=float)
    return (
        DhRow(0.0, ls[2], -HALF_PI, -ls[1]),
        DhRow(0.0, 0.0, HALF_PI, -ls[0]),
        DhRow(HALF_PI, 0.0, HALF_PI, 0.0),
        DhRow(-HALF_PI, -lh[0], HALF_PI, -lh[2]),
        DhRow(np.pi, 0.0, HALF_PI, -lh[1]),
        DhRow(HALF_PI, -lr[1], HALF_PI, -lr[2]),
        DhRow(HALF_PI, 0.0, HALF_PI, -lr[0]),
        DhRow(0.0, 0.0, 0.0, 0.0),
    )


def build_human_chain(
    l_spine,
    l_humerus,
    l_radius,
    q_min,
    q_max,
    velocity_limit: float = 2.5,
) -> KinematicChain:
    """8-DoF spine + arm chain expressed in the pelvis frame.

    Link vectors hold non-negative segment components ``(x, y, z)``; a zero
    vector collapses the segment.
    """
    for name, v in (("l_spine", l_spine), ("l_humerus", l_humerus), ("l_radius", l_radius)):
        v = np.asarray(v, dtype=float)
        if v.shape != (3,) or np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidScale(f"{name} must be a non-negative 3-vector, got {v}")
    q_min = np.asarray(q_min, dtype=float)
    q_max = np.asarray(q_max, dtype=float)
    if np.any(q_min > q_max):
        raise ValueError("healthy RoM lower bound exceeds upper bound")
    v = np.full(8, float(velocity_limit))
    return KinematicChain(
        rows=human_dh_rows(l_spine, l_humerus, l_radius),
        q_min=q_min,
        q_max=q_max,
        qd_min=-v,
        qd_max=v,
        base_frame="pelvis",
        joint_names=HUMAN_JOINTS,
    )


# --------------------------------------------------------------------------
# mobile manipulator

# Frame the first prismatic row so it slides along world x, the second along
# world y, leaving the third (revolute) aligned with world z.
_BASE_TRANSFORM = np.array(
    [
        [0.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
_BASE_ROWS = (
    DhRow(HALF_PI, 0.0, HALF_PI, 0.0, prismatic=True),
    DhRow(HALF_PI, 0.0, HALF_PI, 0.0, prismatic=True),
    DhRow(0.0, 0.0, 0.0, 0.0),
)

# 7-DoF arm with iiwa-like geometry; an artifact default, not vendor data.
DEFAULT_ARM_DH = (
    DhRow(0.0, 0.0, -HALF_PI, 0.34),
    DhRow(0.0, 0.0, HALF_PI, 0.0),
    DhRow(0.0, 0.0, HALF_PI, 0.40),
    DhRow(0.0, 0.0, -HALF_PI, 0.0),
    DhRow(0.0, 0.0, -HALF_PI, 0.40),
    DhRow(0.0, 0.0, HALF_PI, 0.0),
    DhRow(0.0, 0.0, 0.0, 0.126),
)
DEFAULT_ARM_Q_MAX = np.radians([170, 120, 170, 120, 170, 120, 175])
DEFAULT_ARM_QD_MAX = np.radians([85, 85, 100, 75, 130, 135, 135])


@dataclass(frozen=True)
class BaseSpec:
    """Planar base: x, y (prismatic, m) and heading (revolute, rad)."""

    q_min: tuple[float, float, float] = (-10.0, -10.0, -2 * np.pi)
    q_max: tuple[float, float, float] = (10.0, 10.0, 2 * np.pi)
    qd_max: tuple[float, float, float] = (0.5, 0.5, 1.0)
    mount_height: float = 0.0


def build_robot_chain(
    arm_rows=DEFAULT_ARM_DH,
    base: BaseSpec | None = None,
    arm_q_min=None,
    arm_q_max=None,
    arm_qd_max=None,
) -> KinematicChain:
    """Planar base (x, y, theta) followed by the arm, in the world frame."""
    base = base or BaseSpec()
    arm_rows = tuple(arm_rows)
    if len(base.q_min) != 3 or len(base.q_max) != 3 or len(base.qd_max) != 3:
        raise InvalidBaseSpec("base needs exactly three DoFs (x, y, theta)")
    if np.any(np.asarray(base.q_min) > np.asarray(base.q_max)) or np.any(np.asarray(base.qd_max) < 0):
        raise InvalidBaseSpec("base limits are not well ordered")
    if not arm_rows:
        raise InvalidBaseSpec("arm has no joints")
    na = len(arm_rows)
    arm_q_max = DEFAULT_ARM_Q_MAX if arm_q_max is None else np.asarray(arm_q_max, float)
    arm_q_min = -arm_q_max if arm_q_min is None else np.asarray(arm_q_min, float)
    arm_qd_max = DEFAULT_ARM_QD_MAX if arm_qd_max is None else np.asarray(arm_qd_max, float)
    if len(arm_q_max) != na or len(arm_qd_max) != na:
        raise InvalidBaseSpec("arm limits do not match the number of arm rows")

    first = arm_rows[0]
    rows = _BASE_ROWS + (replace(first, d=first.d + base.mount_height),) + arm_rows[1:]
    qd_max = np.concatenate([base.qd_max, arm_qd_max])
    names = ("base_x", "base_y", "base_theta") + tuple(f"arm_{i + 1}" for i in range(na))
    return KinematicChain(
        rows=rows,
        q_min=np.concatenate([base.q_min, arm_q_min]),
        q_max=np.concatenate([base.q_max, arm_q_max]),
        qd_min=-qd_max,
        qd_max=qd_max,
        base_transform=_BASE_TRANSFORM,
        base_frame="world",
        joint_names=names,
    )


def arm_only_chain(arm_rows=DEFAULT_ARM_DH, mount_height: float = 0.0) -> KinematicChain:
    """The arm on its own, rooted at the base frame (used as an FK oracle)."""
    arm_rows = tuple(arm_rows)
    first = arm_rows[0]
    rows = (replace(first, d=first.d + mount_height),) + arm_rows[1:]
    n = len(rows)
    big = np.full(n, 1e3)
    return KinematicChain(rows, -big, big, -big, big, base_frame="base")


def planar_transform(x: float, y: float, theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0, x], [s, c, 0.0, y], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])


def scale_chain(chain: KinematicChain, factor: float) -> KinematicChain:
    """Scale every length parameter (a, fixed d, base translation) by ``factor``."""
    rows = tuple(replace(r, a=r.a * factor, d=r.d * factor) for r in chain.rows)
    bt = np.array(chain.base_transform)
    bt[:3, 3] *= factor
    return replace(chain, rows=rows, base_transform=bt)


def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
