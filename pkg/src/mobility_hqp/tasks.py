"""Objective blocks and constraint rows over the augmented decision vector.

The decision vector is laid out as

    chi = [ qd_robot (N) | twist_robot_world (6) | qd_human (M) | twist_hand_pelvis (6) ]

and every block below returns ``(A, b)`` (objective, ``min ||A chi - b||^2``)
or a :class:`ConstraintSet` (``C chi <= d``) with ``s`` columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntFlag

import numpy as np
from scipy.spatial.transform import Rotation

from .impairment import ImpairmentProfile, RomBounds
from .kinematics import Pose, pose_error, skew
from .qp import DimensionMismatch, HierarchyStack, TaskLevel, weighted_stack_level


@dataclass(frozen=True)
class StateLayout:
    n_robot: int = 10
    n_human: int = 8

    @property
    def size(self) -> int:
        return self.n_robot + self.n_human + 12

    @property
    def qd_robot(self) -> slice:
        return slice(0, self.n_robot)

    @property
    def twist_robot(self) -> slice:
        return slice(self.n_robot, self.n_robot + 6)

    @property
    def qd_human(self) -> slice:
        s = self.n_robot + 6
        return slice(s, s + self.n_human)

    @property
    def twist_human(self) -> slice:
        s = self.n_robot + 6 + self.n_human
        return slice(s, s + 6)

    def split(self, chi):
        chi = np.asarray(chi)
        return chi[self.qd_robot], chi[self.twist_robot], chi[self.qd_human], chi[self.twist_human]


class MissingPreviousState(ValueError):
    pass


class Group(IntFlag):
    """Constraint families; used for the active-constraint bitmask in logs."""

    HUMAN_JOINT_POS = 1
    HUMAN_JOINT_VEL = 2
    ROBOT_JOINT_POS = 4
    ROBOT_JOINT_VEL = 8
    TASK_POS = 16
    TASK_VEL = 32
    ARMREST = 64
    SEPARATION = 128
    BODY_CLEARANCE = 256


@dataclass
class ConstraintSet:
    C: np.ndarray
    d: np.ndarray
    groups: np.ndarray  # Group value per row
    clamped: list[str] = field(default_factory=list)

    @classmethod
    def empty(cls, s: int) -> "ConstraintSet":
        return cls(np.zeros((0, s)), np.zeros(0), np.zeros(0, dtype=int))

    def __add__(self, other: "ConstraintSet") -> "ConstraintSet":
        return ConstraintSet(
            np.vstack([self.C, other.C]),
            np.concatenate([self.d, other.d]),
            np.concatenate([self.groups, other.groups]),
            self.clamped + other.clamped,
        )

    def margins(self, chi) -> np.ndarray:
        return self.d - self.C @ chi

    def active_mask(self, chi, tol: float = 1e-7) -> int:
        act = self.margins(chi) <= tol
        mask = 0
        for g in np.unique(self.groups[act]):
            mask |= int(g)
        return mask


def _block(layout: StateLayout, rows: int) -> np.ndarray:
    return np.zeros((rows, layout.size))


# --------------------------------------------------------------------------
# objectives


def robot_clik_block(J, gains, desired: Pose, measured: Pose, layout: StateLayout):
    """``J qd_R - (twist_R + K e)`` with ``e`` the world-frame pose error."""
    J = np.asarray(J, dtype=float)
    if J.shape != (6, layout.n_robot):
        raise DimensionMismatch(f"robot Jacobian must be 6x{layout.n_robot}, got {J.shape}")
    K = np.diag(np.broadcast_to(np.asarray(gains, dtype=float), (6,)))
    A = _block(layout, 6)
    A[:, layout.qd_robot] = J
    A[:, layout.twist_robot] = -np.eye(6)
    return A, K @ pose_error(desired, measured)


def human_clik_block(J, gains, desired: Pose, measured: Pose, layout: StateLayout):
    """Mirror of :func:`robot_clik_block` in the human columns, pelvis frame."""
    J = np.asarray(J, dtype=float)
    if J.shape != (6, layout.n_human):
        raise DimensionMismatch(f"human Jacobian must be 6x{layout.n_human}, got {J.shape}")
    K = np.diag(np.broadcast_to(np.asarray(gains, dtype=float), (6,)))
    A = _block(layout, 6)
    A[:, layout.qd_human] = J
    A[:, layout.twist_human] = -np.eye(6)
    return A, K @ pose_error(desired, measured)


@dataclass
class InteractionFrameData:
    pelvis_rotation: np.ndarray  # pelvis -> world
    pelvis_position: np.ndarray
    robot_pose_prev: Pose | None  # optimal robot ee pose, world frame
    human_pose_prev: Pose | None  # optimal hand pose, pelvis frame
    grasp_offset: Pose = field(default_factory=Pose.identity)  # hand frame -> robot grasp
    pelvis_velocity: np.ndarray = field(default_factory=lambda: np.zeros(6))

    @property
    def pelvis_pose(self) -> Pose:
        T = np.eye(4)
        T[:3, :3] = self.pelvis_rotation
        T[:3, 3] = self.pelvis_position
        return Pose.from_matrix(T)

    def human_grasp_world(self, hand_in_pelvis: Pose) -> Pose:
        return self.pelvis_pose.compose(hand_in_pelvis).compose(self.grasp_offset)


def relative_error(frames: InteractionFrameData, robot: Pose, hand_in_pelvis: Pose) -> np.ndarray:
    """Robot ee pose minus the robot grasp pose implied by the hand pose."""
    return pose_error(robot, frames.human_grasp_world(hand_in_pelvis))


def interacting_ee_block(frames: InteractionFrameData, dt: float, layout: StateLayout):
    """Bring next-tick optimal poses together, up to the grasp offset."""
    if frames.robot_pose_prev is None or frames.human_pose_prev is None:
        raise MissingPreviousState("interacting end-effector task needs previous optimal poses")
    R = np.asarray(frames.pelvis_rotation, dtype=float)
    hand_world = frames.pelvis_pose.compose(frames.human_pose_prev)
    lever = hand_world.rotation @ frames.grasp_offset.position
    G = np.zeros((6, 6))
    G[:3, :3] = R
    G[:3, 3:] = -skew(lever) @ R
    G[3:, 3:] = R

    e = relative_error(frames, frames.robot_pose_prev, frames.human_pose_prev)
    A = _block(layout, 6)
    A[:, layout.twist_robot] = dt * np.eye(6)
    A[:, layout.twist_human] = -dt * G
    b = -e + dt * np.asarray(frames.pelvis_velocity, dtype=float)
    return A, b


def impairment_damping_block(profile: ImpairmentProfile, layout: StateLayout):
    w = profile.severity
    if w.shape[0] != layout.n_human:
        raise DimensionMismatch("severity diagonal does not match the human joint count")
    A = _block(layout, layout.n_human)
    A[:, layout.qd_human] = np.diag(w)
    return A, np.zeros(layout.n_human)


@dataclass(frozen=True)
class GateParams:
    d_min: float = 0.1
    d_max: float = 0.2
    orthogonality_threshold: float = 0.1
    sagittal_normal: tuple[float, float, float] = (0.0, 0.0, 1.0)  # pelvis frame

    def __post_init__(self):
        if not 0 < self.d_min < self.d_max:
            raise ValueError("gate needs 0 < d_min < d_max")


def gate_value(d: float, params: GateParams) -> float:
    """Activation of the sagittal task for an in-plane joint axis at distance ``d``."""
    if d >= params.d_max:
        return 1.0
    if d > params.d_min:
        x = (d - params.d_min) / (params.d_max - params.d_min)
        return 0.5 * (1.0 - np.cos(x * np.pi))
    return 0.0


def sagittal_gate(d_sagittal: float, axes, params: GateParams) -> np.ndarray:
    """Diagonal selection matrix for joints whose motion leaves the sagittal plane."""
    n = np.asarray(params.sagittal_normal, dtype=float)
    n = n / np.linalg.norm(n)
    g = gate_value(float(d_sagittal), params)
    s = [g if abs(float(np.dot(h, n))) < params.orthogonality_threshold else 0.0 for h in axes]
    return np.diag(s)


def sagittal_block(S, layout: StateLayout):
    A = _block(layout, layout.n_human)
    A[:, layout.qd_human] = S
    return A, np.zeros(layout.n_human)


def pelvis_block(layout: StateLayout):
    A = _block(layout, 1)
    A[0, layout.qd_human.start] = 1.0
    return A, np.zeros(1)


def regularization_block(layout: StateLayout):
    A = _block(layout, layout.n_robot)
    A[:, layout.qd_robot] = np.eye(layout.n_robot)
    return A, np.zeros(layout.n_robot)


def human_regularization_block(layout: StateLayout):
    A = _block(layout, layout.n_human)
    A[:, layout.qd_human] = np.eye(layout.n_human)
    return A, np.zeros(layout.n_human)


def homing_block(q_robot, q_homing, gain: float, layout: StateLayout):
    """Velocity-level postural task ``qd_R = gain (q_homing - q_R)``."""
    A = _block(layout, layout.n_robot)
    A[:, layout.qd_robot] = np.eye(layout.n_robot)
    return A, gain * (np.asarray(q_homing, float) - np.asarray(q_robot, float))


# --------------------------------------------------------------------------
# constraints


def _one_step_rows(cols, n, prev, lower, upper, vmin, vmax, dt, s, pos_group, vel_group, tag):
    C = np.zeros((4 * n, s))
    eye = np.eye(n)
    C[0:n, cols] = dt * eye
    C[n:2 * n, cols] = -dt * eye
    C[2 * n:3 * n, cols] = eye
    C[3 * n:4 * n, cols] = -eye
    up = upper - prev
    lo = prev - lower
    clamped = []
    for i in np.flatnonzero((up < -1e-9) | (lo < -1e-9)):
        clamped.append(f"{tag}[{i + 1}]")
    d = np.concatenate([np.maximum(up, 0.0), np.maximum(lo, 0.0), vmax, -vmin])
    groups = np.array([pos_group] * 2 * n + [vel_group] * 2 * n, dtype=int)
    return ConstraintSet(C, d, groups, clamped)


def joint_constraints(q_prev, bounds, qd_min, qd_max, dt: float, layout: StateLayout, which: str):
    """One-step position rows plus velocity boxes for one agent's joints.

    ``bounds`` is a :class:`RomBounds` or a ``(lower, upper)`` pair. A joint
    already outside its bounds is clamped: its row only forbids moving further
    out, and the joint is listed in ``ConstraintSet.clamped``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(bounds, RomBounds):
        lower, upper = bounds.lower, bounds.upper
    else:
        lower, upper = (np.asarray(b, dtype=float) for b in bounds)
    if which == "human":
        cols, n = layout.qd_human, layout.n_human
        groups = (Group.HUMAN_JOINT_POS, Group.HUMAN_JOINT_VEL)
    elif which == "robot":
        cols, n = layout.qd_robot, layout.n_robot
        groups = (Group.ROBOT_JOINT_POS, Group.ROBOT_JOINT_VEL)
    else:
        raise ValueError(f"which must be 'human' or 'robot', got {which!r}")
    q_prev = np.asarray(q_prev, dtype=float)
    if q_prev.shape[0] != n:
        raise DimensionMismatch(f"{which} joint vector has {q_prev.shape[0]} entries, expected {n}")
    return _one_step_rows(cols, n, q_prev, lower, upper, np.asarray(qd_min, float),
                          np.asarray(qd_max, float), dt, layout.size, int(groups[0]), int(groups[1]),
                          which)


@dataclass(frozen=True)
class TaskSpaceLimits:
    position: float = 5.0  # +- m
    orientation: float = np.pi  # +- rad, on the rotation-vector components
    linear_velocity: float = 10.0  # +- m/s
    angular_velocity: float = np.pi  # +- rad/s
    armrest_z: float | None = None  # world z lower bound for hand and robot ee
    separation: float | None = 0.3  # horizontal robot ee distance from pelvis
    body_clearance: float | None = 0.25  # robot ee ahead of the human frontal plane
    joint_margin: float = 2e-3  # extra margin on the Jacobian-linearised rows
    forward_axis: tuple[float, float, float] = (0.0, 1.0, 0.0)  # pelvis frame


@dataclass
class AgentState:
    """Current configuration-level data for the Jacobian-linearised rows."""

    position: np.ndarray  # ee position, agent base frame
    jacobian: np.ndarray  # 6 x n, agent base frame


def task_space_constraints(
    robot_prev: Pose,
    human_prev: Pose,
    frames: InteractionFrameData,
    limits: TaskSpaceLimits,
    dt: float,
    layout: StateLayout,
    robot_state: AgentState | None = None,
    human_state: AgentState | None = None,
) -> ConstraintSet:
    """Task-space boxes and scenario half-spaces on both agents.

    Rows on the twist blocks act on the optimal poses and hold exactly one
    step ahead. ``robot_state``/``human_state`` add the same half-spaces on
    the joint-integrated ee positions, linearised through the Jacobian.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    s = layout.size
    rows, rhs, groups, clamped = [], [], [], []

    def add(row, bound, group, tag):
        if bound < -1e-9:
            clamped.append(tag)
        rows.append(row)
        rhs.append(max(bound, 0.0))
        groups.append(int(group))

    for name, pose, cols in (("robot", robot_prev, layout.twist_robot), ("human", human_prev, layout.twist_human)):
        cur = np.concatenate([pose.position, _rotvec(pose)])
        lim_pos = np.array([limits.position] * 3 + [limits.orientation] * 3)
        lim_vel = np.array([limits.linear_velocity] * 3 + [limits.angular_velocity] * 3)
        for k in range(6):
            r = np.zeros(s)
            r[cols.start + k] = dt
            add(r, lim_pos[k] - cur[k], Group.TASK_POS, f"{name}_x[{k}]")
            add(-r, cur[k] + lim_pos[k], Group.TASK_POS, f"{name}_x[{k}]")
            r = np.zeros(s)
            r[cols.start + k] = 1.0
            add(r, lim_vel[k], Group.TASK_VEL, f"{name}_xd[{k}]")
            add(-r, lim_vel[k], Group.TASK_VEL, f"{name}_xd[{k}]")

    R = np.asarray(frames.pelvis_rotation, dtype=float)
    c = np.asarray(frames.pelvis_position, dtype=float)
    ez = np.array([0.0, 0.0, 1.0])

    if limits.armrest_z is not None:
        z0 = limits.armrest_z
        r = np.zeros(s)
        r[layout.twist_robot.start + 2] = -dt
        add(r, robot_prev.position[2] - z0, Group.ARMREST, "armrest_robot")
        hand_w = c + R @ human_prev.position
        r = np.zeros(s)
        r[layout.twist_human][:3] = -dt * (R.T @ ez)
        add(r, hand_w[2] - z0, Group.ARMREST, "armrest_human")
        zj = z0 + limits.joint_margin
        if robot_state is not None:
            r = np.zeros(s)
            r[layout.qd_robot] = -dt * robot_state.jacobian[2]
            add(r, robot_state.position[2] - zj, Group.ARMREST, "armrest_robot_joint")
        if human_state is not None:
            r = np.zeros(s)
            r[layout.qd_human] = -dt * ((R @ human_state.jacobian[:3])[2])
            add(r, (c + R @ human_state.position)[2] - zj, Group.ARMREST, "armrest_human_joint")

    def radial(p):
        h = p - c
        h[2] = 0.0
        nrm = np.linalg.norm(h)
        return h / nrm if nrm > 1e-9 else (R @ np.asarray(limits.forward_axis, float)) * np.array([1, 1, 0])

    if limits.separation is not None:
        sep = limits.separation
        n = radial(robot_prev.position.copy())
        r = np.zeros(s)
        r[layout.twist_robot][:3] = -dt * n
        add(r, n @ (robot_prev.position - c) - sep, Group.SEPARATION, "separation")
        if robot_state is not None:
            n = radial(robot_state.position.copy())
            r = np.zeros(s)
            r[layout.qd_robot] = -dt * (n @ robot_state.jacobian[:3])
            add(r, n @ (robot_state.position - c) - sep - limits.joint_margin, Group.SEPARATION,
                "separation_joint")

    if limits.body_clearance is not None:
        fwd = R @ np.asarray(limits.forward_axis, dtype=float)
        fwd[2] = 0.0
        fwd /= np.linalg.norm(fwd)
        clr = limits.body_clearance
        r = np.zeros(s)
        r[layout.twist_robot][:3] = -dt * fwd
        add(r, fwd @ (robot_prev.position - c) - clr, Group.BODY_CLEARANCE, "clearance")
        if robot_state is not None:
            r = np.zeros(s)
            r[layout.qd_robot] = -dt * (fwd @ robot_state.jacobian[:3])
            add(r, fwd @ (robot_state.position - c) - clr - limits.joint_margin, Group.BODY_CLEARANCE,
                "clearance_joint")

    return ConstraintSet(np.array(rows), np.array(rhs), np.array(groups, dtype=int), clamped)


def _rotvec(pose: Pose) -> np.ndarray:
    return Rotation.from_quat(pose.quaternion).as_rotvec()


# --------------------------------------------------------------------------
# stack assembly


@dataclass(frozen=True)
class TaskWeights:
    alpha: float = 100.0
    beta: float = 100.0
    gamma: float = 10.0
    delta: float = 0.001
    pelvis: float = 10.0
    # Damped-least-squares term on the human joints; keeps near-singular arm
    # postures from producing large null-space velocities.
    human_damping: float = 0.01
    # Tiny damping on the whole state so the lowest level has a unique minimiser.
    tikhonov: float = 1e-6


PHASES = ("approach", "hold", "retreat", "done")


@dataclass
class ApproachBlocks:
    interacting: tuple[np.ndarray, np.ndarray]
    damping: tuple[np.ndarray, np.ndarray]
    human_clik: tuple[np.ndarray, np.ndarray]
    sagittal: tuple[np.ndarray, np.ndarray]
    robot_clik: tuple[np.ndarray, np.ndarray]
    pelvis: tuple[np.ndarray, np.ndarray]
    regularization: tuple[np.ndarray, np.ndarray]


def hold_rows(layout: StateLayout):
    return np.eye(layout.size), np.zeros(layout.size)


def retreat_rows(homing, robot_jacobian, layout: StateLayout):
    """Homing on the robot joints; the robot twist follows J qd; human keeps still."""
    A_h, b_h = homing
    A_t = _block(layout, 6)
    A_t[:, layout.qd_robot] = robot_jacobian
    A_t[:, layout.twist_robot] = -np.eye(6)
    A_s = _block(layout, layout.n_human + 6)
    A_s[:layout.n_human, layout.qd_human] = np.eye(layout.n_human)
    A_s[layout.n_human:, layout.twist_human] = np.eye(6)
    return weighted_stack_level([(1.0, A_h, b_h), (1.0, A_t, np.zeros(6)),
                                 (1.0, A_s, np.zeros(layout.n_human + 6))])


def assemble_stack(
    phase: str,
    layout: StateLayout,
    constraints: ConstraintSet,
    weights: TaskWeights = TaskWeights(),
    approach: ApproachBlocks | None = None,
    retreat: tuple[np.ndarray, np.ndarray] | None = None,
    blend: float = 1.0,
) -> HierarchyStack:
    """Build the priority stack for the current phase.

    ``blend`` in [0, 1] cross-fades from the hold objective to the retreat
    objective while leaving the hold phase.
    """
    s = layout.size
    C, d = constraints.C, constraints.d
    if phase == "approach":
        if approach is None:
            raise ValueError("approach phase needs its objective blocks")
        A1, b1 = weighted_stack_level([(weights.alpha, *approach.interacting)])
        tasks = [
            (weights.beta, *approach.damping),
            (1.0, *approach.human_clik),
            (1.0, *approach.robot_clik),
            (weights.pelvis, *approach.pelvis),
            (weights.delta, *approach.regularization),
            (weights.human_damping, *human_regularization_block(layout)),
            (weights.tikhonov, np.eye(s), np.zeros(s)),
        ]
        if np.any(approach.sagittal[0]):
            tasks.insert(2, (weights.gamma, *approach.sagittal))
        A2, b2 = weighted_stack_level(tasks)
        levels = [TaskLevel(A1, b1, C, d, name="interaction"), TaskLevel(A2, b2, name="posture")]
    elif phase == "hold":
        A, b = hold_rows(layout)
        levels = [TaskLevel(A, b, C, d, name="hold")]
    elif phase == "retreat":
        if retreat is None:
            raise ValueError("retreat phase needs the homing rows")
        A_r, b_r = retreat
        if blend < 1.0:
            A_h, b_h = hold_rows(layout)
            A, b = weighted_stack_level([(1.0 - blend, A_h, b_h), (blend, A_r, b_r)]) if blend > 0 else (A_h, b_h)
        else:
            A, b = A_r, b_r
        levels = [TaskLevel(A, b, C, d, name="retreat")]
    else:
        raise ValueError(f"unknown phase {phase!r}")
    return HierarchyStack(levels, s)
