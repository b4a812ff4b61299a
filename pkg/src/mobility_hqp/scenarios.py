"""Scenario construction from configs, baseline transfer points and baseline runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .config import ScenarioConfig, load_config
from .controller import Controller, ControllerConfig, Setup, TrajectoryLog
from .impairment import RomBounds, severity_matrix_for_condition, ImpairmentProfile
from .kinematics import (
    BaseSpec,
    DhRow,
    KinematicChain,
    Pose,
    build_human_chain,
    build_robot_chain,
    fk,
    geometric_jacobian,
    pose_error,
)
from .qp import QpProblem, solve_qp, solve_hierarchy, HierarchyStack, TaskLevel, weighted_stack_level
from .tasks import (
    GateParams,
    StateLayout,
    TaskSpaceLimits,
    TaskWeights,
    human_regularization_block,
    regularization_block,
)

# Elbow at a right angle, every other joint anatomically neutral. In the human
# chain elbow flexion is negative and the neutral humeral rotation sits at
# q4 = -pi/2 (q4 = 0 turns the forearm across the body).
REBA_POSTURE = np.array([0.0, 0.0, 0.0, -np.pi / 2, -np.pi / 2, 0.0, 0.0, 0.0])
BASELINES = ("reba", "mindisp")


def pelvis_rotation(heading: float) -> np.ndarray:
    """Pelvis frame (x up, y forward, z left) in the world for a facing direction."""
    c, s = np.cos(heading), np.sin(heading)
    return np.array([[0.0, c, -s], [0.0, s, c], [1.0, 0.0, 0.0]])


def profile_from_config(cfg: ScenarioConfig) -> ImpairmentProfile:
    imp = cfg.impairment
    prof = severity_matrix_for_condition(
        imp.preset if imp.severity is None else "custom",
        zeta=imp.zeta_rad,
        wrist_factor=imp.wrist_factor,
        custom=None if imp.severity is None else np.asarray(imp.severity, float),
    )
    if imp.severity is not None and imp.preset.lower() not in ("custom", "healthy"):
        base = severity_matrix_for_condition(imp.preset, imp.zeta_rad, imp.wrist_factor)
        prof = ImpairmentProfile(prof.severity, prof.zeta, base.label, dict(base.overrides))
    if imp.bound_overrides_rad:
        overrides = dict(prof.overrides)
        overrides.update({int(j) - 1: tuple(b) for j, b in imp.bound_overrides_rad.items()})
        prof = ImpairmentProfile(prof.severity, prof.zeta, prof.label, overrides)
    return prof


def build_setup(cfg: ScenarioConfig) -> Setup:
    h, r, t, c, run = cfg.human, cfg.robot, cfg.task, cfg.constraints, cfg.run
    human = build_human_chain(h.l_spine_m, h.l_humerus_m, h.l_radius_m, h.rom_lower_rad, h.rom_upper_rad,
                              h.velocity_limit_rad_s)
    arm = tuple(DhRow(*row) for row in r.arm_dh)
    xy = r.base_xy_range_m
    base = BaseSpec((-xy, -xy, -2 * np.pi), (xy, xy, 2 * np.pi),
                    (r.base_linear_velocity_m_s, r.base_linear_velocity_m_s, r.base_angular_velocity_rad_s),
                    r.mount_height_m)
    arm_q_max = np.asarray(r.arm_q_max_rad, float)
    robot = build_robot_chain(arm, base, -arm_q_max, arm_q_max, np.asarray(r.arm_qd_max_rad_s, float))
    q_robot0 = np.r_[r.base_initial_x_m, r.base_initial_y_m, r.base_initial_theta_rad, r.arm_q_initial_rad]
    q_homing = None
    if r.arm_q_homing_rad is not None:
        q_homing = np.r_[q_robot0[:3], r.arm_q_homing_rad]

    limits = TaskSpaceLimits(
        position=c.position_box_m,
        orientation=c.orientation_box_rad,
        linear_velocity=c.linear_velocity_m_s,
        angular_velocity=c.angular_velocity_rad_s,
        armrest_z=c.armrest_z_m,
        separation=c.separation_m,
        body_clearance=c.body_clearance_m,
        joint_margin=c.joint_margin_m,
    )
    weights = TaskWeights(t.alpha, t.beta, t.gamma, t.delta, t.pelvis_weight, t.human_damping, t.tikhonov)
    ctrl = ControllerConfig(
        dt=t.dt_s,
        epsilon=t.epsilon,
        epsilon_relative=t.epsilon_relative,
        human_gain=tuple(t.human_gain),
        robot_gain=tuple(t.robot_gain),
        weights=weights,
        gate=GateParams(t.gate_d_min_m, t.gate_d_max_m, t.gate_orthogonality),
        gate_projected=t.gate_distance == "projected",
        limits=limits,
        kp_q=tuple(t.kp_joint),
        kd_q=tuple(t.kd_joint),
        hold_duration=run.hold_duration_s,
        blend_duration=run.blend_duration_s,
        homing_gain=run.homing_gain_1_s,
        homing_tolerance=run.homing_tolerance_rad,
        time_budget=run.time_budget_s,
        lag_tau=run.lag_tau_s,
        noise_std=run.noise_std,
        seed=run.seed,
    )
    o = cfg.object
    offset = Pose(np.asarray(o.offset_position_m, float), Rotation.from_rotvec(o.offset_rotvec_rad).as_quat())
    return Setup(
        human=human,
        robot=robot,
        profile=profile_from_config(cfg),
        healthy=RomBounds(human.q_min, human.q_max),
        q_human0=np.asarray(h.q_initial_rad, float),
        q_robot0=q_robot0,
        pelvis_rotation=pelvis_rotation(h.pelvis_heading_rad),
        pelvis_position=np.asarray(h.pelvis_position_m, float),
        grasp_offset=offset,
        config=ctrl,
        q_homing=q_homing,
    )


def load_setup(name_or_path: str) -> Setup:
    return build_setup(load_config(name_or_path))


def run_proposed(setup: Setup, duration: float | None = None) -> TrajectoryLog:
    return Controller(setup).run(duration)


# --------------------------------------------------------------------------
# baseline transfer points


def reba_transfer_point(human: KinematicChain, pelvis: Pose | None = None) -> Pose:
    """Hand pose at the nominal ergonomic posture, in the world (or pelvis) frame."""
    hand = fk(human, REBA_POSTURE)
    return hand if pelvis is None else pelvis.compose(hand)


@dataclass
class TransferRegion:
    """Half-spaces ``normal . p >= bound`` on the hand position, plus a box."""

    normals: np.ndarray
    bounds: np.ndarray
    box: float = 5.0

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, float)
        ok = np.all(self.normals @ p >= self.bounds - tol) if len(self.bounds) else True
        return bool(ok and np.all(np.abs(p) <= self.box + tol))


class Infeasible(RuntimeError):
    pass


def transfer_region(setup: Setup, hand_rotation: np.ndarray, reference_point) -> TransferRegion:
    """Task-space region a transfer point must satisfy for a fixed hand orientation.

    Robot-side rows act on the robot grasp point ``p + R_hand offset``. The
    horizontal separation is convex-approximated by the half-space along the
    pelvis-to-reference direction.
    """
    lim = setup.config.limits
    lever = hand_rotation @ setup.grasp_offset.position
    c = setup.pelvis_position
    normals, bounds = [], []
    if lim.armrest_z is not None:
        ez = np.array([0.0, 0.0, 1.0])
        normals += [ez, ez]
        bounds += [lim.armrest_z, lim.armrest_z - lever[2]]
    if lim.body_clearance is not None:
        fwd = setup.pelvis_rotation @ np.asarray(lim.forward_axis, float)
        fwd[2] = 0.0
        fwd /= np.linalg.norm(fwd)
        normals.append(fwd)
        bounds.append(lim.body_clearance + fwd @ c - fwd @ lever)
    if lim.separation is not None:
        h = np.asarray(reference_point, float) + lever - c
        h[2] = 0.0
        if np.linalg.norm(h) < 1e-9:
            h = setup.pelvis_rotation @ np.asarray(lim.forward_axis, float)
            h[2] = 0.0
        n = h / np.linalg.norm(h)
        normals.append(n)
        bounds.append(lim.separation + n @ c - n @ lever)
    return TransferRegion(np.array(normals).reshape(-1, 3), np.array(bounds), lim.position)


def min_displacement_transfer_point(initial_hand: Pose, region: TransferRegion) -> Pose:
    """Closest point of ``region`` to the initial hand position; orientation kept."""
    p0 = initial_hand.position
    C = np.vstack([-region.normals, np.eye(3), -np.eye(3)])
    d = np.concatenate([-region.bounds, np.full(3, region.box), np.full(3, region.box)])
    start = np.clip(p0, -region.box, region.box)
    try:
        sol = solve_qp(QpProblem(np.eye(3), p0, C, d), x0=start)
    except Exception as exc:
        raise Infeasible(f"transfer region is empty: {exc}") from exc
    return Pose(sol.x, initial_hand.quaternion)


def baseline_hand_pose(setup: Setup, method: str) -> Pose:
    """World-frame hand pose the baseline hands the object over at.

    Both baselines pick a Cartesian point only; the object keeps the
    orientation the robot initially holds it in, which fixes the hand
    orientation through the grasp offset.
    """
    pelvis = setup.pelvis_pose()
    if method == "reba":
        point = reba_transfer_point(setup.human, pelvis).position
    elif method == "mindisp":
        point = pelvis.compose(fk(setup.human, setup.q_human0)).position
    else:
        raise ValueError(f"unknown baseline {method!r}; expected one of {BASELINES}")
    robot0 = fk(setup.robot, setup.q_robot0)
    hand_rot = robot0.compose(setup.grasp_offset.inverse()).quaternion
    start = Pose(point, hand_rot)
    region = transfer_region(setup, start.rotation, start.position)
    return min_displacement_transfer_point(start, region)


# --------------------------------------------------------------------------
# baseline runs


class BaselineController(Controller):
    """Robot and human each servo to a fixed, precomputed transfer pose.

    The human side is a constrained CLIK under the impaired RoM; a secondary
    level pulls the remaining freedom toward the nominal posture, so
    compensation appears as the constrained-optimal deviation.
    """

    def __init__(self, setup: Setup, method: str, posture_gain: float = 1.0):
        hand_world = baseline_hand_pose(setup, method)
        self.hand_goal = setup.pelvis_pose().inverse().compose(hand_world)
        self.robot_goal = hand_world.compose(setup.grasp_offset)
        self.posture_gain = posture_gain
        self.method = method
        super().__init__(setup)

    def _approach_stack(self, cons):
        su, st, lay, cfg = self.setup, self.state, self.layout, self.setup.config
        J_r = geometric_jacobian(su.robot, st.q_robot)
        J_h = geometric_jacobian(su.human, st.q_human)
        K_r = np.asarray(cfg.robot_gain, float)
        K_h = np.asarray(cfg.human_gain, float)
        e_r = pose_error(self.robot_goal, fk(su.robot, st.q_robot))
        e_h = pose_error(self.hand_goal, fk(su.human, st.q_human))

        def rows(J, cols, twist, gain_err):
            A_track = np.zeros((6, lay.size))
            A_track[:, cols] = J
            A_twist = np.zeros((6, lay.size))
            A_twist[:, cols] = J
            A_twist[:, twist] = -np.eye(6)
            return (A_track, gain_err), (A_twist, np.zeros(6))

        (Ar, br), (Tr, tr) = rows(J_r, lay.qd_robot, lay.twist_robot, K_r * e_r)
        (Ah, bh), (Th, th) = rows(J_h, lay.qd_human, lay.twist_human, K_h * e_h)
        w = cfg.weights
        A1, b1 = weighted_stack_level([(1.0, Ar, br), (1.0, Ah, bh), (1.0, Tr, tr), (1.0, Th, th),
                                       (w.human_damping, *human_regularization_block(lay))])
        A_post = np.zeros((lay.n_human, lay.size))
        A_post[:, lay.qd_human] = np.eye(lay.n_human)
        b_post = self.posture_gain * (REBA_POSTURE - st.q_human)
        A2, b2 = weighted_stack_level([
            (1.0, A_post, b_post),
            (w.delta, *regularization_block(lay)),
            (w.human_damping, *human_regularization_block(lay)),
            (w.tikhonov, np.eye(lay.size), np.zeros(lay.size)),
        ])
        stack = HierarchyStack([TaskLevel(A1, b1, cons.C, cons.d, name="reach"),
                                TaskLevel(A2, b2, name="nominal posture")], lay.size)
        return stack, 0.0

    def _update_targets(self, xd_r, xd_h):
        st = self.state
        st.robot_target = fk(self.setup.robot, st.q_robot)
        st.human_target = fk(self.setup.human, st.q_human)


def run_baseline(setup: Setup, method: str, duration: float | None = None) -> TrajectoryLog:
    return BaselineController(setup, method).run(duration)


def run_method(setup: Setup, method: str, duration: float | None = None) -> TrajectoryLog:
    if method == "proposed":
        return run_proposed(setup, duration)
    return run_baseline(setup, method, duration)
