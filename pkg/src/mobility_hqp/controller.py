"""Online approach/hold/retreat loop with simulated measurements."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .impairment import ImpairmentProfile, RomBounds, RomTracker
from .kinematics import KinematicChain, Pose, fk, geometric_jacobian, joint_axes, pose_error
from .qp import DimensionMismatch, QpError, solve_hierarchy
from .tasks import (
    AgentState,
    ApproachBlocks,
    GateParams,
    InteractionFrameData,
    StateLayout,
    TaskSpaceLimits,
    TaskWeights,
    assemble_stack,
    homing_block,
    human_clik_block,
    impairment_damping_block,
    interacting_ee_block,
    joint_constraints,
    pelvis_block,
    regularization_block,
    relative_error,
    retreat_rows,
    robot_clik_block,
    sagittal_block,
    sagittal_gate,
    task_space_constraints,
)

log = logging.getLogger(__name__)

PHASE_CODES = {"approach": 0, "hold": 1, "retreat": 2, "done": 3}
DEFAULT_KP = (1, 1, 1, 10, 10, 10, 10, 2, 2, 2)
DEFAULT_KD = (0.1, 0.1, 0.1, 1, 1, 1, 1, 0.2, 0.2, 0.2)


class Timeout(RuntimeError):
    """Interaction not established within the time budget; carries the partial log."""

    def __init__(self, message: str, log: "TrajectoryLog"):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class TorqueCommand:
    tau: np.ndarray


def impedance_torque(qd_opt, qd_meas, q_opt, q_meas, kp, kd, gravity: Callable | None = None) -> TorqueCommand:
    """Joint impedance law around the optimal trajectory plus gravity compensation."""
    arrays = [np.asarray(v, dtype=float).reshape(-1) for v in (qd_opt, qd_meas, q_opt, q_meas)]
    n = arrays[0].shape[0]
    kp, kd = (np.diag(k) if np.ndim(k) == 2 else np.asarray(k, dtype=float).reshape(-1) for k in (kp, kd))
    if any(a.shape[0] != n for a in arrays) or any(k.shape[0] not in (1, n) for k in (kp, kd)):
        raise DimensionMismatch("impedance inputs differ in length")
    qd_opt, qd_meas, q_opt, q_meas = arrays
    g = np.zeros(n) if gravity is None else np.asarray(gravity(q_meas), dtype=float)
    return TorqueCommand(kd * (qd_opt - qd_meas) + kp * (q_opt - q_meas) + g)


@dataclass(frozen=True)
class ControllerConfig:
    dt: float = 0.01
    epsilon: float = 0.01
    epsilon_relative: float = 0.01
    human_gain: tuple = (40.0,) * 6
    robot_gain: tuple = (10.0, 10.0, 10.0, 2.0, 2.0, 2.0)
    weights: TaskWeights = TaskWeights()
    gate: GateParams = GateParams()
    gate_projected: bool = False  # project the gate distance onto the sagittal plane
    limits: TaskSpaceLimits = TaskSpaceLimits()
    kp_q: tuple = DEFAULT_KP
    kd_q: tuple = DEFAULT_KD
    hold_duration: float = 1.0
    blend_duration: float = 0.5
    homing_gain: float = 2.0
    homing_tolerance: float = 1e-3
    time_budget: float = 20.0
    lag_tau: float | None = None
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class Setup:
    """Everything the loop needs that does not change during a run."""

    human: KinematicChain
    robot: KinematicChain
    profile: ImpairmentProfile
    healthy: RomBounds
    q_human0: np.ndarray
    q_robot0: np.ndarray
    pelvis_rotation: np.ndarray
    pelvis_position: np.ndarray
    grasp_offset: Pose
    config: ControllerConfig = field(default_factory=ControllerConfig)
    q_homing: np.ndarray | None = None
    gravity: Callable | None = None

    def pelvis_pose(self) -> Pose:
        T = np.eye(4)
        T[:3, :3] = self.pelvis_rotation
        T[:3, 3] = self.pelvis_position
        return Pose.from_matrix(T)


@dataclass
class ControlState:
    t: float
    phase: str
    q_robot: np.ndarray  # integrated optimal
    q_human: np.ndarray
    robot_target: Pose  # optimal ee poses carried between ticks
    human_target: Pose
    q_robot_meas: np.ndarray
    q_human_meas: np.ndarray
    qd_robot_meas: np.ndarray
    qd_human_meas: np.ndarray
    phase_time: float = 0.0


@dataclass
class TickRecord:
    t: float
    phase: str
    q_human: np.ndarray
    qd_human: np.ndarray
    q_robot: np.ndarray
    qd_robot: np.ndarray
    robot_pose: Pose  # measured, world
    hand_pose: Pose  # measured, world
    robot_target: Pose
    human_target: Pose  # world
    relative_error: float
    tracking_error: float
    active_mask: int
    min_margin: float
    tau: np.ndarray
    rom_lower: np.ndarray
    rom_upper: np.ndarray
    chi_norm: float
    gate: float
    level_residuals: list
    flags: tuple = ()


@dataclass
class TrajectoryLog:
    records: list = field(default_factory=list)
    t_interaction: float | None = None
    timed_out: bool = False
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def array(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def phases(self) -> list[str]:
        return [r.phase for r in self.records]

    def segment(self, phases=("approach", "hold")) -> "TrajectoryLog":
        out = TrajectoryLog([r for r in self.records if r.phase in phases], self.t_interaction, self.timed_out,
                            list(self.events))
        return out

    @property
    def flagged_ticks(self) -> int:
        return sum(1 for r in self.records if r.flags)


def measured_relative_error(setup: Setup, robot: Pose, hand_in_pelvis: Pose) -> np.ndarray:
    frames = InteractionFrameData(setup.pelvis_rotation, setup.pelvis_position, None, None, setup.grasp_offset)
    return relative_error(frames, robot, hand_in_pelvis)


def interaction_established(setup: Setup, state: ControlState) -> bool:
    """Tracking error of the robot and relative ee error both below threshold."""
    cfg = setup.config
    robot_m = fk(setup.robot, state.q_robot_meas)
    hand_m = fk(setup.human, state.q_human_meas)
    track = np.linalg.norm(pose_error(state.robot_target, robot_m))
    rel = np.linalg.norm(measured_relative_error(setup, robot_m, hand_m))
    return bool(track < cfg.epsilon and rel < cfg.epsilon_relative)


class Controller:
    def __init__(self, setup: Setup):
        self.setup = setup
        cfg = setup.config
        self.layout = StateLayout(setup.robot.n_joints, setup.human.n_joints)
        self.rng = np.random.default_rng(cfg.seed)
        self.tracker = RomTracker(setup.profile, setup.healthy, setup.q_human0)
        q_r = np.array(setup.q_robot0, dtype=float)
        q_h = np.array(setup.q_human0, dtype=float)
        self.q_homing = q_r.copy() if setup.q_homing is None else np.asarray(setup.q_homing, float)
        self.state = ControlState(
            t=0.0,
            phase="approach",
            q_robot=q_r.copy(),
            q_human=q_h.copy(),
            robot_target=fk(setup.robot, q_r),
            human_target=fk(setup.human, q_h),
            q_robot_meas=q_r.copy(),
            q_human_meas=q_h.copy(),
            qd_robot_meas=np.zeros_like(q_r),
            qd_human_meas=np.zeros_like(q_h),
        )
        self.log = TrajectoryLog()
        if interaction_established(setup, self.state):
            self._enter("hold")

    # ------------------------------------------------------------------
    def _enter(self, phase: str):
        order = ("approach", "hold", "retreat", "done")
        if order.index(phase) < order.index(self.state.phase):
            raise RuntimeError(f"phase cannot go back from {self.state.phase} to {phase}")
        if phase == "hold" and self.log.t_interaction is None:
            self.log.t_interaction = self.state.t
        if phase == "retreat":
            self.log.events.append((self.state.t, "object released"))
        self.log.events.append((self.state.t, f"enter {phase}"))
        self.state.phase = phase
        self.state.phase_time = 0.0

    def _gate_distance(self, robot_m: Pose, hand_m: Pose) -> float:
        grasp = self.setup.pelvis_pose().compose(hand_m).compose(self.setup.grasp_offset)
        diff = robot_m.position - grasp.position
        if self.setup.config.gate_projected:
            n = self.setup.pelvis_rotation @ np.asarray(self.setup.config.gate.sagittal_normal, float)
            n = n / np.linalg.norm(n)
            diff = diff - n * (n @ diff)
        return float(np.linalg.norm(diff))

    def _frames(self) -> InteractionFrameData:
        su, st = self.setup, self.state
        return InteractionFrameData(su.pelvis_rotation, su.pelvis_position, st.robot_target, st.human_target,
                                    su.grasp_offset)

    def _constraints(self, bounds: RomBounds):
        su, st, lay, cfg = self.setup, self.state, self.layout, self.setup.config
        cons = joint_constraints(st.q_human, bounds, su.human.qd_min, su.human.qd_max, cfg.dt, lay, "human")
        cons = cons + joint_constraints(st.q_robot, (su.robot.q_min, su.robot.q_max), su.robot.qd_min,
                                        su.robot.qd_max, cfg.dt, lay, "robot")
        return cons + task_space_constraints(
            st.robot_target, st.human_target, self._frames(), cfg.limits, cfg.dt, lay,
            robot_state=AgentState(fk(su.robot, st.q_robot).position, geometric_jacobian(su.robot, st.q_robot)),
            human_state=AgentState(fk(su.human, st.q_human).position, geometric_jacobian(su.human, st.q_human)),
        )

    def _approach_stack(self, cons):
        su, st, lay, cfg = self.setup, self.state, self.layout, self.setup.config
        robot_m = fk(su.robot, st.q_robot_meas)
        hand_m = fk(su.human, st.q_human_meas)
        J_r = geometric_jacobian(su.robot, st.q_robot_meas)
        J_h = geometric_jacobian(su.human, st.q_human_meas)
        d = self._gate_distance(robot_m, hand_m)
        S = sagittal_gate(d, joint_axes(su.human, st.q_human_meas), cfg.gate)
        gate = float(np.max(np.diag(S), initial=0.0))
        blocks = ApproachBlocks(
            interacting=interacting_ee_block(self._frames(), cfg.dt, lay),
            damping=impairment_damping_block(su.profile, lay),
            human_clik=human_clik_block(J_h, cfg.human_gain, st.human_target, hand_m, lay),
            sagittal=sagittal_block(S, lay),
            robot_clik=robot_clik_block(J_r, cfg.robot_gain, st.robot_target, robot_m, lay),
            pelvis=pelvis_block(lay),
            regularization=regularization_block(lay),
        )
        return assemble_stack("approach", lay, cons, cfg.weights, approach=blocks), gate

    def _build(self, bounds: RomBounds):
        st, lay, cfg = self.state, self.layout, self.setup.config
        cons = self._constraints(bounds)
        gate = 0.0
        if st.phase == "approach":
            stack, gate = self._approach_stack(cons)
        elif st.phase == "hold":
            stack = assemble_stack("hold", lay, cons, cfg.weights)
        else:
            homing = homing_block(st.q_robot, self.q_homing, cfg.homing_gain, lay)
            rows = retreat_rows(homing, geometric_jacobian(self.setup.robot, st.q_robot), lay)
            blend = min(1.0, st.phase_time / cfg.blend_duration) if cfg.blend_duration > 0 else 1.0
            stack = assemble_stack("retreat", lay, cons, cfg.weights, retreat=rows, blend=blend)
        return stack, cons, gate

    def _update_targets(self, xd_r, xd_h):
        st, dt = self.state, self.setup.config.dt
        st.robot_target = st.robot_target.integrate(xd_r, dt)
        st.human_target = st.human_target.integrate(xd_h, dt)

    def tick(self) -> TickRecord:
        su, st, cfg = self.setup, self.state, self.setup.config
        if st.phase == "done":
            raise RuntimeError("run already finished")
        bounds = self.tracker.update(st.q_human_meas)
        stack, cons, gate = self._build(bounds)
        flags = list(cons.clamped and ["clamped:" + ",".join(cons.clamped)])
        try:
            sol = solve_hierarchy(stack)
            chi = sol.x
            residuals = list(sol.residuals)
        except QpError as exc:
            log.warning("solver failure at t=%.3f: %s; holding pose", st.t, exc)
            chi = np.zeros(self.layout.size)
            residuals = []
            flags.append(f"solver:{type(exc).__name__}")

        lay = self.layout
        qd_r, xd_r, qd_h, xd_h = (np.array(v) for v in lay.split(chi))
        # Bounds are enforced one step ahead; clip only float round-off.
        q_h_new = st.q_human + qd_h * cfg.dt
        q_h_new = np.clip(q_h_new, np.minimum(bounds.lower, st.q_human), np.maximum(bounds.upper, st.q_human))
        q_r_new = st.q_robot + qd_r * cfg.dt

        q_r_prev_meas, q_h_prev_meas = st.q_robot_meas, st.q_human_meas
        qd_r_prev_meas = st.qd_robot_meas
        st.q_robot, st.q_human = q_r_new, q_h_new
        self._update_targets(xd_r, xd_h)

        tau = impedance_torque(qd_r, qd_r_prev_meas, q_r_new, q_r_prev_meas, cfg.kp_q, cfg.kd_q, su.gravity)

        # simulated sensing
        q_r_meas = q_r_new.copy()
        if cfg.noise_std > 0:
            q_r_meas = q_r_meas + self.rng.normal(0.0, cfg.noise_std, q_r_meas.shape)
        if cfg.lag_tau:
            a = min(1.0, cfg.dt / cfg.lag_tau)
            q_h_meas = q_h_prev_meas + a * (q_h_new - q_h_prev_meas)
        else:
            q_h_meas = q_h_new.copy()
        st.qd_robot_meas = (q_r_meas - q_r_prev_meas) / cfg.dt
        st.qd_human_meas = (q_h_meas - q_h_prev_meas) / cfg.dt
        st.q_robot_meas, st.q_human_meas = q_r_meas, q_h_meas
        st.t = round(st.t + cfg.dt, 12)
        st.phase_time += cfg.dt

        robot_m = fk(su.robot, q_r_meas)
        hand_m = fk(su.human, q_h_meas)
        rel = float(np.linalg.norm(measured_relative_error(su, robot_m, hand_m)))
        track = float(np.linalg.norm(pose_error(st.robot_target, robot_m)))
        pelvis = su.pelvis_pose()
        rec = TickRecord(
            t=st.t,
            phase=st.phase,
            q_human=q_h_new.copy(),
            qd_human=qd_h,
            q_robot=q_r_new.copy(),
            qd_robot=qd_r,
            robot_pose=robot_m,
            hand_pose=pelvis.compose(hand_m),
            robot_target=st.robot_target,
            human_target=pelvis.compose(st.human_target),
            relative_error=rel,
            tracking_error=track,
            active_mask=cons.active_mask(chi),
            min_margin=float(np.min(cons.margins(chi))) if cons.d.size else np.inf,
            tau=tau.tau,
            rom_lower=bounds.lower.copy(),
            rom_upper=bounds.upper.copy(),
            chi_norm=float(np.linalg.norm(chi)),
            gate=gate,
            level_residuals=residuals,
            flags=tuple(flags),
        )
        self.log.records.append(rec)
        self._advance_phase(track, rel)
        return rec

    def _advance_phase(self, track: float, rel: float):
        st, cfg = self.state, self.setup.config
        if st.phase == "approach":
            if track < cfg.epsilon and rel < cfg.epsilon_relative:
                self._enter("hold")
        elif st.phase == "hold":
            if st.phase_time >= cfg.hold_duration - 1e-12:
                self._enter("retreat")
        elif st.phase == "retreat":
            if np.max(np.abs(st.q_robot - self.q_homing)) < cfg.homing_tolerance:
                self._enter("done")

    def run(self, duration: float | None = None, raise_on_timeout: bool = False) -> TrajectoryLog:
        """Tick until done or out of time; a timeout is flagged on the log or raised."""
        cfg = self.setup.config
        budget = cfg.time_budget if duration is None else duration
        n_max = int(round(budget / cfg.dt))
        for _ in range(n_max):
            if self.state.phase == "done":
                break
            self.tick()
        if self.log.t_interaction is None:
            self.log.timed_out = True
            msg = f"interaction not established within {budget:.2f} s"
            log.warning(msg)
            if raise_on_timeout:
                raise Timeout(msg, self.log)
        return self.log


def run_scenario(setup: Setup, duration: float | None = None, raise_on_timeout: bool = False) -> TrajectoryLog:
    return Controller(setup).run(duration, raise_on_timeout)
