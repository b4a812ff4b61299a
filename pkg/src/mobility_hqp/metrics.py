"""Compensation cost, smoothness and summary metrics over trajectory logs."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .kinematics import pose_error

TRUNK = (0,)
ARM = (1, 2, 3, 4, 5, 6, 7)


class EmptyLog(ValueError):
    pass


class TooFewSamples(ValueError):
    pass


def _severity(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    return np.diag(W) if W.ndim == 2 else W


def compensation_cost(q_log, W, q_nominal, segment: str = "arm") -> float:
    """Mean squared deviation from the nominal posture of the functioning joints.

    Each joint's deviation is weighted by ``1 - W_ii`` so fully impaired
    joints never count; ``segment`` picks the trunk (q1) or arm (q2..q8).
    """
    q = np.atleast_2d(np.asarray(q_log, dtype=float))
    if q.size == 0:
        raise EmptyLog("no samples to evaluate")
    idx = {"arm": ARM, "trunk": TRUNK}.get(segment)
    if idx is None:
        raise ValueError(f"segment must be 'arm' or 'trunk', got {segment!r}")
    mask = 1.0 - _severity(W)
    dev = (q - np.asarray(q_nominal, dtype=float)) * mask
    dev = dev[:, idx]
    return float(np.mean(np.sum(dev**2, axis=1)))


def jerk_cost(qd_log, dt: float) -> float:
    """``dt * sum ||jerk||^2`` with jerk from central second differences of velocities."""
    v = np.asarray(qd_log, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] < 4:
        raise TooFewSamples("jerk needs at least four velocity samples")
    jerk = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dt**2
    return float(dt * np.sum(jerk**2))


@dataclass
class MetricsReport:
    psi_arm: float
    psi_trunk: float
    jerk: float
    peak_excursion: list
    time_to_interaction: float | None
    violation_count: int
    timed_out: bool

    def to_dict(self) -> dict:
        return asdict(self)


def rom_violations(log, tol: float = 1e-9) -> int:
    q = log.array("q_human")
    return int(np.sum(q < log.array("rom_lower") - tol) + np.sum(q > log.array("rom_upper") + tol))


def evaluate(log, severity, q_nominal, q_initial, dt: float, phases=("approach", "hold")) -> MetricsReport:
    seg = log.segment(phases)
    if len(seg) == 0:
        raise EmptyLog("log has no samples in the requested phases")
    q = seg.array("q_human")
    qd = seg.array("qd_human")
    return MetricsReport(
        psi_arm=compensation_cost(q, severity, q_nominal, "arm"),
        psi_trunk=compensation_cost(q, severity, q_nominal, "trunk"),
        jerk=jerk_cost(qd, dt),
        peak_excursion=np.max(np.abs(q - np.asarray(q_initial)), axis=0).tolist(),
        time_to_interaction=log.t_interaction,
        violation_count=rom_violations(log),
        timed_out=log.timed_out,
    )


def path_deviation(log_a, log_b, phases=("approach", "hold")) -> tuple[float, float]:
    """Mean position (m) and orientation (rad) gap between two robot ee paths.

    Paths are aligned tick by tick; the shorter one is held at its last pose.
    """
    a = log_a.segment(phases).records
    b = log_b.segment(phases).records
    if not a or not b:
        raise EmptyLog("both logs need samples")
    return pose_path_deviation([r.robot_pose for r in a], [r.robot_pose for r in b])


def pose_path_deviation(poses_a, poses_b) -> tuple[float, float]:
    """Tick-aligned mean position and orientation gap between two pose sequences."""
    if not len(poses_a) or not len(poses_b):
        raise EmptyLog("both paths need samples")
    n = max(len(poses_a), len(poses_b))
    dp, dr = [], []
    for k in range(n):
        e = pose_error(poses_a[min(k, len(poses_a) - 1)], poses_b[min(k, len(poses_b) - 1)])
        dp.append(np.linalg.norm(e[:3]))
        dr.append(np.linalg.norm(e[3:]))
    return float(np.mean(dp)), float(np.mean(dr))
