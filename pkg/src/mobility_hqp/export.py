"""Run outputs: trajectory CSV, metrics summary, manifest and plot-ready tables."""

from __future__ import annotations

import csv
import io
import json
import platform
from pathlib import Path

import numpy as np
import scipy
from scipy.spatial.transform import Rotation

from .controller import TrajectoryLog

CSV_VERSION = "mobility-hqp-trajectory/1"
FLOAT_FORMAT = "%.10g"


def trajectory_header(n_human: int = 8, n_robot: int = 10) -> list[str]:
    cols = ["t"]
    cols += [f"qh{i}" for i in range(1, n_human + 1)]
    cols += [f"qdh{i}" for i in range(1, n_human + 1)]
    cols += [f"qr{i}" for i in range(1, n_robot + 1)]
    for agent in ("robot", "hand"):
        cols += [f"{agent}_{c}" for c in ("x", "y", "z", "qx", "qy", "qz", "qw")]
    cols += ["relative_error", "phase", "active_mask"]
    cols += [f"tau{i}" for i in range(1, n_robot + 1)]
    return cols


def _fmt(v: float) -> str:
    return FLOAT_FORMAT % v


def trajectory_csv(log: TrajectoryLog) -> str:
    """Serialize a log; the first line carries the format version."""
    if not log.records:
        n_h, n_r = 8, 10
    else:
        n_h, n_r = len(log.records[0].q_human), len(log.records[0].q_robot)
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(n_h, n_r))
    for r in log.records:
        nums = [r.t, *r.q_human, *r.qd_human, *r.q_robot]
        for pose in (r.robot_pose, r.hand_pose):
            nums += [*pose.position, *pose.quaternion]
        nums.append(r.relative_error)
        row = [_fmt(float(x)) for x in nums]
        row += [r.phase, str(int(r.active_mask))]
        row += [_fmt(float(x)) for x in r.tau]
        w.writerow(row)
    return buf.getvalue()


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Load a trajectory CSV back into named columns (phase stays a string array)."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != f"# {CSV_VERSION}":
        raise ValueError(f"{path}: not a {CSV_VERSION} file")
    rows = list(csv.reader(lines[1:]))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [row[j] for row in body]
        out[name] = np.array(col) if name == "phase" else np.array(col, dtype=float)
    return out


def plot_tables(log: TrajectoryLog) -> str:
    """Tidy long-format rows ``t, panel, series, kind, value`` for joint and pose plots.

    Panels: human joint angles, ee positions and orientations (optimal target
    vs measured) for both agents, and the relative pose error.
    """
    buf = io.StringIO()
    buf.write(f"# {CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "panel", "series", "kind", "value"])
    for r in log.records:
        t = _fmt(r.t)
        for i, q in enumerate(r.q_human, 1):
            w.writerow([t, "human_joints", f"q{i}", "actual", _fmt(q)])
        for agent, target, actual in (("robot", r.robot_target, r.robot_pose),
                                      ("hand", r.human_target, r.hand_pose)):
            for kind, pose in (("desired", target), ("actual", actual)):
                for axis, v in zip("xyz", pose.position):
                    w.writerow([t, f"{agent}_position", axis, kind, _fmt(v)])
                for axis, v in zip("xyz", _rotvec(pose)):
                    w.writerow([t, f"{agent}_orientation", axis, kind, _fmt(v)])
        w.writerow([t, "relative_error", "norm", "actual", _fmt(r.relative_error)])
    return buf.getvalue()


def _rotvec(pose) -> np.ndarray:
    return Rotation.from_quat(pose.quaternion).as_rotvec()


def manifest(config_digest: str, method: str, seed: int, extra: dict | None = None) -> dict:
    from . import __version__

    data = {
        "format": CSV_VERSION,
        "config_sha256": config_digest,
        "method": method,
        "seed": int(seed),
        "versions": {
            "mobility_hqp": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        data.update(extra)
    return data


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

