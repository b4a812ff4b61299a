"""Command-line front end: ``run``, ``compare`` and ``validate``.

Exit codes: 0 success, 1 validation findings, 3 config error, 4 timeout,
5 infeasible transfer region, 6 scenario mismatch in ``compare``.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .controller import Controller
from .export import manifest, plot_tables, read_trajectory_csv, trajectory_csv, write_json
from .kinematics import Pose, fk
from .metrics import evaluate, pose_path_deviation
from .scenarios import REBA_POSTURE, Infeasible, build_setup, run_method

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_CONFIG = 3
EXIT_TIMEOUT = 4
EXIT_INFEASIBLE = 5
EXIT_MISMATCH = 6

METHODS = ("proposed", "reba", "mindisp")
COMPARED = ("psi_arm", "psi_trunk", "jerk", "time_to_interaction")


class ScenarioMismatch(ValueError):
    pass


# --------------------------------------------------------------------------
# run


def _with_overrides(cfg: ScenarioConfig, seed: int | None, duration: float | None) -> ScenarioConfig:
    run = cfg.run
    if seed is not None:
        run = dataclasses.replace(run, seed=int(seed))
    if duration is not None:
        run = dataclasses.replace(run, time_budget_s=float(duration))
    return cfg.replace(run=run)


def run_one(config: str, method: str, out: str, seed: int | None = None,
            duration: float | None = None) -> tuple[int, str]:
    """Run one scenario and write its outputs; returns (exit code, message)."""
    try:
        cfg = _with_overrides(load_config(config), seed, duration)
        setup = build_setup(cfg)
    except (ConfigError, ValueError) as exc:
        return EXIT_CONFIG, f"config error in {config}: {exc}"
    try:
        log = run_method(setup, method)
    except Infeasible as exc:
        return EXIT_INFEASIBLE, f"{cfg.name}/{method}: {exc}"

    run_dir = Path(out) / f"{cfg.name}-{method}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "trajectory.csv").write_text(trajectory_csv(log))
    (run_dir / "plot_data.csv").write_text(plot_tables(log))
    (run_dir / "config.yaml").write_text(cfg.to_yaml())
    report = evaluate(log, setup.profile.severity, REBA_POSTURE, setup.q_human0, setup.config.dt)
    metrics = report.to_dict()
    metrics["flagged_ticks"] = log.flagged_ticks
    write_json(run_dir / "metrics.json", metrics)
    write_json(run_dir / "manifest.json", manifest(cfg.digest(), method, cfg.run.seed, {
        "scenario": cfg.name,
        "ticks": len(log),
        "events": [[t, e] for t, e in log.events],
    }))
    if log.timed_out:
        return EXIT_TIMEOUT, f"{cfg.name}/{method}: no interaction within {cfg.run.time_budget_s} s ({run_dir})"
    return EXIT_OK, f"{cfg.name}/{method}: interaction at {log.t_interaction:.2f} s -> {run_dir}"


def _run_job(args):
    return run_one(*args)


def cmd_run(ns) -> int:
    jobs = [(c, ns.method, ns.out, ns.seed, ns.duration) for c in ns.configs]
    if ns.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [run_one(*j) for j in jobs]
    for code, msg in results:
        print(msg, file=sys.stderr if code else sys.stdout)
    return max(code for code, _ in results)


# --------------------------------------------------------------------------
# compare


def load_run(run_dir) -> dict:
    d = Path(run_dir)
    try:
        man = json.loads((d / "manifest.json").read_text())
        met = json.loads((d / "metrics.json").read_text())
        traj = read_trajectory_csv(d / "trajectory.csv")
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{d} is not a completed run directory: {exc}") from None
    return {"dir": str(d), "manifest": man, "metrics": met, "trajectory": traj}


def _robot_path(traj: dict, phases=("approach", "hold")) -> list[Pose]:
    keep = np.isin(traj["phase"], phases)
    pos = np.column_stack([traj[f"robot_{c}"] for c in "xyz"])[keep]
    quat = np.column_stack([traj[f"robot_{c}"] for c in ("qx", "qy", "qz", "qw")])[keep]
    return [Pose(p, q) for p, q in zip(pos, quat)]


def compare_runs(run_dirs, allow_mismatch: bool = False) -> dict:
    runs = [load_run(d) for d in run_dirs]
    if len(runs) < 2:
        raise ValueError("compare needs at least two runs")
    digests = {r["manifest"]["config_sha256"] for r in runs}
    if len(digests) > 1 and not allow_mismatch:
        raise ScenarioMismatch("runs come from different configs; pass --allow-mismatch to compare anyway")
    rows = []
    for r in runs:
        m = r["metrics"]
        rows.append({"run": r["dir"], "scenario": r["manifest"]["scenario"], "method": r["manifest"]["method"],
                     **{k: m[k] for k in COMPARED}})
    pairs = []
    for (i, a), (j, b) in itertools.combinations(enumerate(runs), 2):
        delta = {}
        for k in COMPARED:
            va, vb = rows[i][k], rows[j][k]
            delta[k] = None if va is None or vb is None else vb - va
        dp, dr = pose_path_deviation(_robot_path(a["trajectory"]), _robot_path(b["trajectory"]))
        pairs.append({"a": rows[i]["run"], "b": rows[j]["run"], "delta": delta,
                      "path_deviation_m": dp, "path_deviation_rad": dr})
    return {"runs": rows, "pairs": pairs, "same_config": len(digests) == 1}


def _num(v, fmt="{:.4g}") -> str:
    return "-" if v is None else fmt.format(v)


def format_comparison(result: dict) -> str:
    lines = [f"{'run':40s} {'psi_arm':>10s} {'psi_trunk':>10s} {'jerk':>12s} {'t_int [s]':>10s}"]
    for r in result["runs"]:
        name = f"{r['scenario']}/{r['method']}"
        lines.append(f"{name:40s} {_num(r['psi_arm']):>10s} {_num(r['psi_trunk']):>10s} "
                     f"{_num(r['jerk']):>12s} {_num(r['time_to_interaction']):>10s}")
    lines.append("")
    lines.append("pairwise deltas (b - a):")
    for p in result["pairs"]:
        d = p["delta"]
        lines.append(f"  {p['a']} -> {p['b']}: d_psi_arm={_num(d['psi_arm'])} d_psi_trunk={_num(d['psi_trunk'])} "
                     f"d_jerk={_num(d['jerk'])} d_t_int={_num(d['time_to_interaction'])} "
                     f"robot path deviation={p['path_deviation_m']:.4f} m / {p['path_deviation_rad']:.4f} rad")
    return "\n".join(lines)


def cmd_compare(ns) -> int:
    try:
        result = compare_runs(ns.runs, ns.allow_mismatch)
    except ScenarioMismatch as exc:
        print(f"scenario mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(result, indent=2) if ns.json else format_comparison(result))
    return EXIT_OK


# --------------------------------------------------------------------------
# validate


def validate_config(cfg: ScenarioConfig) -> list[tuple[str, str]]:
    """Findings as (level, message) pairs; level is 'error' or 'warning'."""
    out = []
    h, t = cfg.human, cfg.task
    lo, hi = np.asarray(h.rom_lower_rad, float), np.asarray(h.rom_upper_rad, float)
    q0 = np.asarray(h.q_initial_rad, float)
    if not (len(lo) == len(hi) == len(q0) == 8):
        out.append(("error", "human RoM bounds and q_initial_rad need 8 entries each"))
        return out
    for j in np.flatnonzero(lo > hi):
        out.append(("error", f"human joint {j + 1}: RoM lower {lo[j]} > upper {hi[j]}"))
    for j in np.flatnonzero((q0 < lo) | (q0 > hi)):
        out.append(("error", f"human joint {j + 1}: q_initial {q0[j]} outside healthy RoM [{lo[j]}, {hi[j]}]"))
    for j, (a, b) in cfg.impairment.bound_overrides_rad.items():
        if a > b:
            out.append(("error", f"impairment override for joint {j}: lower {a} > upper {b}"))
        if not 1 <= j <= 8:
            out.append(("error", f"impairment override names joint {j}; joints are 1..8"))
    if cfg.impairment.severity is not None:
        w = np.asarray(cfg.impairment.severity, float)
        if w.shape != (8,) or np.any((w < 0) | (w > 1)):
            out.append(("error", "impairment.severity must be 8 values in [0, 1]"))
    if t.gate_d_min_m >= t.gate_d_max_m:
        out.append(("error", "task.gate_d_min_m must be below task.gate_d_max_m"))
    if t.dt_s <= 0:
        out.append(("error", "task.dt_s must be positive"))
    if out:
        return out

    try:
        setup = build_setup(cfg)
        ctrl = Controller(setup)
    except (ConfigError, ValueError) as exc:
        return out + [("error", f"cannot build scenario: {exc}")]
    q_r = setup.q_robot0
    for j in np.flatnonzero((q_r < setup.robot.q_min) | (q_r > setup.robot.q_max)):
        out.append(("error", f"robot joint {j + 1}: initial value {q_r[j]:.4g} outside its limits"))
    bounds = ctrl.tracker.update(setup.q_human0)
    cons = ctrl._constraints(bounds)
    if cons.clamped:
        out.append(("error", "initial state violates constraints: " + ", ".join(cons.clamped)))
    elif cons.d.size and np.min(cons.margins(np.zeros(ctrl.layout.size))) < -1e-9:
        out.append(("error", "constraints are not satisfiable at t = 0"))
    imp_lo, imp_hi = bounds.lower, bounds.upper
    for j in np.flatnonzero((setup.q_human0 < imp_lo - 1e-12) | (setup.q_human0 > imp_hi + 1e-12)):
        out.append(("warning", f"human joint {j + 1}: q_initial outside the impaired RoM"))
    hand = setup.pelvis_pose().compose(fk(setup.human, setup.q_human0))
    if cfg.constraints.armrest_z_m is not None and hand.position[2] < cfg.constraints.armrest_z_m:
        out.append(("error", f"initial hand z {hand.position[2]:.4f} below the armrest"))
    return out


def cmd_validate(ns) -> int:
    worst = EXIT_OK
    for path in ns.configs:
        try:
            cfg = load_config(path)
        except ConfigError as exc:
            print(f"{path}: error: {exc}")
            worst = max(worst, EXIT_FINDINGS)
            continue
        findings = validate_config(cfg)
        for level, msg in findings:
            print(f"{path}: {level}: {msg}")
        if any(level == "error" for level, _ in findings):
            worst = max(worst, EXIT_FINDINGS)
        elif not findings:
            print(f"{path}: ok")
    return worst


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mobility-hqp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate scenarios and write trajectory, metrics and manifest")
    r.add_argument("configs", nargs="+", help="config file or preset name")
    r.add_argument("--method", choices=METHODS, default="proposed")
    r.add_argument("--out", default="runs", help="parent directory for run outputs")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--duration", type=float, default=None, help="override the time budget in seconds")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for several configs")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare metrics of completed runs")
    c.add_argument("runs", nargs="+", help="run output directories")
    c.add_argument("--json", action="store_true", help="machine-readable output")
    c.add_argument("--allow-mismatch", action="store_true", help="compare runs of different configs")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="check configs without running them")
    v.add_argument("configs", nargs="+")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    return ns.func(ns)

