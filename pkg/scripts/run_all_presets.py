"""Run every shipped preset with the proposed controller and print a summary table."""

import argparse
import time

import numpy as np

from mobility_hqp.config import load_config, preset_names
from mobility_hqp.metrics import evaluate
from mobility_hqp.scenarios import REBA_POSTURE, build_setup, run_method


def summarize(name: str, method: str = "proposed") -> dict:
    setup = build_setup(load_config(name))
    t0 = time.perf_counter()
    log = run_method(setup, method)
    wall = time.perf_counter() - t0
    rep = evaluate(log, setup.profile.severity, REBA_POSTURE, setup.q_human0, setup.config.dt)
    hold = [r for r in log.records if r.phase == "hold"]
    return {
        "preset": name,
        "method": method,
        "t_int": rep.time_to_interaction,
        "violations": rep.violation_count,
        "rel_hold": max((r.relative_error for r in hold), default=np.nan),
        "psi_arm": rep.psi_arm,
        "psi_trunk": rep.psi_trunk,
        "jerk": rep.jerk,
        "wall_s": wall,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--method", default="proposed", choices=("proposed", "reba", "mindisp"))
    ap.add_argument("presets", nargs="*", default=preset_names())
    ns = ap.parse_args()
    cols = ("preset", "t_int", "violations", "rel_hold", "psi_arm", "psi_trunk", "jerk", "wall_s")
    print("  ".join(f"{c:>12}" for c in cols))
    for name in ns.presets:
        row = summarize(name, ns.method)
        cells = [row["preset"]] + [row[c] if row[c] is not None else "timeout" for c in cols[1:]]
        print("  ".join(f"{c:>12.4g}" if isinstance(c, float) else f"{c!s:>12}" for c in cells))


if __name__ == "__main__":
    main()
