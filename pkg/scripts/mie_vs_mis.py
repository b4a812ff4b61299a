"""Robot ee paths for the elbow-dominant and shoulder-dominant mixed impairments.

Prints the mean path deviation and writes both paths to a CSV for plotting.
"""

import argparse

import numpy as np

from mobility_hqp.metrics import path_deviation
from mobility_hqp.scenarios import load_setup, run_method


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="mie_vs_mis_paths.csv")
    ns = ap.parse_args()
    logs = {name: run_method(load_setup(name), "proposed") for name in ("mie_standing", "mis_standing")}
    dp, dr = path_deviation(logs["mie_standing"], logs["mis_standing"])
    print(f"mean robot ee path deviation: {dp:.3f} m, {dr:.3f} rad")
    for name, log in logs.items():
        print(f"{name}: interaction at {log.t_interaction} s")
    rows = []
    for name, log in logs.items():
        for r in log.segment(("approach", "hold")).records:
            rows.append([name, r.t, *r.robot_pose.position])
    with open(ns.out, "w") as fh:
        fh.write("preset,t,x,y,z\n")
        for name, *vals in rows:
            fh.write(name + "," + ",".join(f"{v:.6g}" for v in vals) + "\n")
    print(f"paths written to {ns.out}")


if __name__ == "__main__":
    main()
