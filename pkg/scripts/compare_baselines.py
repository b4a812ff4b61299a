"""Proposed controller against the REBA and minimum-displacement baselines."""

import argparse

from mobility_hqp.config import load_config
from mobility_hqp.metrics import evaluate
from mobility_hqp.scenarios import REBA_POSTURE, build_setup, run_method

METHODS = ("proposed", "reba", "mindisp")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("presets", nargs="*", default=["ea_standing", "wb_seated"])
    ns = ap.parse_args()
    print(f"{'preset':14s} {'method':9s} {'psi_arm':>9s} {'psi_trunk':>10s} {'jerk':>10s} {'t_int':>7s} "
          f"{'elbow peak':>10s} {'shoulder peak':>13s}")
    for name in ns.presets:
        for method in METHODS:
            setup = build_setup(load_config(name))
            log = run_method(setup, method)
            rep = evaluate(log, setup.profile.severity, REBA_POSTURE, setup.q_human0, setup.config.dt)
            t_int = "timeout" if rep.time_to_interaction is None else f"{rep.time_to_interaction:.2f}"
            print(f"{name:14s} {method:9s} {rep.psi_arm:9.4f} {rep.psi_trunk:10.2e} {rep.jerk:10.3g} {t_int:>7s} "
                  f"{rep.peak_excursion[4]:10.3f} {rep.peak_excursion[2]:13.3f}")


if __name__ == "__main__":
    main()
