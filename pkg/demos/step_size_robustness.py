"""Train the same agent at two time steps and compare learning curves.

The point of the scaled update rule is that halving dt should leave the
learning trajectory roughly where it was, as a function of *physical* time.
A baseline whose constants were tuned at one dt has no such guarantee.

This is a desk-scale illustration, not a benchmark: a few minutes of
pendulum swing-up with small networks.  Pass --full for a longer run.

Run: python3 demos/step_size_robustness.py [--full] [--agent dau|ddpg]
"""

import argparse
import csv
import os
import tempfile

from nctrl.harness import ExperimentConfig, run_experiment


def curve(path):
    with open(os.path.join(path, "metrics.csv"), encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    return [(float(r["physical_time"]), float(r["eval_scaled_return"]))
            for r in rows]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--agent", default="dau", choices=("dau", "ddpg"))
    ap.add_argument("--mode", default=None,
                    help="scaled|unscaled (default: scaled for dau, unscaled otherwise)")
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args()
    mode = args.mode or ("scaled" if args.agent == "dau" else "unscaled")

    budget = 128.0 if args.full else 16.0  # physical seconds of experience
    work = tempfile.mkdtemp(prefix="robustness_")
    curves = {}
    for dt in (0.01, 0.002):
        per_epoch = 32 * 10 * dt  # parallel_envs * nb_steps * dt
        cfg = ExperimentConfig(
            env="pendulum", agent=args.agent, mode=mode, dt=dt, seed=0,
            parallel_envs=32, nb_epochs=max(1, round(budget / per_epoch)),
            nb_steps=10, nb_learn=20, batch=128, hidden=(64, 64),
            eval_interval=max(budget / 8, 1.0), eval_episodes=4,
            out_dir=os.path.join(work, "dt%g" % dt))
        print("dt=%g: %d epochs, %.0f physical seconds"
              % (dt, cfg.nb_epochs, cfg.physical_time_total()))
        res = run_experiment(cfg)
        if res["early_stop"]:
            print("  diverged: %s" % res["early_stop"])
        curves[dt] = curve(cfg.out_dir)

    print()
    print("%14s %16s %16s" % ("physical time", "return @ dt=0.01",
                              "return @ dt=0.002"))
    coarse = dict(curves[0.01])
    for t, r in curves[0.002]:
        if t in coarse:
            print("%14.1f %16.2f %16.2f" % (t, coarse[t], r))
    print()
    print("artifacts in %s" % work)
    if args.agent == "dau":
        print("Scaled updates: the two columns should track each other.")
    else:
        print("Fixed constants: expect the fine-dt column to lag or stall.")


if __name__ == "__main__":
    main()
