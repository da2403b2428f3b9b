"""Command-line entry points.

Subcommands:
- train: one seeded run writing metrics.csv/config.json/checkpoint.bin
- sweep: cross product over --dt-list and --seeds, long-format sweep.csv
- theory: run a named numerical check (or all) and print/write its JSON report
- grid: evaluate a checkpoint's value/policy on the phase-space raster

Configuration may come from a flat key=value file (--config); explicit
command-line flags override file entries, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .harness import ExperimentConfig, run_experiment, sweep, value_phase_grid
from .theory_checks import CHECKS, run_check

_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    """Parse a config value from text using the field's declared type."""
    f = _CONFIG_FIELDS[name]
    if f.type in ("int",):
        return int(raw)
    if f.type in ("float",):
        return float(raw)
    if f.type in ("tuple",):
        return tuple(int(x) for x in raw.replace("(", "").replace(")", "").split(",") if x.strip())
    return raw


def parse_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment; unknown keys rejected."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in _CONFIG_FIELDS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _coerce(key, raw)
    return out


def build_config(file_path: str | None, overrides: dict) -> ExperimentConfig:
    vals = parse_config_file(file_path) if file_path else {}
    for key, v in overrides.items():
        if v is not None:
            vals[key] = v
    if "hidden" in vals and not isinstance(vals["hidden"], tuple):
        vals["hidden"] = _coerce("hidden", str(vals["hidden"]))
    return ExperimentConfig(**vals)


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--env", choices=("pendulum", "cartpole", "lqr", "sine"))
    p.add_argument("--agent", choices=("dau", "dqn", "ddpg"))
    p.add_argument("--mode", choices=("scaled", "unscaled"))
    p.add_argument("--dt", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--parallel-envs", type=int, dest="parallel_envs")
    p.add_argument("--epochs", type=int, dest="nb_epochs")
    p.add_argument("--nb-steps", type=int, dest="nb_steps")
    p.add_argument("--nb-learn", type=int, dest="nb_learn")
    p.add_argument("--batch", type=int)
    p.add_argument("--buffer", type=int, dest="buffer_capacity")
    p.add_argument("--eval-interval", type=float, dest="eval_interval")
    p.add_argument("--eval-episodes", type=int, dest="eval_episodes")
    p.add_argument("--hidden", help="comma-separated layer widths, e.g. 256,256")
    p.add_argument("--beta", type=float, help="learning-rate step exponent")


def _overrides_from(args) -> dict:
    keys = ("env", "agent", "mode", "dt", "gamma", "seed", "parallel_envs",
            "nb_epochs", "nb_steps", "nb_learn", "batch", "buffer_capacity",
            "eval_interval", "eval_episodes", "beta")
    out = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "hidden", None):
        out["hidden"] = _coerce("hidden", args.hidden)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nctrl",
                                     description="near-continuous control experiments")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_train = sub.add_parser("train", help="run one seeded experiment")
    _add_train_flags(p_train)
    p_train.add_argument("--out", required=True, help="output directory")

    p_sweep = sub.add_parser("sweep", help="cross product over dt and seeds")
    _add_train_flags(p_sweep)
    p_sweep.add_argument("--dt-list", required=True,
                         help="comma-separated dt values")
    p_sweep.add_argument("--seeds", required=True,
                         help="comma-separated seed values")
    p_sweep.add_argument("--out", required=True)

    p_theory = sub.add_parser("theory", help="run a numerical limit check")
    p_theory.add_argument("name", choices=sorted(CHECKS) + ["all"])
    p_theory.add_argument("--out", help="write the JSON report here")

    p_grid = sub.add_parser("grid", help="phase-space value/policy raster")
    p_grid.add_argument("--checkpoint", required=True)
    p_grid.add_argument("--out", required=True, help="output CSV path")
    p_grid.add_argument("--resolution", type=int, default=65)

    args = parser.parse_args(argv)

    if args.cmd == "train":
        cfg = build_config(args.config, _overrides_from(args))
        cfg.out_dir = args.out
        res = run_experiment(cfg)
        print(f"wrote {res['rows']} rows to {res['out_dir']} "
              f"(final eval return {res['final_eval']:.4f})")
        if res["early_stop"]:
            print(f"early stop: {res['early_stop']}")
            return 1
        return 0

    if args.cmd == "sweep":
        cfg = build_config(args.config, _overrides_from(args))
        dts = [float(x) for x in args.dt_list.split(",") if x.strip()]
        seeds = [int(x) for x in args.seeds.split(",") if x.strip()]
        summary = sweep(cfg, dts, seeds, args.out)
        print(f"{len(summary['cells'])} cells ok, "
              f"{len(summary['failures'])} failed -> {args.out}/sweep.csv")
        return 0 if not summary["failures"] else 1

    if args.cmd == "theory":
        names = sorted(CHECKS) if args.name == "all" else [args.name]
        reports = {n: run_check(n) for n in names}
        payload = reports[args.name] if args.name != "all" else reports
        text = json.dumps(payload, indent=2, sort_keys=True)
        if args.out:
            with open(args.out, "w", encoding="utf-8") as f:
                f.write(text + "\n")
        print(text)
        return 0 if all(r["passed"] for r in reports.values()) else 1

    if args.cmd == "grid":
        res = value_phase_grid(args.checkpoint, out_csv=args.out,
                               resolution=args.resolution)
        th, om = res["argmax_state"]
        print(f"wrote {res['resolution']**2} grid rows to {args.out} "
              f"(value peak at theta={th:.3f}, thetadot={om:.3f})")
        return 0

    return 2  # unreachable with required=True


if __name__ == "__main__":
    sys.exit(main())
