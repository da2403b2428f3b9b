"""Experiment orchestration: seeded runs, sweeps, and export artifacts.

A run alternates a vectorized collection phase (parallel_envs environment
copies stepping together, each with its own rng and dithering noise) with an
exclusive learning phase, and emits one metrics row per evaluation grid point
(multiples of eval_interval in physical seconds). Evaluation is noise-free,
draws from a dedicated rng stream, and never touches the replay buffer, so
two runs that differ only in evaluation cadence train identically.

Artifacts per run directory:
- metrics.csv: fixed column schema, byte-identical for identical config+seed
- timing.csv: wall-clock per epoch (deliberately outside the deterministic set)
- config.json: config echo plus resolved step constants
- meta.json: physical-time accounting and terminal status
- checkpoint.bin: final agent (networks + optimizer state)

Physical time counts simulated seconds across all parallel copies:
nb_epochs * nb_steps * parallel_envs * dt in total. All returns are
discretized returns of the sampled process; rows are stamped with the grid
time they represent, so sweeps over dt align row-for-row.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .agents import HyperConfig, load_agent, make_agent, resolve_hypers, save_agent
from .envs import make_env
from .exploration import OuNoise
from .ode_core import DiscreteActions, NearContinuousMdp
from .replay import ReplayBuffer

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "physical_time",
    "dt",
    "seed",
    "eval_scaled_return",
    "eval_return_std",
    "residual_mean",
    "grad_norm_v",
    "grad_norm_a",
    "grad_norm_pi",
    "transitions",
    "updates",
)

AGENT_KINDS = ("dau", "dqn", "ddpg")
MODES = ("scaled", "unscaled")


@dataclass
class ExperimentConfig:
    env: str = "pendulum"
    agent: str = "dau"
    mode: str = "scaled"
    dt: float = 0.01
    gamma: float = 0.8
    seed: int = 0
    parallel_envs: int = 32
    nb_epochs: int = 50
    nb_steps: int = 10
    nb_learn: int = 50
    batch: int = 256
    buffer_capacity: int = 1_000_000
    eval_interval: float = 1.0
    eval_episodes: int = 8
    hidden: tuple = (256, 256)
    beta: float = 1.0
    out_dir: str = "run_out"

    def physical_time_total(self) -> float:
        """Simulated seconds summed over every parallel environment copy."""
        return self.nb_epochs * self.nb_steps * self.parallel_envs * self.dt

    def validate(self):
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"agent must be one of {AGENT_KINDS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if min(self.parallel_envs, self.nb_epochs, self.nb_steps, self.nb_learn,
               self.batch, self.eval_episodes) < 1:
            raise ValueError("counts must be at least 1")
        if self.eval_interval <= 0.0:
            raise ValueError("eval_interval must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class MetricsRow:
    physical_time: float
    dt: float
    seed: int
    eval_scaled_return: float
    eval_return_std: float
    residual_mean: float | None
    grad_norm_v: float | None
    grad_norm_a: float | None
    grad_norm_pi: float | None
    transitions: int
    updates: int

    def to_csv(self) -> list:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, int):
                return str(x)
            return repr(float(x))

        return [fmt(getattr(self, c)) for c in CSV_COLUMNS]


class _Explorer:
    """Per-environment dithering state: one noise process per copy.

    Discrete agents perturb the per-action scores and take the argmax;
    continuous agents add the noise to the action and clip to bounds.
    """

    def __init__(self, actions, dt, rngs):
        self.discrete = isinstance(actions, DiscreteActions)
        dim = actions.n if self.discrete else actions.low.size
        if not self.discrete:
            self.low, self.high = actions.low, actions.high
        self.noises = [OuNoise(dim, dt, rng=r) for r in rngs]

    def reset(self, i):
        self.noises[i].reset()

    def act(self, agent, states) -> np.ndarray:
        z = np.stack([n.step() for n in self.noises])
        if self.discrete:
            return np.argmax(agent.action_scores(states) + z, axis=1)
        return np.clip(agent.act_batch(states) + z, self.low, self.high)


def evaluate(agent, spec, mdp, rng, episodes) -> tuple:
    """Noise-free rollouts from fresh starts; mean/std of discretized return."""
    states = np.stack([spec.init_state(rng) for _ in range(episodes)])
    returns = np.zeros(episodes)
    disc = np.ones(episodes)
    active = np.ones(episodes, dtype=bool)
    for _ in range(int(round(spec.episode_seconds / mdp.dt))):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        acts = agent.act_batch(states[idx])
        s2, r, done = mdp.step(states[idx], acts)
        returns[idx] += disc[idx] * r
        disc[idx] *= mdp.gamma_dt
        states[idx] = s2
        active[idx[done]] = False
    return float(np.mean(returns)), float(np.std(returns))


def _resolved_for(config: ExperimentConfig, spec):
    hc = HyperConfig(
        mode=config.mode,
        lr_pi=spec.lr_pi_override if spec.lr_pi_override is not None else 0.03,
        tau=spec.tau_override if spec.tau_override is not None else 0.9,
        beta=config.beta,
    )
    return resolve_hypers(hc, config.dt)


def run_experiment(config: ExperimentConfig, keep_state: bool = False) -> dict:
    """Execute one seeded run and write its artifact set; see module docstring.

    keep_state additionally returns the live agent/buffer under "_state" for
    white-box inspection in tests.
    """
    config.validate()
    spec = make_env(config.env)
    os.makedirs(config.out_dir, exist_ok=True)

    n_par = config.parallel_envs
    ss = np.random.SeedSequence(config.seed)
    kids = ss.spawn(3 + 2 * n_par)
    init_rng = np.random.default_rng(kids[0])
    buffer_rng = np.random.default_rng(kids[1])
    eval_rng = np.random.default_rng(kids[2])
    env_rngs = [np.random.default_rng(k) for k in kids[3 : 3 + n_par]]
    explo_rngs = [np.random.default_rng(k) for k in kids[3 + n_par :]]

    dyn = spec.dynamics
    mdp = NearContinuousMdp(dyn, config.dt, gamma=config.gamma)
    resolved = _resolved_for(config, spec)
    agent = make_agent(config.agent, dyn.state_dim, dyn.actions, resolved,
                       mdp.gamma_dt, rng=init_rng, hidden=config.hidden)
    buffer = ReplayBuffer(config.buffer_capacity, buffer_rng)
    explorer = _Explorer(dyn.actions, config.dt, explo_rngs)

    # reward rescaling: stored rewards always use the algorithmic step scale
    reward_factor = resolved.reward_scale / config.dt

    states = np.stack([spec.init_state(env_rngs[i]) for i in range(n_par)])
    elapsed = np.zeros(n_par)

    per_epoch = n_par * config.nb_steps * config.dt
    rows: list[MetricsRow] = []
    timing: list[tuple] = []
    agg = {"residual_mean": [], "grad_norm_v": [], "grad_norm_a": [], "grad_norm_pi": []}
    transitions = 0
    updates = 0
    eval_k = 0
    early_stop = None

    def emit_row(at_time):
        ev_mean, ev_std = evaluate(agent, spec, mdp, eval_rng, config.eval_episodes)
        mean = lambda xs: float(np.mean(xs)) if xs else None  # noqa: E731
        rows.append(MetricsRow(
            physical_time=at_time, dt=config.dt, seed=config.seed,
            eval_scaled_return=ev_mean, eval_return_std=ev_std,
            residual_mean=mean(agg["residual_mean"]),
            grad_norm_v=mean(agg["grad_norm_v"]),
            grad_norm_a=mean(agg["grad_norm_a"]),
            grad_norm_pi=mean(agg["grad_norm_pi"]),
            transitions=transitions, updates=updates))
        for v in agg.values():
            v.clear()

    emit_row(0.0)
    eval_k = 1
    t_run = time.perf_counter()

    for epoch in range(config.nb_epochs):
        t_epoch = time.perf_counter()

        for _ in range(config.nb_steps):
            acts = explorer.act(agent, states)
            s_next, r, done = mdp.step(states, acts)
            r_store = r * reward_factor
            buffer.push_batch(states, acts, r_store, done, s_next)
            elapsed += config.dt
            states = s_next
            for i in range(n_par):
                if done[i] or elapsed[i] >= spec.episode_seconds - 1e-9:
                    states[i] = spec.init_state(env_rngs[i])
                    elapsed[i] = 0.0
                    explorer.reset(i)
        transitions += n_par * config.nb_steps

        for _ in range(config.nb_learn):
            stats = agent.update(buffer.sample(config.batch))
            updates += 1
            for key in agg:
                if key in stats:
                    agg[key].append(stats[key])

        timing.append((epoch, time.perf_counter() - t_epoch))

        bad = [k for k, v in agg.items() if v and not math.isfinite(v[-1])]
        if bad or not np.all(np.isfinite(agent.nets()[next(iter(agent.nets()))].params)):
            early_stop = f"non-finite training signal at epoch {epoch} ({bad})"
            emit_row((epoch + 1) * per_epoch)  # diagnostic row with the bad stats
            break

        done_time = (epoch + 1) * per_epoch
        while eval_k * config.eval_interval <= done_time + 1e-12:
            emit_row(eval_k * config.eval_interval)
            eval_k += 1

    wall = time.perf_counter() - t_run
    _write_artifacts(config, resolved, rows, timing, agent, wall, early_stop,
                     transitions, updates)
    out = {
        "out_dir": config.out_dir,
        "rows": len(rows),
        "early_stop": early_stop,
        "final_eval": rows[-1].eval_scaled_return,
    }
    if keep_state:
        out["_state"] = {"agent": agent, "buffer": buffer}
    return out


def _write_artifacts(config, resolved, rows, timing, agent, wall, early_stop,
                     transitions, updates):
    out = config.out_dir
    with open(os.path.join(out, "metrics.csv"), "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(row.to_csv())
    with open(os.path.join(out, "timing.csv"), "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("epoch", "wall_seconds"))
        for epoch, dtw in timing:
            w.writerow((epoch, f"{dtw:.6f}"))
    echo = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "resolved": asdict(resolved),
    }
    with open(os.path.join(out, "config.json"), "w", encoding="utf-8") as f:
        json.dump(echo, f, indent=2, sort_keys=True)
        f.write("\n")
    meta = {
        "physical_time_total": config.physical_time_total(),
        "transitions": transitions,
        "updates": updates,
        "rows": len(rows),
        "early_stop": early_stop,
        "wall_seconds": wall,
    }
    with open(os.path.join(out, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    save_agent(agent, os.path.join(out, "checkpoint.bin"),
               extra={"env": config.env, "schema_version": SCHEMA_VERSION})


# ------------------------------------------------------------------- sweeps


def sweep(base: ExperimentConfig, dt_list, seed_list, out_dir) -> dict:
    """Cross product of dt x seed; partial failures recorded, not fatal.

    Writes one long-format sweep.csv concatenating every cell's rows (the
    shared eval grid keeps physical_time values aligned across dt) plus a
    sweep_summary.json with per-cell status.
    """
    if not dt_list or not seed_list:
        raise ValueError("dt_list and seed_list must be non-empty")
    os.makedirs(out_dir, exist_ok=True)
    cells, failures = [], []
    all_rows = []
    for dt in dt_list:
        for seed in seed_list:
            sub = replace(base, dt=dt, seed=seed,
                          out_dir=os.path.join(out_dir, f"dt{dt:g}_seed{seed}"))
            try:
                res = run_experiment(sub)
                with open(os.path.join(sub.out_dir, "metrics.csv"), encoding="utf-8") as f:
                    rdr = csv.reader(f)
                    next(rdr)
                    all_rows.extend(list(rdr))
                cells.append({"dt": dt, "seed": seed, "rows": res["rows"],
                              "early_stop": res["early_stop"],
                              "final_eval": res["final_eval"]})
            except Exception as exc:  # keep sweeping; record the cell
                failures.append({"dt": dt, "seed": seed, "error": repr(exc)})
    with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(all_rows)
    summary = {"cells": cells, "failures": failures}
    with open(os.path.join(out_dir, "sweep_summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return summary


# --------------------------------------------------------------- phase grids


def value_phase_grid(checkpoint_path, out_csv=None, resolution=65) -> dict:
    """Evaluate the learned value and greedy action on an (angle, speed) grid.

    Raster order is deterministic: angle varies in the outer loop over
    [-pi, pi], speed in the inner loop over [-8, 8]. Only 2-d state agents
    are accepted (the grid axes are angle and angular speed).
    """
    agent, header = load_agent(checkpoint_path)
    if agent.state_dim != 2:
        raise ValueError(
            f"phase grid needs a 2-d state agent, checkpoint has {agent.state_dim}")
    thetas = np.linspace(-math.pi, math.pi, resolution)
    speeds = np.linspace(-8.0, 8.0, resolution)
    grid = np.stack([np.repeat(thetas, resolution), np.tile(speeds, resolution)],
                    axis=1)
    values, actions = agent.greedy_value_action(grid)
    actions = np.asarray(actions)
    if actions.ndim == 2:
        actions = actions[:, 0]
    if out_csv is not None:
        with open(out_csv, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("theta", "thetadot", "value", "action"))
            for i in range(grid.shape[0]):
                w.writerow((repr(float(grid[i, 0])), repr(float(grid[i, 1])),
                            repr(float(values[i])), repr(float(actions[i]))))
    best = int(np.argmax(values))
    return {
        "grid": grid,
        "values": values,
        "actions": actions,
        "resolution": resolution,
        "argmax_state": (float(grid[best, 0]), float(grid[best, 1])),
        "out_csv": out_csv,
        "env": header.get("extra", {}).get("env"),
    }
