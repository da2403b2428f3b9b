"""Near-continuous-time MDP core.

A control problem is described by its continuous-time data: a drift field
F(s, a), a reward rate r(s, a), and a terminal set. Sampling the system every
dt seconds while holding the action piecewise constant yields a discrete MDP
whose per-step reward is r(s_k, a_k) * dt and whose per-step discount is
gamma ** dt for a fixed physical discount gamma in (0, 1). As dt shrinks, the
discounted return approaches the continuous-time integral of gamma^t * r and
the effective planning horizon dt / (1 - gamma**dt) approaches -1 / ln(gamma).

Everything here is double precision. States are numpy arrays of shape
(state_dim,) or batches (B, state_dim); drift and reward-rate callables are
expected to broadcast over the leading batch axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class DiscreteActions:
    """Finite action set, identified by index 0..n-1."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one action, got {self.n}")


@dataclass(frozen=True)
class BoxActions:
    """Box-bounded continuous actions. Bounds may be +-inf."""

    low: np.ndarray
    high: np.ndarray

    @property
    def dim(self) -> int:
        return int(np.asarray(self.low).size)


@dataclass
class ContinuousDynamics:
    """Continuous-time control problem: drift, reward rate, terminal set.

    drift(s, a) returns ds/dt with the same shape as s. reward_rate(s, a)
    returns a scalar per state (shape () or (B,)). is_terminal(s) returns a
    bool per state. clamp_state, when given, projects the state back into the
    legal set after each observation step (e.g. a hard speed limit); it is a
    modelling constraint of the discretized system, not of the flow itself.
    """

    name: str
    state_dim: int
    actions: object  # DiscreteActions | BoxActions
    drift: Callable[[np.ndarray, np.ndarray], np.ndarray]
    reward_rate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    is_terminal: Callable[[np.ndarray], np.ndarray]
    clamp_state: Optional[Callable[[np.ndarray], np.ndarray]] = None


def effective_discount(gamma: float, dt: float) -> float:
    """Per-step discount gamma**dt of the dt-sampled MDP.

    gamma is the physical (per-second) discount and must lie strictly inside
    (0, 1); dt >= 0. dt = 0 returns 1.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"physical discount must be in (0, 1), got {gamma}")
    if dt < 0.0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    return math.exp(dt * math.log(gamma))


def physical_time_horizon(gamma: float, dt: float) -> float:
    """Planning horizon dt / (1 - gamma**dt), in physical seconds.

    Decreases monotonically to -1/ln(gamma) as dt -> 0; dt = 0 returns that
    limit directly.
    """
    if dt == 0.0:
        if not (0.0 < gamma < 1.0):
            raise ValueError(f"physical discount must be in (0, 1), got {gamma}")
        return -1.0 / math.log(gamma)
    return dt / (1.0 - effective_discount(gamma, dt))


def _as_state(s) -> np.ndarray:
    return np.asarray(s, dtype=np.float64)


def integrate_held_action(
    dynamics: ContinuousDynamics,
    s: np.ndarray,
    a,
    dt: float,
    substeps: int = 8,
    method: str = "rk4",
) -> np.ndarray:
    """Advance the flow of ds/dt = F(s, a) by dt with the action held fixed.

    Fixed-step integration with `substeps` internal steps of size
    h = dt / substeps. method "rk4" (default) or "euler". Results converge to
    the exact held-action flow as substeps grows; "euler" with substeps=1 is
    the first-order discretization studied by the trajectory-convergence
    check. Batched states integrate in lockstep.
    """
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    if method not in ("rk4", "euler"):
        raise ValueError(f"unknown method {method!r}")
    s = _as_state(s)
    h = dt / substeps
    f = dynamics.drift
    if method == "euler":
        for _ in range(substeps):
            s = s + h * f(s, a)
        return s
    for _ in range(substeps):
        k1 = f(s, a)
        k2 = f(s + (0.5 * h) * k1, a)
        k3 = f(s + (0.5 * h) * k2, a)
        k4 = f(s + h * k3, a)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s


@dataclass
class NearContinuousMdp:
    """The dt-sampled MDP induced by a ContinuousDynamics.

    Holds the sampling step dt, the physical discount gamma, and the inner
    integrator settings. step() implements one observation step: integrate the
    held action, pay reward_rate(s, a) * dt, flag genuine termination.
    """

    dynamics: ContinuousDynamics
    dt: float
    gamma: float = 0.8
    substeps: int = 8
    method: str = "rk4"
    gamma_dt: float = field(init=False)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        self.gamma_dt = effective_discount(self.gamma, self.dt)

    def step(self, s: np.ndarray, a):
        """One held-action step: returns (s_next, step_reward, done).

        s must be non-terminal (stepping a terminal state raises). Batched
        states return batched rewards and done flags; the terminality
        precondition applies to every row.
        """
        s = _as_state(s)
        if bool(np.any(self.dynamics.is_terminal(s))):
            raise ValueError("cannot step a terminal state")
        reward = np.asarray(self.dynamics.reward_rate(s, a), dtype=np.float64) * self.dt
        s_next = integrate_held_action(
            self.dynamics, s, a, self.dt, self.substeps, self.method
        )
        if self.dynamics.clamp_state is not None:
            s_next = self.dynamics.clamp_state(s_next)
        done = self.dynamics.is_terminal(s_next)
        if s.ndim == 1:
            return s_next, float(reward), bool(done)
        return s_next, reward, np.asarray(done, dtype=bool)


@dataclass
class Trajectory:
    """A rollout of the sampled MDP: states[k], actions[k] -> rewards[k].

    states has one more row than actions/rewards (it includes the final
    state). rewards are step rewards, i.e. already scaled by dt. dones[k] is
    True only on genuine termination at states[k + 1].
    """

    dt: float
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray


def rollout(
    mdp: NearContinuousMdp,
    policy: Callable[[np.ndarray], object],
    s0: np.ndarray,
    n_steps: int,
) -> Trajectory:
    """Roll a deterministic policy for n_steps or until termination."""
    s = _as_state(s0)
    states = [s]
    actions, rewards, dones = [], [], []
    for _ in range(n_steps):
        a = policy(s)
        s, r, d = mdp.step(s, a)
        states.append(s)
        actions.append(a)
        rewards.append(r)
        dones.append(d)
        if d:
            break
    return Trajectory(
        dt=mdp.dt,
        states=np.stack(states),
        actions=np.asarray(actions),
        rewards=np.asarray(rewards, dtype=np.float64),
        dones=np.asarray(dones, dtype=bool),
    )


def discretized_return(rewards: np.ndarray, gamma_dt: float) -> float:
    """Discounted sum of step rewards: sum_k gamma_dt**k * rewards[k]."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        return 0.0
    weights = gamma_dt ** np.arange(rewards.shape[0])
    return float(weights @ rewards)
