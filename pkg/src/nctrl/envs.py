"""Benchmark dynamics and the environment registry.

Four systems, all defined through ContinuousDynamics so the same integrator
and sampling machinery applies everywhere:

- pendulum: torque-limited rigid pendulum, angle measured from upright,
  quadratic cost rate -(wrap(theta)^2 + 0.1*thetadot^2 + 0.001*u^2).
- cartpole: cart with a hinged pole, two opposite force actions, survival
  reward rate 1, terminates when the cart or pole leaves its band.
- lqr: scalar integrator ds/dt = a with cost rate -s^2. Linear feedback
  policies u = -k*s admit closed-form values, used as analytic oracles.
- sine: autonomous harmonic oscillator started at (0, 1) so the first state
  coordinate traces sin(t); no control, zero reward.

Angles wrap to (-pi, pi] for the cost only; the state itself is unwrapped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ode_core import BoxActions, ContinuousDynamics, DiscreteActions

# pendulum constants (rigid rod, torque and speed limited)
PENDULUM_G = 10.0
PENDULUM_M = 1.0
PENDULUM_L = 1.0
PENDULUM_MAX_TORQUE = 2.0
PENDULUM_MAX_SPEED = 8.0

# cartpole constants (cart mass, pole mass, pole half-length, force)
CARTPOLE_G = 9.8
CARTPOLE_MASS_CART = 1.0
CARTPOLE_MASS_POLE = 0.1
CARTPOLE_HALF_LENGTH = 0.5
CARTPOLE_FORCE = 10.0
CARTPOLE_X_LIMIT = 2.4
CARTPOLE_THETA_LIMIT = 12.0 * math.pi / 180.0


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    theta = np.asarray(theta, dtype=np.float64)
    wrapped = theta - 2.0 * np.pi * np.floor((theta + np.pi) / (2.0 * np.pi))
    # floor maps the boundary -pi to itself; fold it to +pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    return wrapped if wrapped.ndim else float(wrapped)


def _pendulum_drift(s, a):
    s = np.asarray(s, dtype=np.float64)
    u = np.clip(np.asarray(a, dtype=np.float64), -PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE)
    u = u[..., 0] if u.ndim == s.ndim else u
    theta, thetadot = s[..., 0], s[..., 1]
    thetaacc = (3.0 * PENDULUM_G / (2.0 * PENDULUM_L)) * np.sin(theta) + (
        3.0 / (PENDULUM_M * PENDULUM_L**2)
    ) * u
    return np.stack([thetadot, thetaacc], axis=-1)


def _pendulum_reward_rate(s, a):
    s = np.asarray(s, dtype=np.float64)
    u = np.clip(np.asarray(a, dtype=np.float64), -PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE)
    u = u[..., 0] if u.ndim == s.ndim else u
    theta, thetadot = s[..., 0], s[..., 1]
    return -(wrap_angle(theta) ** 2 + 0.1 * thetadot**2 + 0.001 * u**2)


def _pendulum_clamp(s):
    s = np.asarray(s, dtype=np.float64).copy()
    s[..., 1] = np.clip(s[..., 1], -PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED)
    return s


def _never_terminal(s):
    s = np.asarray(s)
    return np.zeros(s.shape[:-1], dtype=bool) if s.ndim > 1 else False


def pendulum_energy(s) -> float:
    """Conserved energy of the unclamped, torque-free pendulum."""
    s = np.asarray(s, dtype=np.float64)
    theta, thetadot = s[..., 0], s[..., 1]
    return 0.5 * thetadot**2 + (3.0 * PENDULUM_G / (2.0 * PENDULUM_L)) * np.cos(theta)


def make_pendulum() -> ContinuousDynamics:
    return ContinuousDynamics(
        name="pendulum",
        state_dim=2,
        actions=BoxActions(
            low=np.array([-PENDULUM_MAX_TORQUE]), high=np.array([PENDULUM_MAX_TORQUE])
        ),
        drift=_pendulum_drift,
        reward_rate=_pendulum_reward_rate,
        is_terminal=_never_terminal,
        clamp_state=_pendulum_clamp,
    )


def _cartpole_force(a):
    # action 0 pushes left, action 1 pushes right
    idx = np.asarray(a)
    return np.where(idx == 0, -CARTPOLE_FORCE, CARTPOLE_FORCE).astype(np.float64)


def _cartpole_drift(s, a):
    s = np.asarray(s, dtype=np.float64)
    x, xdot, theta, thetadot = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    force = _cartpole_force(a)
    total_mass = CARTPOLE_MASS_CART + CARTPOLE_MASS_POLE
    polemass_length = CARTPOLE_MASS_POLE * CARTPOLE_HALF_LENGTH
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    temp = (force + polemass_length * thetadot**2 * sin_t) / total_mass
    thetaacc = (CARTPOLE_G * sin_t - cos_t * temp) / (
        CARTPOLE_HALF_LENGTH
        * (4.0 / 3.0 - CARTPOLE_MASS_POLE * cos_t**2 / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * cos_t / total_mass
    return np.stack([xdot, xacc, thetadot, thetaacc], axis=-1)


def _cartpole_reward_rate(s, a):
    s = np.asarray(s, dtype=np.float64)
    ones = np.ones(s.shape[:-1], dtype=np.float64)
    return ones if s.ndim > 1 else 1.0


def _cartpole_terminal(s):
    s = np.asarray(s, dtype=np.float64)
    out = (np.abs(s[..., 0]) > CARTPOLE_X_LIMIT) | (
        np.abs(s[..., 2]) > CARTPOLE_THETA_LIMIT
    )
    return out if s.ndim > 1 else bool(out)


def make_cartpole() -> ContinuousDynamics:
    return ContinuousDynamics(
        name="cartpole",
        state_dim=4,
        actions=DiscreteActions(2),
        drift=_cartpole_drift,
        reward_rate=_cartpole_reward_rate,
        is_terminal=_cartpole_terminal,
    )


def _lqr_drift(s, a):
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    return np.broadcast_to(a, s.shape).astype(np.float64).copy()


def _lqr_reward_rate(s, a):
    s = np.asarray(s, dtype=np.float64)
    out = -(s[..., 0] ** 2)
    return out if s.ndim > 1 else float(out)


def make_lqr(action_bound: float = np.inf) -> ContinuousDynamics:
    return ContinuousDynamics(
        name="lqr",
        state_dim=1,
        actions=BoxActions(low=np.array([-action_bound]), high=np.array([action_bound])),
        drift=_lqr_drift,
        reward_rate=_lqr_reward_rate,
        is_terminal=_never_terminal,
    )


def lqr_policy(k: float) -> Callable[[np.ndarray], np.ndarray]:
    """Linear feedback u = -k*s."""

    def policy(s):
        s = np.asarray(s, dtype=np.float64)
        return -k * s

    return policy


def lqr_value_oracle(s: float, k: float, gamma: float) -> float:
    """Continuous-time value of u = -k*s from state s: -s^2 / (2k - ln(gamma)).

    Requires 2k - ln(gamma) > 0 (discounted integral converges).
    """
    denom = 2.0 * k - math.log(gamma)
    if denom <= 0.0:
        raise ValueError("value integral diverges for this (k, gamma)")
    return -(s**2) / denom


def lqr_advantage_oracle(s: float, a: float, k: float, gamma: float) -> float:
    """Continuous-time rescaled advantage of action a under the policy u=-k*s.

    A(s, a) = r(s, a) + dV/ds * F(s, a) + ln(gamma) * V(s), the dt -> 0 limit
    of (Q_dt - V_dt) / dt.
    """
    v = lqr_value_oracle(s, k, gamma)
    dvds = -2.0 * s / (2.0 * k - math.log(gamma))
    return -(s**2) + dvds * a + math.log(gamma) * v


def _sine_drift(s, a):
    s = np.asarray(s, dtype=np.float64)
    return np.stack([s[..., 1], -s[..., 0]], axis=-1)


def _sine_reward_rate(s, a):
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros(s.shape[:-1], dtype=np.float64)
    return out if s.ndim > 1 else 0.0


def make_sine() -> ContinuousDynamics:
    return ContinuousDynamics(
        name="sine",
        state_dim=2,
        actions=DiscreteActions(1),
        drift=_sine_drift,
        reward_rate=_sine_reward_rate,
        is_terminal=_never_terminal,
    )


@dataclass
class EnvSpec:
    """A registered environment: dynamics plus episode and sampling protocol.

    episode_seconds caps episodes in physical time (the cap truncates without
    marking the transition terminal). init_state(rng) draws a fresh initial
    state. lr_pi_override / tau_override carry the per-environment training
    constants that differ from the library defaults.
    """

    dynamics: ContinuousDynamics
    init_state: Callable[[np.random.Generator], np.ndarray]
    episode_seconds: float
    lr_pi_override: float | None = None
    tau_override: float | None = None
    normalize_inputs: bool = False

    @property
    def name(self) -> str:
        return self.dynamics.name


def _pendulum_init(rng: np.random.Generator) -> np.ndarray:
    return np.array(
        [rng.uniform(-np.pi, np.pi), rng.uniform(-1.0, 1.0)], dtype=np.float64
    )


def _cartpole_init(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.05, 0.05, size=4).astype(np.float64)


def _lqr_init(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.uniform(-1.0, 1.0)], dtype=np.float64)


def _sine_init(rng: np.random.Generator) -> np.ndarray:
    return np.array([0.0, 1.0], dtype=np.float64)


def make_env(name: str) -> EnvSpec:
    """Registry lookup: 'pendulum', 'cartpole', 'lqr', 'sine'."""
    if name == "pendulum":
        return EnvSpec(
            dynamics=make_pendulum(),
            init_state=_pendulum_init,
            episode_seconds=10.0,
            lr_pi_override=0.02,
            tau_override=0.0,
        )
    if name == "cartpole":
        return EnvSpec(
            dynamics=make_cartpole(),
            init_state=_cartpole_init,
            episode_seconds=20.0,
            lr_pi_override=0.02,
            tau_override=0.0,
        )
    if name == "lqr":
        return EnvSpec(
            dynamics=make_lqr(action_bound=4.0),
            init_state=_lqr_init,
            episode_seconds=10.0,
        )
    if name == "sine":
        return EnvSpec(
            dynamics=make_sine(), init_state=_sine_init, episode_seconds=10.0
        )
    raise KeyError(f"unknown environment {name!r}")


ENV_NAMES = ("pendulum", "cartpole", "lqr", "sine")
