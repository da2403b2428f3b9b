"""Timestep-robust value learning on near-continuous-time control problems."""

__version__ = "0.1.0"

from .ode_core import (  # noqa: F401
    BoxActions,
    ContinuousDynamics,
    DiscreteActions,
    NearContinuousMdp,
    Trajectory,
    discretized_return,
    effective_discount,
    integrate_held_action,
    physical_time_horizon,
    rollout,
)
from .envs import ENV_NAMES, EnvSpec, make_env  # noqa: F401
