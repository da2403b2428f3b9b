"""Exploration noise with a well-defined continuous-time limit.

The workhorse is an Ornstein-Uhlenbeck process dz = -kappa z dt + sigma dB,
discretized exactly: over a step of length dt the conditional law of z' given
z is Gaussian with mean z * exp(-kappa dt) and variance
sigma^2 (1 - exp(-2 kappa dt)) / (2 kappa). Because the discretization is
exact, running the chain at dt or at dt/2 (two steps) gives the same
process in distribution, and its stationary variance sigma^2 / (2 kappa) is
independent of dt. Defaults kappa = 7.5, sigma = 1.5 give stationary
variance 0.15.

Continuous actions explore by adding z and clipping to the action box;
discrete actions explore by perturbing per-action scores with z before the
argmax. Epsilon-greedy resampled every dt is also provided; it degenerates
to an averaged drift as dt -> 0 instead of staying coherent.
"""

from __future__ import annotations

import math

import numpy as np

OU_KAPPA = 7.5
OU_SIGMA = 1.5


def ou_coefficients(kappa: float, sigma: float, dt: float):
    """Exact one-step coefficients (decay, noise_std) of the OU chain."""
    if kappa <= 0.0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if dt < 0.0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    decay = math.exp(-kappa * dt)
    noise_std = sigma * math.sqrt((1.0 - math.exp(-2.0 * kappa * dt)) / (2.0 * kappa))
    return decay, noise_std


def ou_stationary_std(kappa: float, sigma: float) -> float:
    return sigma / math.sqrt(2.0 * kappa)


class OuNoise:
    """Per-coordinate OU chain with exact discretization.

    dim is the number of noise coordinates: the action dimension for
    continuous exploration, the action count for perturbed-argmax
    exploration. reset() draws the stationary law (used at episode starts).
    """

    def __init__(
        self,
        dim: int,
        dt: float,
        kappa: float = OU_KAPPA,
        sigma: float = OU_SIGMA,
        rng: np.random.Generator | None = None,
    ):
        self.dim = int(dim)
        self.dt = float(dt)
        self.kappa = float(kappa)
        self.sigma = float(sigma)
        self.decay, self.noise_std = ou_coefficients(kappa, sigma, dt)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.z = np.zeros(self.dim, dtype=np.float64)
        self.reset()

    def reset(self) -> np.ndarray:
        self.z = ou_stationary_std(self.kappa, self.sigma) * self.rng.standard_normal(
            self.dim
        )
        return self.z

    def step(self) -> np.ndarray:
        self.z = self.decay * self.z + self.noise_std * self.rng.standard_normal(
            self.dim
        )
        return self.z


def continuous_explore(action: np.ndarray, z: np.ndarray, low, high) -> np.ndarray:
    """Additive OU exploration for box actions: clip(action + z, low, high)."""
    return np.clip(np.asarray(action, dtype=np.float64) + z, low, high)


def perturbed_argmax(scores: np.ndarray, z: np.ndarray) -> int:
    """argmax_a (scores[a] + z[a]); exact ties resolve to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != np.asarray(z).shape:
        raise ValueError(f"scores {scores.shape} and noise {np.shape(z)} differ")
    return int(np.argmax(scores + z))


def epsilon_greedy(
    a_det: int, n_actions: int, epsilon: float, rng: np.random.Generator
) -> int:
    """The greedy action with probability 1-epsilon, else a uniform draw.

    The random draw is taken only on the epsilon branch, so epsilon = 0
    consumes no randomness.
    """
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return int(a_det)
