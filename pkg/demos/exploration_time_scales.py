"""Why dithering exploration dies as the time step shrinks.

Two experiments on the two-torque pendulum:

  1. epsilon-greedy with epsilon=1: at each step flip a fair coin between
     full left and full right torque.  As dt drops, the torque sequence
     averages out and every seed follows the same mean flow -- the spread
     of reached states collapses like sqrt(dt).

  2. Ornstein-Uhlenbeck noise: the exact discretization keeps a fixed
     stationary law no matter how finely you chop time, and composing two
     half steps reproduces one full step to machine precision.

Run: python3 demos/exploration_time_scales.py
"""

import numpy as np

from nctrl.exploration import OuNoise
from nctrl.theory_checks import eps_greedy_averaging


def coin_flip_collapse():
    print("-- coin-flip torques, 256 seeds, horizon 2s --")
    rep = eps_greedy_averaging(epsilon=1.0)
    print("%10s %18s %18s" % ("dt", "state spread (std)", "dist from mean flow"))
    for dt, s, d in zip(rep["dt_grid"], rep["seed_std"], rep["mean_distance"]):
        print("%10.5f %18.4f %18.4f" % (dt, s, d))
    stds = rep["seed_std"]
    ratio = (stds[0] / stds[-1]) ** (1 / (len(stds) - 1))
    print("spread ratio per dt halving: %.2f (pure averaging gives sqrt(2)=1.41)"
          % ratio)


def ou_invariance():
    print()
    print("-- Ornstein-Uhlenbeck, kappa=7.5 sigma=1.5 --")
    # stationary spread is dt-free
    for dt in (0.01, 0.001):
        noise = OuNoise(1, dt, rng=np.random.default_rng(0))
        xs = np.array([noise.step()[0] for _ in range(40000)])
        print("dt=%5.3f  empirical var %.4f  (stationary sigma^2/(2 kappa) = %.4f)"
              % (dt, xs[2000:].var(), 1.5 ** 2 / (2 * 7.5)))

    # exactness: two half steps compose into one full step of the same law
    rng = np.random.default_rng(7)
    z = rng.standard_normal(2)
    kappa, sigma, dt = 7.5, 1.5, 0.02
    x = 0.8

    def exact(x0, h, g):
        decay = np.exp(-kappa * h)
        return x0 * decay + sigma * np.sqrt((1 - decay ** 2) / (2 * kappa)) * g

    half = exact(exact(x, dt / 2, z[0]), dt / 2, z[1])
    # fold the two half-step Gaussians into the single step they imply
    d = np.exp(-kappa * dt / 2)
    w = sigma * np.sqrt((1 - d ** 2) / (2 * kappa))
    combined = x * d * d + w * (d * z[0] + z[1])
    print("two half steps:    %.17f" % half)
    print("one combined step: %.17f" % combined)
    print("difference: %.1e" % abs(half - combined))


def main():
    coin_flip_collapse()
    ou_invariance()
    print()
    print("Dithering needs its correlation time measured in seconds, not steps.")


if __name__ == "__main__":
    main()
