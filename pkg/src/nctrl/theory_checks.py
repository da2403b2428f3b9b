"""Runnable numerical checks of the library's small-step limit behavior.

Each check measures a quantity whose leading error term is known to be
linear in the sampling step, fits the observed order on a shrinking dt grid,
and reports a structured verdict:

- trajectory_convergence: held-action Euler sampling approaches the
  continuous flow at first order (terminal-state error).
- value_convergence / q_collapse / advantage_limit: on the scalar integrator
  benchmark, the discretized value matches the closed-form value at first
  order; state-action and state values collapse onto each other at rate dt;
  the gap divided by dt converges to the closed-form advantage rate.
- policy_improvement: nonnegative advantage rates against the current linear
  feedback gain imply pointwise value improvement, with a strict converse.
- eps_greedy_averaging: random action dithering at rate dt averages into a
  deterministic mixed drift; cross-seed spread shrinks as the step shrinks.
- lr_trichotomy: on a scripted one-parameter value fit with step-scaled
  residuals, learning rates proportional to dt track a well-defined limit,
  rates ~ dt^2 freeze, and rates ~ sqrt(dt) blow up as dt -> 0.

All checks use deterministic dynamics (randomness only where dithering is
the object of study) so the fitted rates are not polluted by estimation
noise. Reports are plain dicts of floats/lists/bools, JSON-ready.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envs import (
    PENDULUM_MAX_TORQUE,
    lqr_advantage_oracle,
    lqr_policy,
    lqr_value_oracle,
    make_pendulum,
)
from .ode_core import ContinuousDynamics, DiscreteActions, integrate_held_action

E_GAMMA = math.exp(-1.0)  # discount whose log is exactly -1; keeps rates legible
TRUNCATION_TOL = 1e-12  # stop discounted sums once the weight drops below this


@dataclass(frozen=True)
class RateFit:
    """Least-squares order fit of error against step size, in log-log space."""

    dts: tuple
    errors: tuple
    slope: float
    intercept: float
    slope_se: float

    def window(self):
        """Two-standard-error band around the fitted slope."""
        return (self.slope - 2.0 * self.slope_se, self.slope + 2.0 * self.slope_se)

    def to_dict(self):
        lo, hi = self.window()
        return {
            "dt_grid": list(self.dts),
            "errors": list(self.errors),
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_se": self.slope_se,
            "slope_window": [lo, hi],
        }


def fit_rate(dts, errors) -> RateFit:
    dts = np.asarray(dts, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if dts.ndim != 1 or dts.size < 2 or errors.shape != dts.shape:
        raise ValueError("need matching 1-d grids with at least two points")
    if np.any(np.diff(dts) >= 0.0):
        raise ValueError("dt grid must be strictly decreasing")
    if np.any(errors <= 0.0) or not np.all(np.isfinite(errors)):
        raise ValueError("errors must be finite and strictly positive")
    x, y = np.log(dts), np.log(errors)
    n = x.size
    xb = x - x.mean()
    slope = float(np.dot(xb, y) / np.dot(xb, xb))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    if n > 2:
        se = float(math.sqrt((resid @ resid / (n - 2)) / (xb @ xb)))
    else:
        se = 0.0
    return RateFit(tuple(dts), tuple(errors), slope, intercept, se)


# ------------------------------------------------ scalar-integrator rollouts


def lqr_value_dt(s, k, gamma, dt, tol=TRUNCATION_TOL):
    """Discounted return of the sampled process under u = -k*s, summed until
    the discount weight falls below tol.

    Held actions make each step exact: s' = s*(1 - k*dt), step reward
    -s^2*dt, so the whole rollout is a geometric series evaluated directly.
    """
    if dt <= 0.0 or dt >= 1.0 / k:
        raise ValueError("need 0 < dt < 1/k for a stable sampled rollout")
    n = int(math.ceil(math.log(tol) / (dt * math.log(gamma))))
    j = np.arange(n)
    weights = np.exp(j * (dt * math.log(gamma)))
    states = s * (1.0 - k * dt) ** j
    return float(np.sum(weights * -(states**2) * dt))


def lqr_q_dt(s, a, k, gamma, dt, tol=TRUNCATION_TOL):
    """Like lqr_value_dt but the first step holds an arbitrary action a."""
    s1 = s + a * dt
    return -(s**2) * dt + gamma**dt * lqr_value_dt(s1, k, gamma, dt, tol)


# ----------------------------------------------------------------- checks

DT_GRID_LQR = (0.1, 0.05, 0.025, 0.0125, 0.00625)


def _ref_flow(dynamics, policy, s0, T, h):
    """Continuous-control reference: policy re-evaluated every fine step."""
    s = np.asarray(s0, dtype=np.float64).copy()
    f = dynamics.drift
    for _ in range(int(round(T / h))):
        a = policy(s)
        k1 = f(s, a)
        k2 = f(s + 0.5 * h * k1, a)
        k3 = f(s + 0.5 * h * k2, a)
        k4 = f(s + h * k3, a)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s


def trajectory_convergence(dynamics=None, policy=None, T=2.0,
                           dt_grid=(0.02, 0.01, 0.005, 0.0025),
                           s0=(2.0, 0.0), ref_h=1e-3,
                           slope_window=(0.8, 1.2)) -> dict:
    """Terminal-state error of held-action Euler sampling vs the fine flow.

    Defaults probe the uncontrolled pendulum; pass any dynamics + policy.
    """
    if dynamics is None:
        dynamics = make_pendulum()
    if policy is None:
        policy = lambda s: np.array([0.0])  # noqa: E731
    s0 = np.asarray(s0, dtype=np.float64)
    ref = _ref_flow(dynamics, policy, s0, T, ref_h)
    errors = []
    blowup = False
    for dt in dt_grid:
        s = s0.copy()
        for _ in range(int(round(T / dt))):
            s = integrate_held_action(dynamics, s, policy(s), dt,
                                      substeps=1, method="euler")
        if not np.all(np.isfinite(s)):
            blowup = True
            errors.append(float("inf"))
        else:
            errors.append(float(np.max(np.abs(s - ref))))
    report = {"name": "trajectory", "dt_grid": list(dt_grid), "errors": errors,
              "blowup": blowup, "expected_order": 1.0,
              "slope_window": list(slope_window)}
    if blowup:
        report.update(slope=None, passed=False)
        return report
    if max(errors) < 1e-13:  # exact sampling (e.g. zero drift): nothing to fit
        report.update(slope=None, passed=True, exact=True)
        return report
    fit = fit_rate(dt_grid, errors)
    report.update(fit.to_dict())
    report["passed"] = slope_window[0] <= fit.slope <= slope_window[1]
    return report


def value_convergence(s=1.0, k=1.0, gamma=E_GAMMA, dt_grid=DT_GRID_LQR,
                      slope_window=(0.8, 1.2)) -> dict:
    """Sampled-process value approaches the closed-form value at first order."""
    v_ref = lqr_value_oracle(s, k, gamma)
    errors = [abs(lqr_value_dt(s, k, gamma, dt) - v_ref) for dt in dt_grid]
    fit = fit_rate(dt_grid, errors)
    rel_finest = errors[-1] / abs(v_ref)
    report = {"name": "value", "oracle": v_ref, "rel_error_finest": rel_finest,
              "expected_order": 1.0, "slope_window": list(slope_window)}
    report.update(fit.to_dict())
    report["passed"] = slope_window[0] <= fit.slope <= slope_window[1]
    return report


def q_collapse(s=1.0, a=0.0, k=1.0, gamma=E_GAMMA, dt_grid=DT_GRID_LQR,
               slope_window=(0.9, 1.1), limit_rel_tol=0.05) -> dict:
    """|Q_dt - V_dt| shrinks linearly; the gap over dt approaches the
    closed-form advantage rate."""
    gaps = []
    for dt in dt_grid:
        gaps.append(abs(lqr_q_dt(s, a, k, gamma, dt) - lqr_value_dt(s, k, gamma, dt)))
    fit = fit_rate(dt_grid, gaps)
    a_ref = lqr_advantage_oracle(s, a, k, gamma)
    limit_est = gaps[-1] / dt_grid[-1]
    rel = abs(limit_est - abs(a_ref)) / abs(a_ref) if a_ref != 0.0 else limit_est
    report = {"name": "q_collapse", "rate_limit_estimate": limit_est,
              "rate_oracle_magnitude": abs(a_ref), "limit_rel_error": rel,
              "expected_order": 1.0, "slope_window": list(slope_window)}
    report.update(fit.to_dict())
    report["passed"] = (slope_window[0] <= fit.slope <= slope_window[1]
                        and rel <= limit_rel_tol)
    return report


def advantage_limit(s=1.0, a=0.0, k=1.0, gamma=E_GAMMA, dt_grid=DT_GRID_LQR,
                    slope_window=(0.8, 1.2), better_gain=2.0) -> dict:
    """(Q_dt - V_dt)/dt converges to the closed-form advantage rate, and the
    rescaled gap of a strictly better action keeps its sign on the whole grid."""
    a_ref = lqr_advantage_oracle(s, a, k, gamma)
    errors, rescaled = [], []
    for dt in dt_grid:
        g = (lqr_q_dt(s, a, k, gamma, dt) - lqr_value_dt(s, k, gamma, dt)) / dt
        rescaled.append(g)
        errors.append(abs(g - a_ref))
    fit = fit_rate(dt_grid, errors)

    a_better = float(lqr_policy(better_gain)(s))  # oracle rate (2/3)(g-k)s^2 > 0
    signs_ok = all(
        (lqr_q_dt(s, a_better, k, gamma, dt) - lqr_value_dt(s, k, gamma, dt)) / dt > 0.0
        for dt in dt_grid
    )
    report = {"name": "advantage_limit", "oracle": a_ref, "rescaled_gap": rescaled,
              "sign_preserved": signs_ok, "expected_order": 1.0,
              "slope_window": list(slope_window)}
    report.update(fit.to_dict())
    report["passed"] = (slope_window[0] <= fit.slope <= slope_window[1]) and signs_ok
    return report


def policy_improvement(k=1.0, k2=2.0, gamma=E_GAMMA,
                       state_grid=(-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0),
                       tol=1e-12) -> dict:
    """Nonnegative advantage rates of gain k2 against gain k imply pointwise
    value improvement; a gain with negative rates is strictly worse somewhere.

    tol absorbs roundoff in the closed forms (the on-policy advantage is an
    exact zero analytically but a few ulps numerically).
    """
    adv = [lqr_advantage_oracle(s, float(lqr_policy(k2)(s)), k, gamma)
           for s in state_grid]
    dv = [lqr_value_oracle(s, k2, gamma) - lqr_value_oracle(s, k, gamma)
          for s in state_grid]
    adv_nonneg = all(x >= -tol for x in adv)
    improves = all(x >= -tol for x in dv)
    strict_somewhere = any(x > tol for x in dv) or k2 == k
    implication = (not adv_nonneg) or improves
    converse = (adv_nonneg or any(x < -tol for x in dv))
    return {
        "name": "policy_improvement", "k": k, "k2": k2,
        "state_grid": list(state_grid), "advantage": adv, "value_gain": dv,
        "advantage_nonnegative": adv_nonneg, "value_improves": improves,
        "passed": implication and converse and (not adv_nonneg or strict_somewhere),
    }


# ---------------------------------------------------- dithered-action check


def two_torque_pendulum() -> ContinuousDynamics:
    """Pendulum restricted to two opposite maximal torques (discrete actions)."""
    base = make_pendulum()
    torques = np.array([-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE])

    def drift(s, a):
        return base.drift(s, torques[np.asarray(a, dtype=np.int64)])

    def reward_rate(s, a):
        return base.reward_rate(s, torques[np.asarray(a, dtype=np.int64)])

    return ContinuousDynamics(
        name="pendulum2",
        state_dim=2,
        actions=DiscreteActions(2),
        drift=drift,
        reward_rate=reward_rate,
        is_terminal=base.is_terminal,
        clamp_state=base.clamp_state,
    )


def eps_greedy_averaging(epsilon=0.5, dt_grid=(0.01, 0.005, 0.0025, 0.00125),
                         T=2.0, n_seeds=256, seed=0, s0=(2.0, 0.0),
                         ref_h=1e-3) -> dict:
    """Random dithering at the step scale averages into a mixed drift.

    The dithered policy takes the fixed action (index 1) with prob 1-eps and
    a uniform action otherwise; the reference flow uses the matching convex
    combination of drifts. Reports, per dt, the distance of the cross-seed
    mean terminal state from the reference, and the cross-seed spread.
    """
    if n_seeds < 64:
        raise ValueError("need at least 64 seeds to average")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    dyn = two_torque_pendulum()
    base = make_pendulum()
    torques = np.array([-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE])
    s0 = np.asarray(s0, dtype=np.float64)

    w_fixed, w_each = 1.0 - epsilon, epsilon / 2.0

    def mixed_drift(s, _a):
        return (w_fixed + w_each) * base.drift(s, np.array([torques[1]])) + (
            w_each
        ) * base.drift(s, np.array([torques[0]]))

    mixed = ContinuousDynamics("mixed", 2, base.actions, mixed_drift,
                               base.reward_rate, base.is_terminal)
    ref = _ref_flow(mixed, lambda s: np.array([0.0]), s0, T, ref_h)

    dists, stds = [], []
    for i, dt in enumerate(dt_grid):
        rng = np.random.default_rng(seed * 1000003 + i)
        s = np.tile(s0, (n_seeds, 1))
        for _ in range(int(round(T / dt))):
            dither = rng.random(n_seeds) < epsilon
            idx = np.where(dither, rng.integers(0, 2, n_seeds), 1)
            s = integrate_held_action(dyn, s, idx, dt, substeps=8, method="rk4")
        mean = s.mean(axis=0)
        dists.append(float(np.linalg.norm(mean - ref)))
        stds.append(float(np.sqrt(np.mean(s.var(axis=0)))))

    monotone = all(stds[i + 1] <= stds[i] * 1.02 for i in range(len(stds) - 1))
    closer = dists[-1] < dists[0]
    return {
        "name": "eps_greedy", "epsilon": epsilon, "dt_grid": list(dt_grid),
        "T": T, "n_seeds": n_seeds, "mean_distance": dists, "seed_std": stds,
        "std_monotone_nonincreasing": monotone, "distance_shrinks": closer,
        "passed": monotone and closer,
    }


# -------------------------------------------------- learning-rate trichotomy


def _scripted_fit_trajectory(beta, dt, T, gamma, alpha):
    """One-parameter value fit theta*s on the scripted state s_t = sin(t),
    zero reward, plain gradient steps with rate alpha*dt**beta on the
    step-rescaled residual. Multiplicative, so the path is a cumprod."""
    n = int(round(T / dt))
    kk = np.arange(n)
    g = gamma**dt
    factor = 1.0 + alpha * dt ** (beta - 1.0) * (
        g * np.sin((kk + 1) * dt) - np.sin(kk * dt)
    ) * np.sin(kk * dt)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.concatenate([[1.0], np.cumprod(factor)])


def lr_trichotomy(T=5.0, gamma=0.8, alpha=1.0,
                  dt_grid_track=(0.02, 0.01, 0.005, 0.0025, 0.00125),
                  dt_grid_freeze=(1e-2, 1e-3, 1e-4),
                  dt_grid_blowup=(1e-3, 1e-4, 1e-5)) -> dict:
    """Behavior of the scripted fit as dt -> 0 for three rate exponents.

    beta=1: refining the step changes the endpoint by O(dt) (successive
    halvings shrink the endpoint difference ~2x). beta=2: the parameter
    freezes at its initial value. beta=0.5: the running max blows up.
    """
    # beta = 1: first-order endpoint consistency under halving
    finals = {dt: _scripted_fit_trajectory(1.0, dt, T, gamma, alpha)[-1]
              for dt in dt_grid_track}
    diffs = [abs(finals[dt] - finals[dt / 2.0])
             for dt in dt_grid_track[:-1]]
    ratios = [diffs[i] / diffs[i + 1] for i in range(len(diffs) - 1)]
    track_ok = all(1.3 <= r <= 3.0 for r in ratios)

    # beta = 2: max deviation from the start shrinks to nothing
    devs = [float(np.max(np.abs(_scripted_fit_trajectory(2.0, dt, T, gamma, alpha) - 1.0)))
            for dt in dt_grid_freeze]
    freeze_ok = devs[-1] < 1e-2 and all(devs[i + 1] < devs[i] for i in range(len(devs) - 1))

    # beta = 0.5: running max grows without bound (overflow counts as growth)
    maxima = []
    overflow = False
    for dt in dt_grid_blowup:
        th = _scripted_fit_trajectory(0.5, dt, T, gamma, alpha)
        m = float(np.nanmax(np.abs(th)))
        if not math.isfinite(m):
            overflow = True
            m = float(np.nanmax(np.abs(th[np.isfinite(th)])))
        maxima.append(m)
    blowup_ok = (maxima[-1] > 1e3 and maxima[-1] / maxima[0] > 10.0
                 and all(maxima[i + 1] > maxima[i] for i in range(len(maxima) - 1)))

    return {
        "name": "lr_trichotomy", "T": T, "gamma": gamma, "alpha": alpha,
        "track": {"dt_grid": list(dt_grid_track),
                  "finals": [finals[dt] for dt in dt_grid_track],
                  "halving_diffs": diffs, "halving_ratios": ratios,
                  "passed": track_ok},
        "freeze": {"dt_grid": list(dt_grid_freeze), "max_deviation": devs,
                   "passed": freeze_ok},
        "blowup": {"dt_grid": list(dt_grid_blowup), "running_max": maxima,
                   "overflow": overflow, "passed": blowup_ok},
        "passed": track_ok and freeze_ok and blowup_ok,
    }


CHECKS = {
    "trajectory": trajectory_convergence,
    "value": value_convergence,
    "q_collapse": q_collapse,
    "advantage_limit": advantage_limit,
    "policy_improvement": policy_improvement,
    "eps_greedy": eps_greedy_averaging,
    "lr_trichotomy": lr_trichotomy,
}


def run_check(name: str, **kwargs) -> dict:
    if name not in CHECKS:
        raise ValueError(f"unknown check {name!r}; have {sorted(CHECKS)}")
    return CHECKS[name](**kwargs)
