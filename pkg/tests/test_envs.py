"""Environment dynamics against hand-derived and closed-form oracles."""

import math

import numpy as np
import pytest

from nctrl.envs import (
    ENV_NAMES,
    make_cartpole,
    make_env,
    make_lqr,
    make_pendulum,
    make_sine,
    lqr_advantage_oracle,
    lqr_policy,
    lqr_value_oracle,
    pendulum_energy,
    wrap_angle,
    CARTPOLE_THETA_LIMIT,
)
from nctrl.ode_core import (
    NearContinuousMdp,
    discretized_return,
    effective_discount,
    integrate_held_action,
    rollout,
)


# ---------------------------------------------------------------- pendulum


def test_wrap_angle_values():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == math.pi  # boundary belongs to +pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi, abs=1e-12)
    assert wrap_angle(2 * math.pi + 0.3) == pytest.approx(0.3, abs=1e-12)


def test_pendulum_drift_hand_values():
    dyn = make_pendulum()
    # at theta = pi/2, zero torque: thetaacc = 3g/(2l) * sin(pi/2) = 15
    ds = dyn.drift(np.array([math.pi / 2, 0.5]), np.array([0.0]))
    assert ds[0] == pytest.approx(0.5)
    assert ds[1] == pytest.approx(15.0, rel=1e-12)
    # torque term: 3/(m l^2) * u = 3u
    ds_u = dyn.drift(np.array([math.pi / 2, 0.5]), np.array([1.0]))
    assert ds_u[1] - ds[1] == pytest.approx(3.0, rel=1e-12)


def test_pendulum_torque_clamp_in_drift():
    dyn = make_pendulum()
    big = dyn.drift(np.array([0.0, 0.0]), np.array([50.0]))
    capped = dyn.drift(np.array([0.0, 0.0]), np.array([2.0]))
    assert np.array_equal(big, capped)


def test_pendulum_reward_hanging_down():
    dyn = make_pendulum()
    # hanging (theta = pi), at rest, no torque: rate = -pi^2
    r = dyn.reward_rate(np.array([math.pi, 0.0]), np.array([0.0]))
    assert r == pytest.approx(-math.pi**2, rel=1e-12)
    # reward uses the wrapped angle
    r_wrapped = dyn.reward_rate(np.array([math.pi + 2 * math.pi, 0.0]), np.array([0.0]))
    assert r_wrapped == pytest.approx(r, rel=1e-12)


def test_pendulum_reward_symmetry():
    dyn = make_pendulum()
    rng = np.random.default_rng(11)
    for _ in range(50):
        th, thd, u = rng.uniform(-3, 3), rng.uniform(-8, 8), rng.uniform(-2, 2)
        r1 = dyn.reward_rate(np.array([th, thd]), np.array([u]))
        r2 = dyn.reward_rate(np.array([-th, -thd]), np.array([-u]))
        assert r1 == pytest.approx(r2, rel=1e-12)


def test_pendulum_speed_clamp_applies_after_step():
    mdp = NearContinuousMdp(make_pendulum(), dt=0.5)
    # falling from horizontal builds speed past 8 within half a second
    s, _, _ = mdp.step(np.array([math.pi / 2, 7.9]), np.array([2.0]))
    assert s[1] == 8.0


def test_pendulum_energy_conservation_rk4():
    # torque-free swing, default substeps: energy drift under 1e-6 per second
    dyn = make_pendulum()
    s = np.array([1.0, 0.0])
    e0 = pendulum_energy(s)
    for _ in range(100):  # T = 1 at dt = 0.01
        s = integrate_held_action(dyn, s, np.array([0.0]), 0.01, 8, "rk4")
    assert abs(pendulum_energy(s) - e0) < 1e-6, "RK4 energy drift too large"


# ---------------------------------------------------------------- cartpole


def test_cartpole_drift_signs_at_origin():
    dyn = make_cartpole()
    ds = dyn.drift(np.zeros(4), 1)  # push right
    # hand evaluation: temp = 10/1.1, thetaacc = -temp / (0.5*(4/3 - 0.1/1.1))
    assert ds[1] == pytest.approx(9.75609756097561, rel=1e-12)
    assert ds[3] == pytest.approx(-14.634146341463413, rel=1e-12)
    ds_l = dyn.drift(np.zeros(4), 0)
    assert ds_l[1] == pytest.approx(-ds[1], rel=1e-12)
    assert ds_l[3] == pytest.approx(-ds[3], rel=1e-12)


def test_cartpole_gravity_tips_the_pole():
    dyn = make_cartpole()
    # tilted, at rest: gravity term dominates, no force applied yet would need
    # an action; both actions leave a positive gravity contribution at 0.1 rad
    ds = dyn.drift(np.array([0.0, 0.0, 0.1, 0.0]), 1)
    ds0 = dyn.drift(np.array([0.0, 0.0, 0.1, 0.0]), 0)
    g_term = 0.5 * (ds[3] + ds0[3])  # force contributions cancel in the mean
    assert g_term > 0.0, "gravity should accelerate the tilt"


def test_cartpole_terminal_band():
    dyn = make_cartpole()
    assert not dyn.is_terminal(np.array([0.0, 0.0, CARTPOLE_THETA_LIMIT - 1e-6, 0.0]))
    assert dyn.is_terminal(np.array([0.0, 0.0, 13 * math.pi / 180, 0.0]))
    assert dyn.is_terminal(np.array([2.5, 0.0, 0.0, 0.0]))


def test_cartpole_survival_return_matches_horizon():
    # surviving for T seconds pays sum gamma^(k dt) dt
    dt, gamma, n = 0.02, 0.8, 250
    gdt = effective_discount(gamma, dt)
    r = np.full(n, dt)
    expect = dt * (1 - gdt**n) / (1 - gdt)
    assert discretized_return(r, gdt) == pytest.approx(expect, rel=1e-12)


# ---------------------------------------------------------------- lqr


def test_lqr_value_oracle_reference_point():
    # k=1, gamma=e^-1: V(s) = -s^2/3, so V(1) = -1/3
    v = lqr_value_oracle(1.0, 1.0, math.exp(-1.0))
    assert v == pytest.approx(-1.0 / 3.0, rel=1e-12)


def test_lqr_advantage_oracle_reference_point():
    # A(1, 0) = -1 + 1/3 = -2/3
    a = lqr_advantage_oracle(1.0, 0.0, 1.0, math.exp(-1.0))
    assert a == pytest.approx(-2.0 / 3.0, rel=1e-12)


def test_lqr_value_even_in_s():
    for s in [0.3, 1.7, 2.5]:
        assert lqr_value_oracle(s, 1.3, 0.8) == lqr_value_oracle(-s, 1.3, 0.8)


def test_lqr_advantage_zero_on_policy():
    # A(s, pi_k(s)) = 0: the policy's own action carries no advantage
    rng = np.random.default_rng(5)
    for _ in range(50):
        s = rng.uniform(-2, 2)
        k = rng.uniform(0.2, 3.0)
        g = rng.uniform(0.3, 0.95)
        a = lqr_advantage_oracle(s, -k * s, k, g)
        assert a == pytest.approx(0.0, abs=1e-12), f"A(s, -ks) = {a} at s={s}, k={k}"


def test_lqr_value_oracle_rejects_divergent_pair():
    with pytest.raises(ValueError):
        lqr_value_oracle(1.0, -0.5, 0.9)  # 2k - ln gamma < 0


def test_lqr_policy_improvement_closed_forms():
    # gamma = e^-1, base policy k=1: A^{pi_1}(s, -k's) = (2/3)(k'-1) s^2
    gamma = math.exp(-1.0)
    for kp in [0.5, 1.0, 1.5, 2.0]:
        for s in [0.5, 1.0, 2.0]:
            a = lqr_advantage_oracle(s, -kp * s, 1.0, gamma)
            assert a == pytest.approx((2.0 / 3.0) * (kp - 1.0) * s**2, rel=1e-12)
    # V^{pi_k'}(s) = -s^2/(2k'+1): improvement from k=1 toward larger k' < 1.5
    v1 = lqr_value_oracle(1.0, 1.0, gamma)
    v14 = lqr_value_oracle(1.0, 1.4, gamma)
    assert v14 > v1, "positive-advantage direction should improve the value"


def test_lqr_monte_carlo_value_converges_first_order():
    # rollout of the sampled MDP vs the continuous-time oracle, O(dt) error
    gamma = math.exp(-1.0)
    dyn = make_lqr()
    policy = lqr_policy(1.0)
    errs = []
    dts = np.array([0.1, 0.03, 0.01, 0.003, 0.001])
    for dt in dts:
        mdp = NearContinuousMdp(dyn, dt=dt, gamma=gamma, substeps=1)
        n = int(28.0 / dt)  # gamma^28 < 1e-12
        traj = rollout(mdp, policy, np.array([1.0]), n)
        v = discretized_return(traj.rewards, mdp.gamma_dt)
        errs.append(abs(v - (-1.0 / 3.0)))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 0.8 < slope < 1.2, f"value error slope {slope:.3f} not ~1"
    assert errs[-1] < (1.0 / 3.0) * 0.01, "V_dt at dt=1e-3 should be within 1%"


# ---------------------------------------------------------------- sine, registry


def test_sine_traces_sin_t():
    dyn = make_sine()
    mdp = NearContinuousMdp(dyn, dt=0.05, substeps=8)
    s = np.array([0.0, 1.0])
    for k in range(1, 41):
        s, r, d = mdp.step(s, 0)
        assert r == 0.0 and not d
        assert s[0] == pytest.approx(math.sin(k * 0.05), abs=1e-10)
        assert s[1] == pytest.approx(math.cos(k * 0.05), abs=1e-10)


def test_registry_names_and_dims():
    dims = {"pendulum": 2, "cartpole": 4, "lqr": 1, "sine": 2}
    for name in ENV_NAMES:
        spec = make_env(name)
        assert spec.name == name
        assert spec.dynamics.state_dim == dims[name]
        assert spec.episode_seconds > 0
        rng = np.random.default_rng(0)
        s0 = spec.init_state(rng)
        assert s0.shape == (dims[name],)
        assert s0.dtype == np.float64
        assert not np.any(spec.dynamics.is_terminal(s0))


def test_registry_rejects_unknown():
    with pytest.raises(KeyError):
        make_env("acrobot")


def test_registry_initial_state_distributions():
    rng = np.random.default_rng(42)
    pend = make_env("pendulum")
    draws = np.stack([pend.init_state(rng) for _ in range(2000)])
    assert np.all(np.abs(draws[:, 0]) <= math.pi)
    assert np.all(np.abs(draws[:, 1]) <= 1.0)
    assert abs(draws[:, 0].mean()) < 0.15  # roughly centered
    cart = make_env("cartpole")
    draws = np.stack([cart.init_state(rng) for _ in range(2000)])
    assert np.all(np.abs(draws) <= 0.05)
