"""Value-learning agents for sampled near-continuous control.

Two families:

- dau (discrete or continuous actions): learns a state value V and a
  pre-advantage score function, with the realized advantage centered so that
  the greedy action's advantage is exactly zero. The temporal-difference
  residual is divided by the algorithmic step, learning rates carry an extra
  factor of the step, and there are no target networks. Value estimates stay
  well conditioned as dt -> 0.
- dqn / ddpg: the standard residual (not divided by the step) with slowly
  moving target networks, included as baselines. They read the sampling step
  only through the per-step discount and the externally resolved learning
  rates and reward scale.

"scaled" mode resolves every step-dependent constant at the true dt;
"unscaled" mode pins them all at a reference dt0 (the per-step discount alone
always uses the true dt). Centered advantages are computed by differencing
pre-bias head scores and head biases separately: a uniform shift of the score
head then cancels exactly, not just to rounding, which the identifiability
tests rely on.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, replace

import numpy as np

from .nn import Mlp, RmsProp
from .ode_core import BoxActions, DiscreteActions

HIDDEN_DEFAULT = (256, 256)


@dataclass(frozen=True)
class HyperConfig:
    """Step-independent training constants, before resolution at a given dt."""

    mode: str = "scaled"  # "scaled" | "unscaled"
    lr_value: float = 0.1
    lr_adv: float = 0.1
    lr_pi: float = 0.03
    tau: float = 0.9  # target mixing, baselines only
    dt0: float = 0.01  # reference step for unscaled mode
    beta: float = 1.0  # lr ~ dt**beta in scaled mode; 1 is the invariant choice


@dataclass(frozen=True)
class ResolvedHypers:
    """Constants actually used by an agent at a specific sampling step."""

    lr_value: float
    lr_adv: float
    lr_pi: float
    reward_scale: float
    rmsprop_decay: float
    tau: float
    alg_dt: float


def resolve_hypers(cfg: HyperConfig, dt: float) -> ResolvedHypers:
    """Turn step-independent constants into per-step ones.

    scaled: learning rates base * dt**beta, rewards scaled by dt, RMSProp
    decay 1 - dt, algorithmic step dt.
    unscaled: every occurrence of dt above is replaced by the reference dt0,
    regardless of the actual sampling step.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if cfg.beta < 0.0:
        raise ValueError(f"lr exponent beta must be >= 0, got {cfg.beta}")
    if cfg.mode == "scaled":
        f = dt**cfg.beta
        return ResolvedHypers(
            lr_value=cfg.lr_value * f,
            lr_adv=cfg.lr_adv * f,
            lr_pi=cfg.lr_pi * f,
            reward_scale=dt,
            rmsprop_decay=1.0 - dt,
            tau=cfg.tau,
            alg_dt=dt,
        )
    if cfg.mode == "unscaled":
        return ResolvedHypers(
            lr_value=cfg.lr_value * cfg.dt0,
            lr_adv=cfg.lr_adv * cfg.dt0,
            lr_pi=cfg.lr_pi * cfg.dt0,
            reward_scale=cfg.dt0,
            rmsprop_decay=1.0 - cfg.dt0,
            tau=cfg.tau,
            alg_dt=cfg.dt0,
        )
    raise ValueError(f"unknown mode {cfg.mode!r}")


def _centered_scores(z: np.ndarray):
    """Center per-action scores at their argmax.

    z: (N, n_actions) pre-bias head outputs. Returns (adv, m) with
    adv[i, m[i]] == 0.0 exactly and adv <= 0 elementwise (float subtraction
    is monotone). Scores are read before the output bias on purpose: the
    bias is the gauge direction of the centering (see the gradient
    projection in update()), which makes a constant shift of the score head
    cancel identically rather than to rounding.
    """
    m = np.argmax(z, axis=1)
    adv = z - z[np.arange(z.shape[0]), m][:, None]
    return adv, m


def soft_update(target: np.ndarray, source: np.ndarray, tau: float):
    """target <- tau * target + (1 - tau) * source, in place."""
    if tau == 0.0:
        target[:] = source
        return
    target *= tau
    target += (1.0 - tau) * source


class DauDiscreteAgent:
    """V plus centered per-action advantage scores, residual in rate units."""

    kind = "dau"

    def __init__(self, state_dim, n_actions, hypers: ResolvedHypers, gamma_dt,
                 rng=None, hidden=HIDDEN_DEFAULT):
        self.state_dim = int(state_dim)
        self.n_actions = int(n_actions)
        self.hypers = hypers
        self.gamma_dt = float(gamma_dt)
        rng = rng if rng is not None else np.random.default_rng()
        self.v = Mlp([state_dim, *hidden, 1], "linear", seed=rng)
        self.adv = Mlp([state_dim, *hidden, n_actions], "linear", seed=rng)
        # output bias of the score net is inert gauge; see update()
        self._gauge = self.adv.slice_of(f"b{len(self.adv.sizes) - 2}")
        self.opt_v = RmsProp(self.v.n_params, hypers.rmsprop_decay)
        self.opt_adv = RmsProp(self.adv.n_params, hypers.rmsprop_decay)

    # -- acting ---------------------------------------------------------

    def _scores(self, s) -> np.ndarray:
        _, cache = self.adv.forward(s, want_cache=True)
        return cache["head_pre_bias"]

    def action_scores(self, s) -> np.ndarray:
        """Raw per-action scores, the input to exploration perturbation."""
        return self._scores(s)

    def act_batch(self, s) -> np.ndarray:
        return np.argmax(self._scores(s), axis=1)

    def act(self, s) -> int:
        return int(np.argmax(self._scores(s)))

    def realized_advantage(self, s) -> np.ndarray:
        """Centered advantages: exactly zero at the greedy action."""
        s = np.asarray(s, dtype=np.float64)
        squeeze = s.ndim == 1
        adv, _ = _centered_scores(self._scores(s[None, :] if squeeze else s))
        return adv[0] if squeeze else adv

    def greedy_value_action(self, s):
        v = self.v(s)[:, 0]
        a = self.act_batch(s)
        return v, a

    # -- learning -------------------------------------------------------

    def update(self, batch) -> dict:
        s, a, r, done, s2 = batch
        a = np.asarray(a, dtype=np.int64)
        n = s.shape[0]
        dt = self.hypers.alg_dt

        v_s, cache_v = self.v.forward(s, want_cache=True)
        v_s2 = self.v(s2)[:, 0]
        _, cache_a = self.adv.forward(s, want_cache=True)
        adv, m = _centered_scores(cache_a["head_pre_bias"])
        a_taken = adv[np.arange(n), a]

        q = v_s[:, 0] + dt * a_taken
        q_target = r + (1.0 - done) * self.gamma_dt * v_s2
        g = (q - q_target) / dt
        gn = g / n

        grad_v, _ = self.v.backward(cache_v, gn[:, None])
        cot = np.zeros((n, self.n_actions))
        rows = np.arange(n)
        cot[rows, a] += gn
        cot[rows, m] -= gn
        grad_a, _ = self.adv.backward(cache_a, cot)
        # nothing reads the output bias, so its true gradient is zero;
        # projecting it out keeps the gauge direction frozen
        grad_a[self._gauge] = 0.0

        self.last_grads = {"v": grad_v, "adv": grad_a}
        self.opt_v.step(self.v.params, grad_v, self.hypers.lr_value)
        self.opt_adv.step(self.adv.params, grad_a, self.hypers.lr_adv)
        return {
            "residual_mean": float(np.mean(g)),
            "grad_norm_v": float(np.linalg.norm(grad_v)),
            "grad_norm_a": float(np.linalg.norm(grad_a)),
        }

    # -- plumbing -------------------------------------------------------

    def nets(self):
        return {"v": self.v, "adv": self.adv}

    def opts(self):
        return {"v": self.opt_v, "adv": self.opt_adv}

    def _spec(self):
        return {"n_actions": self.n_actions}


class DauContinuousAgent:
    """V, a scalar pre-advantage over (s, a), and a bounded deterministic policy."""

    kind = "dau"

    def __init__(self, state_dim, low, high, hypers: ResolvedHypers, gamma_dt,
                 rng=None, hidden=HIDDEN_DEFAULT):
        self.state_dim = int(state_dim)
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.action_dim = self.low.size
        self.hypers = hypers
        self.gamma_dt = float(gamma_dt)
        self._center = (self.high + self.low) / 2.0
        self._half = (self.high - self.low) / 2.0
        rng = rng if rng is not None else np.random.default_rng()
        self.v = Mlp([state_dim, *hidden, 1], "linear", seed=rng)
        self.adv = Mlp([state_dim + self.action_dim, *hidden, 1], "linear", seed=rng)
        # as in the discrete agent the score head bias is inert gauge
        self._gauge = self.adv.slice_of(f"b{len(self.adv.sizes) - 2}")
        self.pi = Mlp([state_dim, *hidden, self.action_dim], "tanh", seed=rng)
        self.opt_v = RmsProp(self.v.n_params, hypers.rmsprop_decay)
        self.opt_adv = RmsProp(self.adv.n_params, hypers.rmsprop_decay)
        self.opt_pi = RmsProp(self.pi.n_params, hypers.rmsprop_decay)

    # -- acting ---------------------------------------------------------

    def _scale(self, tanh_out):
        return self._center + self._half * tanh_out

    def act_batch(self, s) -> np.ndarray:
        return self._scale(self.pi(s))

    def act(self, s) -> np.ndarray:
        return self._scale(self.pi(s))

    def realized_advantage(self, s, a) -> np.ndarray:
        """Pre-advantage at (s, a) minus at (s, pi(s)); head bias cancels
        structurally, so the policy's own action scores exactly zero."""
        s = np.asarray(s, dtype=np.float64)
        squeeze = s.ndim == 1
        if squeeze:
            s = s[None, :]
            a = np.asarray(a, dtype=np.float64)[None, :]
        a_pi = self.act_batch(s)
        z1 = self.adv.forward(np.concatenate([s, a], axis=1), want_cache=True)[1][
            "head_pre_bias"
        ][:, 0]
        z2 = self.adv.forward(np.concatenate([s, a_pi], axis=1), want_cache=True)[1][
            "head_pre_bias"
        ][:, 0]
        out = z1 - z2
        return float(out[0]) if squeeze else out

    def greedy_value_action(self, s):
        return self.v(s)[:, 0], self.act_batch(s)

    # -- learning -------------------------------------------------------

    def update(self, batch) -> dict:
        s, a, r, done, s2 = batch
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        n = s.shape[0]
        dt = self.hypers.alg_dt

        v_s, cache_v = self.v.forward(s, want_cache=True)
        v_s2 = self.v(s2)[:, 0]
        pi_out, cache_pi = self.pi.forward(s, want_cache=True)
        a_pi = self._scale(pi_out)

        # one stacked pass over [(s, a); (s, pi(s))] serves the critic
        # difference, its backward, and the policy's action gradient
        x = np.concatenate(
            [np.concatenate([s, a], axis=1), np.concatenate([s, a_pi], axis=1)], axis=0
        )
        z, cache_adv = self.adv.forward(x, want_cache=True)
        zp = cache_adv["head_pre_bias"][:, 0]
        adv_taken = zp[:n] - zp[n:]

        q = v_s[:, 0] + dt * adv_taken
        q_target = r + (1.0 - done) * self.gamma_dt * v_s2
        g = (q - q_target) / dt
        gn = g / n

        grad_v, _ = self.v.backward(cache_v, gn[:, None])
        cot = np.concatenate([gn, -gn])[:, None]
        grad_adv, _ = self.adv.backward(cache_adv, cot)
        grad_adv[self._gauge] = 0.0  # score difference never sees the bias

        # ascend Abar(s, pi(s)): objective -mean Abar, gradient through the
        # action input of the frozen score net, then through the policy
        cot_pi = np.zeros((2 * n, 1))
        cot_pi[n:, 0] = -1.0 / n
        dx = self.adv.input_gradient(cache_adv, cot_pi)
        da = dx[n:, self.state_dim :]
        grad_pi, _ = self.pi.backward(cache_pi, da * self._half)

        self.last_grads = {"v": grad_v, "adv": grad_adv, "pi": grad_pi}
        self.opt_v.step(self.v.params, grad_v, self.hypers.lr_value)
        self.opt_adv.step(self.adv.params, grad_adv, self.hypers.lr_adv)
        self.opt_pi.step(self.pi.params, grad_pi, self.hypers.lr_pi)
        return {
            "residual_mean": float(np.mean(g)),
            "grad_norm_v": float(np.linalg.norm(grad_v)),
            "grad_norm_a": float(np.linalg.norm(grad_adv)),
            "grad_norm_pi": float(np.linalg.norm(grad_pi)),
        }

    def nets(self):
        return {"v": self.v, "adv": self.adv, "pi": self.pi}

    def opts(self):
        return {"v": self.opt_v, "adv": self.opt_adv, "pi": self.opt_pi}

    def _spec(self):
        return {"low": self.low.tolist(), "high": self.high.tolist()}


class DqnAgent:
    """Per-action Q with a slow target copy; the standard discrete baseline."""

    kind = "dqn"

    def __init__(self, state_dim, n_actions, hypers: ResolvedHypers, gamma_dt,
                 rng=None, hidden=HIDDEN_DEFAULT):
        self.state_dim = int(state_dim)
        self.n_actions = int(n_actions)
        self.hypers = hypers
        self.gamma_dt = float(gamma_dt)
        rng = rng if rng is not None else np.random.default_rng()
        self.q = Mlp([state_dim, *hidden, n_actions], "linear", seed=rng)
        self.q_target = self.q.copy()
        self.opt_q = RmsProp(self.q.n_params, hypers.rmsprop_decay)

    def action_scores(self, s) -> np.ndarray:
        return self.q(s)

    def act_batch(self, s) -> np.ndarray:
        return np.argmax(self.q(s), axis=1)

    def act(self, s) -> int:
        return int(np.argmax(self.q(s)))

    def greedy_value_action(self, s):
        qs = self.q(s)
        return np.max(qs, axis=1), np.argmax(qs, axis=1)

    def update(self, batch) -> dict:
        s, a, r, done, s2 = batch
        a = np.asarray(a, dtype=np.int64)
        n = s.shape[0]
        q_all, cache = self.q.forward(s, want_cache=True)
        q_taken = q_all[np.arange(n), a]
        q_next = np.max(self.q_target(s2), axis=1)
        target = r + (1.0 - done) * self.gamma_dt * q_next
        g = q_taken - target
        cot = np.zeros((n, self.n_actions))
        cot[np.arange(n), a] = g / n
        grad_q, _ = self.q.backward(cache, cot)
        self.last_grads = {"q": grad_q}
        self.opt_q.step(self.q.params, grad_q, self.hypers.lr_value)
        soft_update(self.q_target.params, self.q.params, self.hypers.tau)
        return {
            "residual_mean": float(np.mean(g)),
            "grad_norm_v": float(np.linalg.norm(grad_q)),
        }

    def nets(self):
        return {"q": self.q, "q_target": self.q_target}

    def opts(self):
        return {"q": self.opt_q}

    def _spec(self):
        return {"n_actions": self.n_actions}


class DdpgAgent:
    """Deterministic policy gradient over a critic, with target copies."""

    kind = "ddpg"

    def __init__(self, state_dim, low, high, hypers: ResolvedHypers, gamma_dt,
                 rng=None, hidden=HIDDEN_DEFAULT):
        self.state_dim = int(state_dim)
        self.low = np.asarray(low, dtype=np.float64)
        self.high = np.asarray(high, dtype=np.float64)
        self.action_dim = self.low.size
        self.hypers = hypers
        self.gamma_dt = float(gamma_dt)
        self._center = (self.high + self.low) / 2.0
        self._half = (self.high - self.low) / 2.0
        rng = rng if rng is not None else np.random.default_rng()
        self.q = Mlp([state_dim + self.action_dim, *hidden, 1], "linear", seed=rng)
        self.pi = Mlp([state_dim, *hidden, self.action_dim], "tanh", seed=rng)
        self.q_target = self.q.copy()
        self.pi_target = self.pi.copy()
        self.opt_q = RmsProp(self.q.n_params, hypers.rmsprop_decay)
        self.opt_pi = RmsProp(self.pi.n_params, hypers.rmsprop_decay)

    def _scale(self, tanh_out):
        return self._center + self._half * tanh_out

    def act_batch(self, s) -> np.ndarray:
        return self._scale(self.pi(s))

    def act(self, s) -> np.ndarray:
        return self._scale(self.pi(s))

    def greedy_value_action(self, s):
        a = self.act_batch(s)
        v = self.q(np.concatenate([s, a], axis=1))[:, 0]
        return v, a

    def update(self, batch) -> dict:
        s, a, r, done, s2 = batch
        a = np.asarray(a, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        n = s.shape[0]
        q_sa, cache_q = self.q.forward(np.concatenate([s, a], axis=1), want_cache=True)
        a2 = self._scale(self.pi_target(s2))
        q_next = self.q_target(np.concatenate([s2, a2], axis=1))[:, 0]
        target = r + (1.0 - done) * self.gamma_dt * q_next
        g = q_sa[:, 0] - target
        grad_q, _ = self.q.backward(cache_q, (g / n)[:, None])

        pi_out, cache_pi = self.pi.forward(s, want_cache=True)
        a_pi = self._scale(pi_out)
        _, cache_qpi = self.q.forward(np.concatenate([s, a_pi], axis=1), want_cache=True)
        dx = self.q.input_gradient(cache_qpi, np.full((n, 1), -1.0 / n))
        da = dx[:, self.state_dim :]
        grad_pi, _ = self.pi.backward(cache_pi, da * self._half)

        self.last_grads = {"q": grad_q, "pi": grad_pi}
        self.opt_q.step(self.q.params, grad_q, self.hypers.lr_value)
        self.opt_pi.step(self.pi.params, grad_pi, self.hypers.lr_pi)
        soft_update(self.q_target.params, self.q.params, self.hypers.tau)
        soft_update(self.pi_target.params, self.pi.params, self.hypers.tau)
        return {
            "residual_mean": float(np.mean(g)),
            "grad_norm_v": float(np.linalg.norm(grad_q)),
            "grad_norm_pi": float(np.linalg.norm(grad_pi)),
        }

    def nets(self):
        return {
            "q": self.q,
            "pi": self.pi,
            "q_target": self.q_target,
            "pi_target": self.pi_target,
        }

    def opts(self):
        return {"q": self.opt_q, "pi": self.opt_pi}

    def _spec(self):
        return {"low": self.low.tolist(), "high": self.high.tolist()}


def make_agent(kind: str, state_dim: int, actions, hypers: ResolvedHypers,
               gamma_dt: float, rng=None, hidden=HIDDEN_DEFAULT):
    """Build an agent for the given action space; dau adapts to either kind."""
    discrete = isinstance(actions, DiscreteActions)
    if kind == "dau":
        if discrete:
            return DauDiscreteAgent(state_dim, actions.n, hypers, gamma_dt, rng, hidden)
        return DauContinuousAgent(
            state_dim, actions.low, actions.high, hypers, gamma_dt, rng, hidden
        )
    if kind == "dqn":
        if not discrete:
            raise ValueError("dqn needs a discrete action set")
        return DqnAgent(state_dim, actions.n, hypers, gamma_dt, rng, hidden)
    if kind == "ddpg":
        if discrete:
            raise ValueError("ddpg needs box actions")
        return DdpgAgent(
            state_dim, actions.low, actions.high, hypers, gamma_dt, rng, hidden
        )
    raise ValueError(f"unknown agent kind {kind!r}")


# ------------------------------------------------------------- checkpoints

_AGT_MAGIC = b"NCAGT\x00"
_AGT_VERSION = 1


def save_agent(agent, path: str, extra: dict | None = None,
               rng_states: dict | None = None):
    """Versioned container: JSON header plus flat little-endian doubles.

    Stores every network parameter vector and optimizer accumulator, in the
    order declared by the header, plus caller-supplied RNG states.
    """
    arrays = []
    for name, net in agent.nets().items():
        arrays.append((f"net.{name}", net.params))
    for name, opt in agent.opts().items():
        arrays.append((f"opt.{name}", opt.v))
    discrete = hasattr(agent, "n_actions")
    header = {
        "kind": agent.kind,
        "class": type(agent).__name__,
        "state_dim": agent.state_dim,
        "action_spec": agent._spec(),
        "discrete": discrete,
        "hidden": list(agent.nets()["v" if "v" in agent.nets() else "q"].sizes[1:-1]),
        "gamma_dt": agent.gamma_dt,
        "hypers": asdict(agent.hypers),
        "arrays": [{"name": n, "len": int(a.size)} for n, a in arrays],
        "rng_states": rng_states,
        "extra": extra or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_AGT_MAGIC)
        f.write(struct.pack("<HI", _AGT_VERSION, len(blob)))
        f.write(blob)
        for _, arr in arrays:
            f.write(arr.astype("<f8").tobytes())


def load_agent(path: str):
    """Rebuild an agent from a container; returns (agent, header)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(_AGT_MAGIC)] != _AGT_MAGIC:
        raise ValueError("not an agent checkpoint (bad magic)")
    off = len(_AGT_MAGIC)
    version, hlen = struct.unpack_from("<HI", blob, off)
    off += 6
    if version != _AGT_VERSION:
        raise ValueError(f"unsupported agent checkpoint version {version}")
    header = json.loads(blob[off : off + hlen].decode("utf-8"))
    off += hlen

    hypers = ResolvedHypers(**header["hypers"])
    spec = header["action_spec"]
    if header["discrete"]:
        actions = DiscreteActions(spec["n_actions"])
    else:
        actions = BoxActions(np.asarray(spec["low"]), np.asarray(spec["high"]))
    agent = make_agent(
        header["kind"],
        header["state_dim"],
        actions,
        hypers,
        header["gamma_dt"],
        rng=np.random.default_rng(0),
        hidden=tuple(header["hidden"]),
    )
    nets, opts = agent.nets(), agent.opts()
    for decl in header["arrays"]:
        n = decl["len"]
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
        off += 8 * n
        group, name = decl["name"].split(".", 1)
        if group == "net":
            nets[name].params[:] = arr
        else:
            opts[name].v[:] = arr
    return agent, header
