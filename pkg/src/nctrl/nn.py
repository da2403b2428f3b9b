"""Small dense networks with hand-written backward passes.

Architecture per network: Linear -> LayerNorm -> ReLU for every hidden layer,
then a Linear output with an identity or tanh head. Parameters live in one
flat float64 vector; per-layer arrays are views into it, so an optimizer that
updates the flat vector updates the network. The backward pass returns both
the flat parameter gradient and the gradient with respect to the inputs (the
input gradient is what drives deterministic policy improvement).

Weights initialize uniform in +-1/sqrt(fan_in), biases at zero, LayerNorm at
gain 1 / bias 0. Initialization depends only on the sizes and the seed; in
particular it never reads the sampling step dt.
"""

from __future__ import annotations

import struct
from typing import Callable, Optional

import numpy as np

LAYERNORM_EPS = 1e-5
RMSPROP_EPS = 1e-8

_HEAD_CODES = {"linear": 0, "tanh": 1}
_HEAD_NAMES = {v: k for k, v in _HEAD_CODES.items()}
_MLP_MAGIC = b"NCMLP\x00"
_MLP_VERSION = 1


class Mlp:
    """Dense network over a flat parameter vector.

    sizes = [in, hidden..., out]; len(sizes) == 2 degenerates to a single
    linear map (plus head). head is "linear" or "tanh".
    """

    def __init__(self, sizes, head: str = "linear", seed=None, params=None):
        sizes = [int(n) for n in sizes]
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        if head not in _HEAD_CODES:
            raise ValueError(f"unknown head {head!r}")
        self.sizes = sizes
        self.head = head
        self.n_hidden = len(sizes) - 2

        layout = []  # (name, offset, shape)
        off = 0
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            layout.append((f"W{i}", off, (fan_in, fan_out)))
            off += fan_in * fan_out
            layout.append((f"b{i}", off, (fan_out,)))
            off += fan_out
            if i < self.n_hidden:
                layout.append((f"g{i}", off, (fan_out,)))
                off += fan_out
                layout.append((f"beta{i}", off, (fan_out,)))
                off += fan_out
        self.n_params = off
        self._layout = layout

        if params is not None:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (off,):
                raise ValueError(f"expected {off} params, got {params.shape}")
            self.params = params.copy()
        else:
            self.params = np.zeros(off, dtype=np.float64)
        self._bind_views()
        if params is None:
            self._init_params(seed)

    def _bind_views(self):
        self._v = {}
        for name, off, shape in self._layout:
            self._v[name] = self.params[off : off + int(np.prod(shape))].reshape(shape)

    def _init_params(self, seed):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        for i in range(len(self.sizes) - 1):
            fan_in = self.sizes[i]
            bound = 1.0 / np.sqrt(fan_in)
            self._v[f"W{i}"][:] = rng.uniform(-bound, bound, size=self._v[f"W{i}"].shape)
            self._v[f"b{i}"][:] = 0.0
            if i < self.n_hidden:
                self._v[f"g{i}"][:] = 1.0
                self._v[f"beta{i}"][:] = 0.0

    def view(self, name: str) -> np.ndarray:
        """Named parameter view (W0, b0, g0, beta0, W1, ...)."""
        return self._v[name]

    def slice_of(self, name: str) -> slice:
        for n, off, shape in self._layout:
            if n == name:
                return slice(off, off + int(np.prod(shape)))
        raise KeyError(name)

    @property
    def output_bias(self) -> np.ndarray:
        return self._v[f"b{len(self.sizes) - 2}"]

    def forward(self, x, want_cache: bool = False):
        """Returns y, or (y, cache) when want_cache.

        x: (in,) or (B, in). The cache carries every intermediate needed by
        backward(), plus 'head_pre_bias' = h @ W_out (output scores before the
        output bias and head nonlinearity).
        """
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input dim {self.sizes[0]}, got {x.shape[1]}")

        cache = {"x": x} if want_cache else None
        h = x
        for i in range(self.n_hidden):
            z = h @ self._v[f"W{i}"] + self._v[f"b{i}"]
            mu = z.mean(axis=1, keepdims=True)
            zc = z - mu
            var = (zc * zc).mean(axis=1, keepdims=True)
            inv_sd = 1.0 / np.sqrt(var + LAYERNORM_EPS)
            xhat = zc * inv_sd
            ln = xhat * self._v[f"g{i}"] + self._v[f"beta{i}"]
            h_next = np.maximum(ln, 0.0)
            if want_cache:
                cache[f"in{i}"] = h  # input of layer i
                cache[f"xhat{i}"] = xhat
                cache[f"inv_sd{i}"] = inv_sd
                cache[f"ln{i}"] = ln
            h = h_next
        iout = len(self.sizes) - 2
        z_out = h @ self._v[f"W{iout}"]
        y = z_out + self._v[f"b{iout}"]
        if self.head == "tanh":
            y = np.tanh(y)
        if want_cache:
            cache["h_out"] = h
            cache["head_pre_bias"] = z_out
            cache["y"] = y
            cache["squeeze"] = squeeze
        if squeeze:
            return (y[0], cache) if want_cache else y[0]
        return (y, cache) if want_cache else y

    def __call__(self, x):
        return self.forward(x)

    def backward(self, cache, dy):
        """Backprop dy through the cached forward.

        Returns (grad, dx): grad is a flat vector aligned with self.params,
        dx matches the input shape. Gradients sum over the batch; divide dy
        beforehand for means.
        """
        dy = np.asarray(dy, dtype=np.float64)
        if cache["squeeze"]:
            dy = dy[None, :]
        grad = np.zeros(self.n_params, dtype=np.float64)
        gv = {}
        for name, off, shape in self._layout:
            gv[name] = grad[off : off + int(np.prod(shape))].reshape(shape)

        if self.head == "tanh":
            y = cache["y"]  # cached pre-squeeze, always (B, out)
            dy = dy * (1.0 - y * y)
        iout = len(self.sizes) - 2
        h = cache["h_out"]
        gv[f"W{iout}"][:] = h.T @ dy
        gv[f"b{iout}"][:] = dy.sum(axis=0)
        dh = dy @ self._v[f"W{iout}"].T

        for i in range(self.n_hidden - 1, -1, -1):
            dln = dh * (cache[f"ln{i}"] > 0.0)
            xhat = cache[f"xhat{i}"]
            gv[f"g{i}"][:] = (dln * xhat).sum(axis=0)
            gv[f"beta{i}"][:] = dln.sum(axis=0)
            dxhat = dln * self._v[f"g{i}"]
            m1 = dxhat.mean(axis=1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
            dz = (dxhat - m1 - xhat * m2) * cache[f"inv_sd{i}"]
            gv[f"W{i}"][:] = cache[f"in{i}"].T @ dz
            gv[f"b{i}"][:] = dz.sum(axis=0)
            dh = dz @ self._v[f"W{i}"].T

        dx = dh
        if cache["squeeze"]:
            dx = dx[0]
        return grad, dx

    def input_gradient(self, cache, dy):
        """Backprop to the inputs only (parameter gradients discarded)."""
        dy = np.asarray(dy, dtype=np.float64)
        if cache["squeeze"]:
            dy = dy[None, :]
        if self.head == "tanh":
            dy = dy * (1.0 - cache["y"] * cache["y"])
        iout = len(self.sizes) - 2
        dh = dy @ self._v[f"W{iout}"].T
        for i in range(self.n_hidden - 1, -1, -1):
            dln = dh * (cache[f"ln{i}"] > 0.0)
            dxhat = dln * self._v[f"g{i}"]
            xhat = cache[f"xhat{i}"]
            m1 = dxhat.mean(axis=1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
            dz = (dxhat - m1 - xhat * m2) * cache[f"inv_sd{i}"]
            dh = dz @ self._v[f"W{i}"].T
        return dh[0] if cache["squeeze"] else dh

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self.head, params=self.params)


def save_mlp(mlp: Mlp, path: str):
    """Binary dump: magic, version, head, layer sizes, little-endian doubles."""
    with open(path, "wb") as f:
        f.write(_MLP_MAGIC)
        f.write(struct.pack("<HBB", _MLP_VERSION, _HEAD_CODES[mlp.head], 0))
        f.write(struct.pack("<I", len(mlp.sizes)))
        f.write(struct.pack(f"<{len(mlp.sizes)}I", *mlp.sizes))
        f.write(mlp.params.astype("<f8").tobytes())


def load_mlp(path: str) -> Mlp:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(_MLP_MAGIC)] != _MLP_MAGIC:
        raise ValueError("not a network checkpoint (bad magic)")
    off = len(_MLP_MAGIC)
    version, head_code, _ = struct.unpack_from("<HBB", blob, off)
    off += 4
    if version != _MLP_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (n_sizes,) = struct.unpack_from("<I", blob, off)
    off += 4
    sizes = struct.unpack_from(f"<{n_sizes}I", blob, off)
    off += 4 * n_sizes
    params = np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64)
    return Mlp(list(sizes), _HEAD_NAMES[head_code], params=params)


class RmsProp:
    """Squared-gradient normalizer, no momentum, accumulator starts at 0.

    v <- decay * v + (1 - decay) * g^2 ; p <- p - lr * g / (sqrt(v) + eps).
    """

    def __init__(self, n_params: int, decay: float, eps: float = RMSPROP_EPS):
        if not (0.0 <= decay < 1.0):
            raise ValueError(f"decay must be in [0, 1), got {decay}")
        self.v = np.zeros(n_params, dtype=np.float64)
        self.decay = decay
        self.eps = eps

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        """Update params in place; returns the applied delta."""
        self.v *= self.decay
        self.v += (1.0 - self.decay) * grad * grad
        delta = (-lr) * grad / (np.sqrt(self.v) + self.eps)
        params += delta
        return delta


class RunningMoments:
    """Streaming mean/variance of input features (Welford, batched merges)."""

    def __init__(self, dim: int):
        self.count = 0.0
        self.mean = np.zeros(dim, dtype=np.float64)
        self.m2 = np.zeros(dim, dtype=np.float64)

    def update(self, batch: np.ndarray):
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch[None, :]
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_m2 = ((batch - b_mean) ** 2).sum(axis=0)
        delta = b_mean - self.mean
        tot = self.count + n
        self.mean = self.mean + delta * (n / tot)
        self.m2 = self.m2 + b_m2 + delta**2 * (self.count * n / tot)
        self.count = tot

    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return self.m2 / self.count

    def normalize(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean) / np.sqrt(self.variance() + 1e-8)


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central finite differences of a scalar function, one probe per entry."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        keep = x[idx]
        x[idx] = keep + h
        up = f(x)
        x[idx] = keep - h
        down = f(x)
        x[idx] = keep
        out[idx] = (up - down) / (2.0 * h)
        it.iternext()
    return out
