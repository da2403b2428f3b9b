"""Cyclic transition store with uniform sampling."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """FIFO ring of (s, a, r_step, done, s_next) with uniform resampling.

    Arrays are allocated lazily from the first pushed transition so the buffer
    adapts to state shape and to discrete (int) vs continuous (array) actions.
    done marks genuine termination only; time-cap truncations are pushed with
    done=False so the bootstrap term survives.
    """

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.rng = rng
        self.count = 0  # total pushes ever
        self._s = None

    def __len__(self) -> int:
        return min(self.count, self.capacity)

    def _alloc(self, s, a):
        cap = self.capacity
        sdim = np.asarray(s, dtype=np.float64).shape[-1]
        self._s = np.empty((cap, sdim), dtype=np.float64)
        self._s2 = np.empty((cap, sdim), dtype=np.float64)
        self._r = np.empty(cap, dtype=np.float64)
        self._d = np.empty(cap, dtype=np.float64)
        a = np.asarray(a)
        if np.issubdtype(a.dtype, np.integer):
            self._a = np.empty(cap, dtype=np.int64)
        else:
            self._a = np.empty((cap, a.shape[-1]), dtype=np.float64)

    def push(self, s, a, r, done, s_next):
        if self._s is None:
            self._alloc(s, a)
        i = self.count % self.capacity
        self._s[i] = s
        self._a[i] = a
        self._r[i] = r
        self._d[i] = 1.0 if done else 0.0
        self._s2[i] = s_next
        self.count += 1

    def push_batch(self, s, a, r, done, s_next):
        s = np.asarray(s, dtype=np.float64)
        for j in range(s.shape[0]):
            self.push(s[j], a[j], r[j], bool(done[j]), s_next[j])

    def sample(self, n: int):
        """Uniform with replacement: returns (s, a, r, done, s_next)."""
        size = len(self)
        if size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(size, size=n)
        return (
            self._s[idx],
            self._a[idx],
            self._r[idx],
            self._d[idx],
            self._s2[idx],
        )
