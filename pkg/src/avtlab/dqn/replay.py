"""Uniform experience replay backed by preallocated ring arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool


class WarmupError(RuntimeError):
    """Sampling was requested before the buffer held enough experience."""


class ReplayBuffer:
    """Ring buffer of transitions.

    Observations in [0, 1] are stored quantized to ``uint8`` by default
    (``storage_dtype=np.float32`` keeps them exact). Arrays are allocated on
    the first push, so an unused capacity costs nothing.
    """

    def __init__(self, capacity: int = 50000, initial_size: int = 10000, storage_dtype=np.uint8):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if not 0 <= initial_size <= capacity:
            raise ValueError("initial_size must lie in [0, capacity]")
        self.capacity = capacity
        self.initial_size = initial_size
        self.storage_dtype = np.dtype(storage_dtype)
        self.cursor = 0
        self.size = 0
        self._s = self._s_next = None

    def __len__(self):
        return self.size

    @property
    def ready(self) -> bool:
        return self.size >= max(self.initial_size, 1)

    def _encode(self, obs):
        if self.storage_dtype == np.uint8:
            return np.round(np.clip(obs, 0.0, 1.0) * 255.0).astype(np.uint8)
        return np.asarray(obs, dtype=self.storage_dtype)

    def _decode(self, stored):
        if self.storage_dtype == np.uint8:
            return stored.astype(np.float32) / np.float32(255.0)
        return stored.astype(np.float32)

    def _allocate(self, obs_shape):
        # np.zeros is lazily backed by the OS; untouched slots use no memory
        self._s = np.zeros((self.capacity,) + obs_shape, dtype=self.storage_dtype)
        self._s_next = np.zeros((self.capacity,) + obs_shape, dtype=self.storage_dtype)
        self._a = np.zeros(self.capacity, dtype=np.int64)
        self._r = np.zeros(self.capacity, dtype=np.float64)
        self._done = np.zeros(self.capacity, dtype=bool)

    def push(self, s, a: int, r: float, s_next, done: bool):
        s = np.asarray(s)
        if self._s is None:
            self._allocate(s.shape)
        if not np.isfinite(r):
            raise ValueError("reward must be finite")
        i = self.cursor
        self._s[i] = self._encode(s)
        self._s_next[i] = self._encode(s_next)
        self._a[i] = int(a)
        self._r[i] = float(r)
        self._done[i] = bool(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_transition(self, t: Transition):
        self.push(t.s, t.a, t.r, t.s_next, t.done)

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if not self.ready:
            raise WarmupError(f"replay holds {self.size} transitions, needs {self.initial_size} before sampling")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform draw with replacement; returns ``(s, a, r, s_next, done)`` arrays."""
        idx = self.sample_indices(batch_size, rng)
        return (
            self._decode(self._s[idx]),
            self._a[idx].copy(),
            self._r[idx].copy(),
            self._decode(self._s_next[idx]),
            self._done[idx].copy(),
        )

    def get(self, i: int) -> Transition:
        """Stored transition at slot ``i`` (decoded)."""
        if not 0 <= i < self.size:
            raise IndexError(i)
        return Transition(
            self._decode(self._s[i]), int(self._a[i]), float(self._r[i]), self._decode(self._s_next[i]), bool(self._done[i])
        )
