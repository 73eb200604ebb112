"""Seeded, hash-derived random streams.

A :class:`RandomStream` is a 64-bit key. Child streams are derived by
hashing the parent key with integer or string labels, so the draws for run
``m`` of sibling group ``g`` depend only on ``(master_seed, labels, m, g)``.
"""

from __future__ import annotations

import zlib

import numpy as np

from wmm import _kernels

_MASK = (1 << 64) - 1


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def _label_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & _MASK
    return zlib.crc32(str(label).encode()) | (1 << 40)


def derive_key(seed: int, *labels) -> int:
    k = _mix((int(seed) + 0x9E3779B97F4A7C15) & _MASK)
    for lab in labels:
        k = _mix((k ^ _mix((_label_int(lab) + 0x9E3779B97F4A7C15) & _MASK)) & _MASK)
    return k


class RandomStream:
    """Deterministic random stream keyed by a master seed and labels.

    Calls that draw directly from a stream (``beta``, ``dirichlet``) advance
    an internal call counter, so two successive calls give different draws
    while a fresh stream with the same seed replays them exactly.
    """

    def __init__(self, seed: int = 0, *labels):
        if int(seed) < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.labels = tuple(labels)
        self.key = derive_key(self.seed, *self.labels)
        self._calls = 0

    def spawn(self, *labels) -> "RandomStream":
        return RandomStream(self.seed, *self.labels, *labels)

    def next_key(self) -> int:
        k = derive_key(self.key, "call", self._calls)
        self._calls += 1
        return k

    def gamma(self, alpha: float, size: int) -> np.ndarray:
        state = _kernels.lane_keys(self.next_key(), np.arange(size), 0)
        out, _ = _kernels.gamma(alpha, state)
        return out

    def uniform(self, size: int) -> np.ndarray:
        state = _kernels.lane_keys(self.next_key(), np.arange(size), 0)
        u, _ = _kernels._uniform_np(state)
        return u

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, labels={self.labels!r})"
