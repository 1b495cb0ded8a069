"""Dense-matrix helpers and the seeded random stream used across the package.

All arrays are float64 numpy arrays in C (row-major) order.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


def splitmix64(state: int) -> int:
    """One SplitMix64 output for ``state``.

    Used to whiten user seeds and to derive child seeds; the bulk stream
    itself is numpy's PCG64, whose output is specified bit-for-bit.
    """
    z = (state + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Fold integer ``keys`` into ``seed``; distinct key tuples give distinct streams."""
    s = splitmix64(int(seed) & MASK64)
    for k in keys:
        s = splitmix64(s ^ (int(k) & MASK64))
    return s


class RngStream:
    """Deterministic random stream.

    A 64-bit seed is passed through SplitMix64 and used as the PCG64 seed.
    Same seed gives the same sequence on every platform.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & MASK64
        self._gen = np.random.Generator(np.random.PCG64(splitmix64(self.seed)))

    def spawn(self, *keys: int) -> "RngStream":
        return RngStream(derive_seed(self.seed, *keys))

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size=size)

    def bernoulli(self, p: float, size) -> np.ndarray:
        return (self._gen.random(size) < p).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def next_u64(self) -> int:
        return int(self._gen.integers(0, MASK64, dtype=np.uint64, endpoint=True))


def as_matrix(a) -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def row_pnorm(x, p: float = 2.0) -> np.ndarray:
    """Per-row p-norm, returned as a column of shape (rows, 1)."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    x = as_matrix(x)
    if p == 2:
        return np.sqrt(np.einsum("ij,ij->i", x, x))[:, None]
    if p == 1:
        return np.abs(x).sum(axis=1, keepdims=True)
    if np.isinf(p):
        return np.abs(x).max(axis=1, keepdims=True, initial=0.0)
    # scale by the row max so |x|**p cannot overflow
    scale = np.abs(x).max(axis=1, keepdims=True, initial=0.0)
    safe = np.where(scale > 0, scale, 1.0)
    return scale * ((np.abs(x) / safe) ** p).sum(axis=1, keepdims=True) ** (1.0 / p)


def row_softmax(x) -> np.ndarray:
    x = as_matrix(x)
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
