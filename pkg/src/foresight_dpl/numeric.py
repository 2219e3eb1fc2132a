"""Numeric substrate: checked dense ops, activations and a portable RNG.

Vectors and matrices are plain float64 numpy arrays. The random stream is a
splitmix64 counter generator with Box-Muller normals so that a seed produces
the same draws on every platform, independent of numpy's generator choices.
"""
from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def as_vector(values, name: str = "vector") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matvec(m, v) -> np.ndarray:
    m = as_matrix(m, "m")
    v = as_vector(v, "v")
    if m.shape[1] != v.shape[0]:
        raise ValueError(
            f"dimension mismatch: matrix {m.shape[0]}x{m.shape[1]} vs vector of length {v.shape[0]}"
        )
    return m @ v


def sigmoid(x):
    # exp of a non-positive argument only, so neither branch overflows
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    pos = x > 0
    out = np.empty_like(x)
    out[pos] = x[pos] + np.log1p(np.exp(-x[pos]))
    out[~pos] = np.log1p(np.exp(x[~pos]))
    return out


_ACTIVATIONS = {"tanh": np.tanh, "sigmoid": sigmoid, "softplus": softplus}


def elementwise(v, fn: str) -> np.ndarray:
    try:
        f = _ACTIVATIONS[fn]
    except KeyError:
        raise ValueError(f"unknown activation {fn!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return f(as_vector(v))


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def splitmix64(seed: int) -> int:
    """One splitmix64 output for the state ``seed`` (used for seed derivation)."""
    z = np.array([(seed + 0x9E3779B97F4A7C15) & _MASK64], dtype=np.uint64)
    return int(_mix(z)[0])


class Rng:
    """Sequential splitmix64 stream.

    The k-th output is ``mix(seed + (k + 1) * golden)``, so a block of outputs
    can be produced with vectorised uint64 arithmetic. Streams are single-owner;
    use :meth:`derive` to hand independent streams to other consumers.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._counter = 0

    def _u64(self, count: int) -> np.ndarray:
        k = np.arange(self._counter + 1, self._counter + count + 1, dtype=np.uint64)
        self._counter += count
        return _mix(np.uint64(self.seed) + k * _GOLDEN)

    def uniform(self, size=None) -> np.ndarray:
        """Uniform draws on [0, 1) with 53 random bits each."""
        shape = () if size is None else size
        count = int(np.prod(shape, dtype=np.int64))
        u = (self._u64(count) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return u.reshape(shape)

    def normal(self, size=None) -> np.ndarray:
        """Standard normal draws via Box-Muller, consuming two uniforms per pair."""
        shape = () if size is None else size
        count = int(np.prod(shape, dtype=np.int64))
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).reshape(-1)
        return z[:count].reshape(shape)

    def derive(self, label) -> "Rng":
        """Independent child stream keyed by ``label``; does not advance this stream."""
        digest = hashlib.sha256(str(label).encode("utf-8")).digest()
        key = int.from_bytes(digest[:8], "little")
        return Rng(splitmix64(self.seed ^ key))

    def integers(self, high: int) -> int:
        return int(self._u64(1)[0] % np.uint64(high))


def sample_normal(rng: Rng, mean, std) -> np.ndarray:
    mean = as_vector(mean, "mean")
    std = as_vector(std, "std")
    if mean.shape != std.shape:
        raise ValueError(f"mean length {mean.shape[0]} != std length {std.shape[0]}")
    if np.any(std < 0):
        raise ValueError("std entries must be >= 0")
    return mean + std * rng.normal(mean.shape)
