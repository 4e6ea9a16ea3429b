"""Dense float64 kernels shared by every other module.

Matrices and vectors are plain ``numpy.ndarray`` objects of dtype float64
(rank 2 and rank 1).  The helpers here add explicit shape checks so that a
mismatch fails loudly instead of broadcasting.

Randomness comes from :func:`make_rng`, which always builds a PCG64 bit
generator (numpy's documented, platform independent 64-bit generator).  Equal
seeds give identical streams on every platform numpy supports.
"""

from __future__ import annotations

import math

import numpy as np

Matrix = np.ndarray
Vector = np.ndarray
Rng = np.random.Generator

DTYPE = np.float64


def make_rng(seed: int | np.random.SeedSequence) -> Rng:
    """Return a PCG64-backed generator for ``seed``."""
    if not isinstance(seed, np.random.SeedSequence):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(seed))


def child_rng(seed: int, *key: int) -> Rng:
    """Independent stream derived from ``(seed, *key)``.

    Used to give each work unit (e.g. a generated condition) its own stream
    so results do not depend on evaluation order.
    """
    return make_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> Matrix:
    m = np.array(data, dtype=DTYPE)
    if m.ndim != 2:
        raise ValueError(f"expected a rank-2 matrix, got shape {m.shape}")
    if (rows is not None and m.shape[0] != rows) or (cols is not None and m.shape[1] != cols):
        raise ValueError(f"expected matrix of shape ({rows}, {cols}), got {m.shape}")
    return m


def as_vector(data, length: int | None = None) -> Vector:
    v = np.array(data, dtype=DTYPE)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"expected a rank-1 vector, got shape {v.shape}")
    if length is not None and v.shape[0] != length:
        raise ValueError(f"expected vector of length {length}, got {v.shape[0]}")
    return v


def matvec(m: Matrix, v: Vector) -> Vector:
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: matrix {m.shape} vs vector {v.shape}")
    return m @ v


def sigmoid(x):
    # tanh form never overflows, unlike 1 / (1 + exp(-x)) for large negative x
    return 0.5 * np.tanh(0.5 * np.asarray(x, dtype=DTYPE)) + 0.5


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def relu(x):
    return np.maximum(np.asarray(x, dtype=DTYPE), 0.0)


def softmax(logits, axis: int = -1):
    """Numerically stable softmax along ``axis`` (max-subtracted)."""
    z = np.asarray(logits, dtype=DTYPE)
    if z.size == 0 or z.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def check_finite(name: str, a) -> None:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"{name} contains non-finite values")


def global_norm(arrays) -> float:
    return math.sqrt(sum(float(np.vdot(a, a)) for a in arrays))
