"""Dense matrix helpers and the seeded random source.

Matrices are plain 2-D ``numpy.ndarray`` objects in C (row-major) order with
dtype float64 (float32 is passed through untouched for reduced-precision
training). The helpers here validate shapes; heavy lifting is delegated to numpy.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import njit
from .errors import NumericalError, ShapeError


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a C-contiguous 2-D float array (no copy if already one).

    float32 input stays float32 (the reduced-precision training path); anything
    else becomes float64.
    """
    dtype = np.float32 if getattr(a, "dtype", None) == np.float32 else np.float64
    arr = np.ascontiguousarray(a, dtype=dtype)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    return arr


def check_finite(a: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite values in {what}")
    return a


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def transpose(a) -> np.ndarray:
    """Row-major copy of the transpose."""
    return np.ascontiguousarray(as_matrix(a).T)


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=np.float64)
    # scale first so huge/tiny entries do not overflow the sum of squares
    amax = float(np.max(np.abs(a))) if a.size else 0.0
    if amax == 0.0 or not math.isfinite(amax):
        return amax
    scaled = a / amax
    return amax * math.sqrt(float(np.sum(scaled * scaled)))


@njit
def naive_matmul(a, b):
    """Triple-loop product. Reference kernel only; slow without numba."""
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for p in range(k):
                acc += a[i, p] * b[p, j]
            out[i, j] = acc
    return out


class Rng:
    """Counter-based deterministic generator (Philox keyed by seed and stream).

    Two instances built from the same ``(seed, stream)`` produce bit-identical
    draws on any platform numpy supports.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = int(seed)
        self.stream = int(stream)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.seed >> 32, self.stream])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def spawn(self, stream: int) -> "Rng":
        """Independent generator for another stream under the same seed."""
        return Rng(self.seed, stream)

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)


def gaussian_matrix(rng: Rng, m: int, n: int) -> np.ndarray:
    if m < 1 or n < 1:
        raise ShapeError(f"gaussian_matrix needs m, n >= 1, got {m}x{n}")
    return rng.normal((m, n))


def orthonormal_matrix(rng: Rng, m: int, k: int) -> np.ndarray:
    """m x k matrix with orthonormal columns (QR of a Gaussian, sign-fixed)."""
    q, r = np.linalg.qr(gaussian_matrix(rng, m, k))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def conditioned_matrix(rng: Rng, m: int, n: int, cond_ratio: float = 0.1) -> np.ndarray:
    """Random m x n matrix whose singular values lie in [cond_ratio, 1].

    Used to build test populations with sigma_min / sigma_max >= cond_ratio.
    """
    k = min(m, n)
    u = orthonormal_matrix(rng, m, k)
    v = orthonormal_matrix(rng, n, k)
    s = rng.uniform(cond_ratio, 1.0, size=k)
    s[0] = 1.0
    if k > 1:
        s[-1] = cond_ratio
    return (u * s) @ v.T
