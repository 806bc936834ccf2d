"""Directional l2 normalization of an update matrix.

``eps`` is added to the sum of squares inside the square root, so an all-zero
column (or row) stays zero instead of producing NaN.
"""
from __future__ import annotations

import enum

import numpy as np

from . import _accel
from ._accel import njit
from .errors import ConfigError
from .tensorcore import as_matrix

DEFAULT_EPS = 1e-8


class NormDirection(str, enum.Enum):
    NONE = "none"
    COL = "col"
    ROW = "row"
    COL_ROW = "col_row"
    ROW_COL = "row_col"

    @classmethod
    def parse(cls, value) -> "NormDirection":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(d.value for d in cls)
            raise ConfigError(f"unknown normalization direction {value!r}; expected one of {names}") from None

    def __str__(self) -> str:
        return self.value


ALL_DIRECTIONS = tuple(NormDirection)


@njit
def _norm_col_numba(x, eps):
    m, n = x.shape
    sumsq = np.zeros(n)
    for i in range(m):
        for j in range(n):
            sumsq[j] += x[i, j] * x[i, j]
    out = np.empty_like(x)
    for j in range(n):
        sumsq[j] = np.sqrt(sumsq[j] + eps)
    for i in range(m):
        for j in range(n):
            out[i, j] = x[i, j] / sumsq[j]
    return out


def _norm_col_numpy(x, eps):
    # row-by-row accumulation fixes the summation order independent of memory
    # layout; this keeps the result bit-identical to the numba kernel
    sumsq = np.zeros(x.shape[1])
    for row in x:
        sumsq += row * row
    return (x / np.sqrt(sumsq + eps)).astype(x.dtype, copy=False)


def norm_col(x, eps: float = DEFAULT_EPS, use_numba: bool | None = None) -> np.ndarray:
    """Divide each column by sqrt(sum of its squares + eps)."""
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    x = as_matrix(x)
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    if use_numba:
        return _norm_col_numba(x, float(eps))
    return _norm_col_numpy(x, float(eps))


def norm_row(x, eps: float = DEFAULT_EPS, use_numba: bool | None = None) -> np.ndarray:
    """Divide each row by sqrt(sum of its squares + eps).

    Defined through ``norm_col`` on the transpose, so the two are exact mirrors.
    """
    xt = np.ascontiguousarray(as_matrix(x).T)
    return np.ascontiguousarray(norm_col(xt, eps, use_numba).T)


def apply_norm(x, direction, eps: float = DEFAULT_EPS, use_numba: bool | None = None) -> np.ndarray:
    """Normalize along ``direction``; composed names apply the first part first."""
    d = NormDirection.parse(direction)
    if d is NormDirection.NONE:
        return x
    if d is NormDirection.COL:
        return norm_col(x, eps, use_numba)
    if d is NormDirection.ROW:
        return norm_row(x, eps, use_numba)
    if d is NormDirection.COL_ROW:
        return norm_row(norm_col(x, eps, use_numba), eps, use_numba)
    return norm_col(norm_row(x, eps, use_numba), eps, use_numba)
