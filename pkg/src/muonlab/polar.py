"""Polar factor Ortho(M) = U V^T: an exact Jacobi-SVD oracle and Newton-Schulz iterations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _accel
from ._accel import njit
from .errors import ConfigError, DegenerateInputError, NumericalError, ShapeError
from .tensorcore import as_matrix, frobenius_norm

MAX_SWEEPS = 80
MAX_SVD_DIM = 1024
# multiplicative safety margin on the Frobenius pre-scaling (keeps ||X||_2 < 1)
PRESCALE_MARGIN = 1e-7

# Tuned quintic from the reference Muon configuration. Its scalar map does not
# fix sigma = 1 (a + b + c = 0.701); it drives singular values into roughly
# [0.68, 1.13] and oscillates there.
JORDAN_TRIPLE = (3.4445, -4.7750, 2.0315)
# Classical quintic Newton-Schulz: f(1) = 1, f'(1) = f''(1) = 0.
QUINTIC_TRIPLE = (15.0 / 8.0, -10.0 / 8.0, 3.0 / 8.0)
CUBIC_TRIPLE = (1.5, -0.5, 0.0)

_POLAR_EXPRESS_RAW = (
    (8.28721201814563, -23.595886519098837, 17.300387312530933),
    (4.107059111542203, -2.9478499167379106, 0.5448431082926601),
    (3.9486908534822946, -2.908902115962949, 0.5518191394370137),
    (3.3184196573706015, -2.488488024314874, 0.51004894012372),
    (2.300652019954817, -1.6689039845747493, 0.4188073119525673),
    (1.891301407787398, -1.2679958271945868, 0.37680408948524835),
    (1.8750014808534479, -1.2500016453999487, 0.3750001645474248),
)


def _polar_express():
    # 1% safety factor on every optimized polynomial, exact quintic tail
    scaled = [(a / 1.01, b / 1.01**3, c / 1.01**5) for a, b, c in _POLAR_EXPRESS_RAW]
    return tuple(scaled) + (QUINTIC_TRIPLE,)


_SCHEDULES = {
    "you": (CUBIC_TRIPLE,),
    # five tuned steps, then the classical quintic repeats so long runs converge
    "jordan": (JORDAN_TRIPLE,) * 5 + (QUINTIC_TRIPLE,),
    "polar_express": _polar_express(),
}

SCHEDULE_NAMES = tuple(_SCHEDULES)


def coefficient_schedule(name: str) -> list[tuple[float, float, float]]:
    """(a, b, c) triples for ``X <- aX + b X(X^T X) + c X(X^T X)^2``.

    When more iterations are requested than triples listed, the last one repeats.
    """
    try:
        return list(_SCHEDULES[name])
    except KeyError:
        raise ConfigError(f"unknown Newton-Schulz schedule {name!r}; expected one of {SCHEDULE_NAMES}") from None


def scalar_map(triple, sigma):
    """Action of one iteration on a singular value."""
    a, b, c = triple
    s2 = np.square(sigma)
    return sigma * (a + s2 * (b + c * s2))


@dataclass(frozen=True)
class PolarMethod:
    kind: str = "newton_schulz"
    schedule: str | None = "jordan"
    iterations: int = 5

    def __post_init__(self):
        if self.kind == "exact_oracle":
            if self.schedule is not None:
                object.__setattr__(self, "schedule", None)
        elif self.kind == "newton_schulz":
            if self.schedule not in _SCHEDULES:
                raise ConfigError(f"unknown Newton-Schulz schedule {self.schedule!r}")
            if int(self.iterations) < 1:
                raise ConfigError("Newton-Schulz needs at least one iteration")
        else:
            raise ConfigError(f"unknown polar method kind {self.kind!r}")

    @classmethod
    def exact(cls) -> "PolarMethod":
        return cls(kind="exact_oracle", schedule=None, iterations=1)

    @classmethod
    def ns(cls, schedule: str = "jordan", iterations: int = 5) -> "PolarMethod":
        return cls(kind="newton_schulz", schedule=schedule, iterations=iterations)

    @classmethod
    def parse(cls, name: str, iterations: int = 5) -> "PolarMethod":
        """``"exact"`` or a schedule name."""
        if name in ("exact", "exact_oracle"):
            return cls.exact()
        return cls.ns(name, iterations)

    @property
    def label(self) -> str:
        return "exact" if self.kind == "exact_oracle" else self.schedule


class SvdResult(NamedTuple):
    u: np.ndarray  # m x k
    s: np.ndarray  # k, nonincreasing
    v: np.ndarray  # n x k


# --------------------------------------------------------------------------
# One-sided Jacobi (Hestenes). Both kernels orthogonalize the columns of a
# tall matrix ``a`` (m >= n) in place and accumulate the rotations in ``v``.
# They return (sweeps used, final max relative column coupling).


@njit
def _jacobi_numba(a, v, tol, floor, max_sweeps):
    m, n = a.shape
    off = 0.0
    for sweep in range(max_sweeps):
        off = 0.0
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    ap = a[i, p]
                    aq = a[i, q]
                    alpha += ap * ap
                    beta += aq * aq
                    gamma += ap * aq
                if gamma == 0.0 or alpha <= floor or beta <= floor:
                    continue
                rel = abs(gamma) / math.sqrt(alpha * beta)
                if rel > off:
                    off = rel
                if rel <= tol:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    ap = a[i, p]
                    aq = a[i, q]
                    a[i, p] = c * ap - s * aq
                    a[i, q] = s * ap + c * aq
                for i in range(n):
                    vp = v[i, p]
                    vq = v[i, q]
                    v[i, p] = c * vp - s * vq
                    v[i, q] = s * vp + c * vq
        if not rotated:
            return sweep + 1, off
    return max_sweeps + 1, off


def _round_robin(n):
    """Brent-Luk tournament: n - 1 rounds of n / 2 disjoint pairs (n even)."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        half = n // 2
        top, bottom = players[:half], players[half:][::-1]
        rounds.append((np.array(top), np.array(bottom)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi_numpy(a, v, tol, floor, max_sweeps):
    m, n = a.shape
    if n == 1:
        return 1, 0.0
    if n % 2:
        # a zero column pads the tournament; it never couples to anything
        a_pad = np.zeros((m, n + 1))
        a_pad[:, :n] = a
        v_pad = np.zeros((n + 1, n + 1))
        v_pad[:n, :n] = v
        sweeps, off = _jacobi_numpy(a_pad, v_pad, tol, floor, max_sweeps)
        a[:] = a_pad[:, :n]
        v[:] = v_pad[:n, :n]
        return sweeps, off
    rounds = _round_robin(n)
    off = 0.0
    for sweep in range(max_sweeps):
        off = 0.0
        rotated = False
        for p, q in rounds:
            ap = a[:, p]
            aq = a[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            denom = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                live = (gamma != 0.0) & (alpha > floor) & (beta > floor)
                rel = np.where(live, np.abs(gamma) / denom, 0.0)
            off = max(off, float(rel.max()))
            act = rel > tol
            if not act.any():
                continue
            rotated = True
            g = np.where(act, gamma, 1.0)
            zeta = (beta - alpha) / (2.0 * g)
            with np.errstate(over="ignore"):  # huge zeta: t -> 0, which is the right limit
                t = np.copysign(1.0, zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = np.where(act, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(act, c * t, 0.0)
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if not rotated:
            return sweep + 1, off
    return max_sweeps + 1, off


def _complete_basis(q: np.ndarray, ok: np.ndarray) -> np.ndarray:
    """Replace columns of ``q`` not flagged ``ok`` with an orthonormal completion."""
    if ok.all():
        return q
    m, k = q.shape
    basis = [q[:, j] for j in range(k) if ok[j]]
    fill = []
    for e in np.eye(m):
        if len(basis) + len(fill) == k:
            break
        w = e.copy()
        for b in basis + fill:
            w -= (b @ w) * b
        for b in basis + fill:  # second pass for orthogonality to working precision
            w -= (b @ w) * b
        nw = np.linalg.norm(w)
        if nw > 1e-8:
            fill.append(w / nw)
    out = q.copy()
    it = iter(fill)
    for j in range(k):
        if not ok[j]:
            out[:, j] = next(it)
    return out


def svd_small(a, use_numba: bool | None = None) -> SvdResult:
    """Thin SVD by one-sided Jacobi. Desk-scale oracle, not a production SVD.

    Returns ``u`` (m x k), ``s`` (k, descending) and ``v`` (n x k) with
    ``k = min(m, n)`` so that ``a ~= u @ diag(s) @ v.T``.
    """
    a = as_matrix(a, "svd input")
    m, n = a.shape
    k = min(m, n)
    if k > MAX_SVD_DIM:
        raise ShapeError(f"svd_small is limited to min(m, n) <= {MAX_SVD_DIM}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("svd input contains non-finite values")
    flip = m < n
    work = np.array(a.T if flip else a, dtype=np.float64, order="C")
    rows, cols = work.shape
    scale = float(np.max(np.abs(work)))
    if scale == 0.0:
        u = _complete_basis(np.zeros((rows, cols)), np.zeros(cols, dtype=bool))
        v = np.eye(cols)
        s = np.zeros(cols)
        return SvdResult(v, s, u) if flip else SvdResult(u, s, v)
    work /= scale
    vmat = np.eye(cols)
    tol = max(1e-15, rows * np.finfo(np.float64).eps)
    # columns whose norm is below tol * ||A||_F are numerically zero: their
    # rounding noise never becomes orthogonal, so they are left alone
    floor_norm = 10.0 * tol * float(np.linalg.norm(work))
    floor = floor_norm * floor_norm
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    kernel = _jacobi_numba if use_numba else _jacobi_numpy
    sweeps, off = kernel(work, vmat, tol, floor, MAX_SWEEPS)
    if sweeps > MAX_SWEEPS:
        raise NumericalError(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps", residual=off)

    s = np.sqrt(np.einsum("ij,ij->j", work, work))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    work = work[:, order]
    vmat = vmat[:, order]
    ok = s > floor_norm
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(ok, work / np.where(ok, s, 1.0), 0.0)
    u = _complete_basis(u, ok)
    s = s * scale
    if flip:
        return SvdResult(vmat, s, u)
    return SvdResult(u, s, vmat)


def exact_polar(m, use_numba: bool | None = None) -> np.ndarray:
    """U V^T from the Jacobi SVD. Raises DegenerateInputError on an all-zero input."""
    m = as_matrix(m, "polar input")
    if not np.any(m):
        raise DegenerateInputError("polar factor of the zero matrix is undefined")
    u, _, v = svd_small(m, use_numba=use_numba)
    return u @ v.T


def newton_schulz(m, method: PolarMethod | None = None) -> np.ndarray:
    """Approximate U V^T by ``method.iterations`` polynomial steps.

    Tall inputs are processed transposed so the Gram matrix is the smaller
    square. The input is first divided by ``||M||_F (1 + 1e-7)``, which bounds
    the spectral norm below one and makes the result independent of any
    positive rescaling of ``m``.
    """
    if method is None:
        method = PolarMethod.ns()
    if method.kind != "newton_schulz":
        raise ConfigError("newton_schulz called with a non Newton-Schulz method")
    m = as_matrix(m, "polar input")
    if not np.any(m):
        raise DegenerateInputError("polar factor of the zero matrix is undefined")
    tall = m.shape[0] > m.shape[1]
    x = np.ascontiguousarray(m.T) if tall else m
    norm = frobenius_norm(x)
    if not math.isfinite(norm):
        raise NumericalError("non-finite Newton-Schulz input")
    x = x / (norm * (1.0 + PRESCALE_MARGIN))
    triples = _SCHEDULES[method.schedule]
    for i in range(method.iterations):
        a, b, c = triples[min(i, len(triples) - 1)]
        gram = x @ x.T
        if c != 0.0:
            poly = b * gram + c * (gram @ gram)
        else:
            poly = b * gram
        x = a * x + poly @ x
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite values during Newton-Schulz iteration")
    return np.ascontiguousarray(x.T) if tall else x


def ortho(m, method: PolarMethod) -> np.ndarray:
    """Dispatch to the exact oracle or Newton-Schulz according to ``method``."""
    if method.kind == "exact_oracle":
        return exact_polar(m)
    return newton_schulz(m, method)
