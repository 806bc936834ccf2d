"""Accuracy/speed report for the polar-factor approximations."""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..polar import SCHEDULE_NAMES, PolarMethod, exact_polar, newton_schulz, svd_small
from ..tensorcore import Rng, conditioned_matrix
from .train import fmt

BENCH_HEADER = "shape,method,iters,frob_dist,sigma_min,sigma_max,wall_seconds"
DEFAULT_SHAPES = ((64, 64), (64, 256))
DEFAULT_METHODS = ("you", "jordan", "polar_express")


@dataclass(frozen=True)
class BenchRow:
    shape: tuple
    method: str
    iters: int
    frob_dist: float
    sigma_min: float
    sigma_max: float
    wall_seconds: float

    def csv(self) -> str:
        m, n = self.shape
        return ",".join([f"{m}x{n}", self.method, str(self.iters), fmt(self.frob_dist), fmt(self.sigma_min),
                         fmt(self.sigma_max), fmt(self.wall_seconds)])


def parse_shapes(text: str) -> list:
    shapes = []
    for part in text.split(","):
        try:
            m, n = (int(v) for v in part.lower().split("x"))
        except ValueError:
            raise ConfigError(f"bad shape {part!r}; expected MxN") from None
        if m < 1 or n < 1:
            raise ConfigError(f"bad shape {part!r}")
        shapes.append((m, n))
    return shapes


def parse_iters(text: str) -> list:
    """``"1..30"`` (inclusive) or ``"1,5,10"``."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            values = list(range(lo, hi + 1))
        else:
            values = [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad iteration grid {text!r}") from None
    if not values or min(values) < 1:
        raise ConfigError(f"iteration grid {text!r} must be nonempty and positive")
    return values


def polar_bench(shapes=DEFAULT_SHAPES, methods=DEFAULT_METHODS, iteration_grid=range(1, 31), seed: int = 0,
                cond_ratio: float = 0.1) -> list:
    """One well-conditioned test matrix per shape; one row per (shape, method, iters)
    plus an ``exact`` reference row (iters 0) per shape."""
    for method in methods:
        if method not in SCHEDULE_NAMES:
            raise ConfigError(f"unknown Newton-Schulz schedule {method!r}")
    rng = Rng(seed, stream=5)
    rows = []
    for m, n in shapes:
        a = conditioned_matrix(rng, m, n, cond_ratio)
        t0 = time.perf_counter()
        ref = exact_polar(a)
        elapsed = time.perf_counter() - t0
        s = svd_small(ref).s
        rows.append(BenchRow((m, n), "exact", 0, float(np.linalg.norm(ref - ref)), float(s.min()), float(s.max()),
                             elapsed))
        for method in methods:
            for iters in iteration_grid:
                pm = PolarMethod.ns(method, iters)
                t0 = time.perf_counter()
                out = newton_schulz(a, pm)
                elapsed = time.perf_counter() - t0
                s = svd_small(out).s
                rows.append(BenchRow((m, n), method, iters, float(np.linalg.norm(out - ref)), float(s.min()),
                                     float(s.max()), elapsed))
    return rows


def write_bench_csv(rows, path) -> None:
    text = BENCH_HEADER + "\n" + "".join(r.csv() + "\n" for r in rows)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
