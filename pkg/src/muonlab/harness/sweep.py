"""Learning-rate x normalization-direction sweeps."""
from __future__ import annotations

import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, DataError
from ..norm import NormDirection
from .config import RunConfig
from .train import fmt, train

log = logging.getLogger(__name__)

LONG_HEADER = "lr,direction,seed,final_eval_loss,final_ppl,status"
DEGRADED_FACTOR = 1.5


@dataclass
class SweepSpec:
    base: RunConfig
    lr_grid: list
    direction_grid: list
    seeds: list

    def __post_init__(self):
        if not self.lr_grid or not self.direction_grid or not self.seeds:
            raise ConfigError("lr_grid, direction_grid and seeds must all be nonempty")
        if any(not lr > 0 for lr in self.lr_grid):
            raise ConfigError("every swept learning rate must be positive")
        self.direction_grid = [NormDirection.parse(d).value for d in self.direction_grid]
        for name, grid in (("lr", self.lr_grid), ("direction", self.direction_grid), ("seed", self.seeds)):
            if len(set(grid)) != len(grid):
                raise ConfigError(f"duplicate values in the {name} grid")

    def cells(self):
        for lr in self.lr_grid:
            for direction in self.direction_grid:
                for seed in self.seeds:
                    yield lr, direction, seed

    def run_config(self, lr, direction, seed, output_dir=None) -> RunConfig:
        return self.base.replace(lr=lr, direction=direction, seed=seed, output_dir=output_dir)


@dataclass(frozen=True)
class CellResult:
    lr: float
    direction: str
    seed: int
    final_eval_loss: float
    final_ppl: float
    status: str


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: list = field(default_factory=list)

    def _lookup(self):
        return {(c.lr, c.direction, c.seed): c for c in self.cells}

    def losses(self, lr, direction) -> list:
        table = self._lookup()
        return [table[(lr, direction, s)].final_eval_loss for s in self.spec.seeds]

    def pivot(self, statistic: str = "min") -> dict:
        """``{lr: {direction: value}}`` with min (or median) over seeds per cell."""
        reduce = min if statistic == "min" else _median
        return {
            lr: {d: reduce(self.losses(lr, d)) for d in self.spec.direction_grid} for lr in self.spec.lr_grid
        }

    def best_by_direction(self, statistic: str = "min") -> dict:
        """Best value over learning rates for each direction."""
        table = self.pivot(statistic)
        return {d: min(table[lr][d] for lr in self.spec.lr_grid) for d in self.spec.direction_grid}

    def degraded_fraction(self, direction, lr=None) -> float:
        """Fraction of seeds whose run at ``lr`` (default: the largest) diverged or
        ended above 1.5x that seed's best loss over the lr grid for ``direction``."""
        lr = max(self.spec.lr_grid) if lr is None else lr
        table = self._lookup()
        bad = 0
        for seed in self.spec.seeds:
            best = min(table[(x, direction, seed)].final_eval_loss for x in self.spec.lr_grid)
            cell = table[(lr, direction, seed)]
            if cell.status != "ok" or not math.isfinite(cell.final_eval_loss) or (
                cell.final_eval_loss > DEGRADED_FACTOR * best
            ):
                bad += 1
        return bad / len(self.spec.seeds)

    # -- output ----------------------------------------------------------------
    def long_csv(self) -> str:
        lines = [LONG_HEADER]
        for c in self.cells:
            lines.append(",".join([fmt(c.lr), c.direction, str(c.seed), fmt(c.final_eval_loss), fmt(c.final_ppl),
                                   c.status]))
        return "\n".join(lines) + "\n"

    def pivot_csv(self, statistic: str = "min") -> str:
        table = self.pivot(statistic)
        lines = ["lr," + ",".join(self.spec.direction_grid)]
        for lr in self.spec.lr_grid:
            lines.append(fmt(lr) + "," + ",".join(fmt(table[lr][d]) for d in self.spec.direction_grid))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "best_by_direction_min": self.best_by_direction("min"),
            "best_by_direction_median": self.best_by_direction("median"),
            "degraded_fraction_at_max_lr": {d: self.degraded_fraction(d) for d in self.spec.direction_grid},
            "n_cells": len(self.cells),
            "n_diverged": sum(c.status != "ok" for c in self.cells),
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "sweep_long.csv").write_text(self.long_csv())
            (out / "sweep_pivot.csv").write_text(self.pivot_csv("min"))
            (out / "sweep_pivot_median.csv").write_text(self.pivot_csv("median"))
            (out / "sweep_summary.json").write_text(json.dumps(self.summary(), indent=2, default=str) + "\n")
        except OSError as exc:
            raise DataError(f"cannot write sweep output to {out}: {exc}") from exc


def _median(values):
    return statistics.median(values)


def _run_cell(args):
    cfg, lr, direction, seed = args
    record = train(cfg)
    return CellResult(lr, direction, seed, record.final_eval_loss, record.final_ppl, record.status)


def sweep(spec: SweepSpec, out_dir=None, workers: int = 1, keep_runs: bool = False) -> SweepResult:
    """Run every (lr, direction, seed) cell. Diverged cells are recorded, never fatal.

    With ``workers > 1`` whole runs go to separate processes; results are
    ordered by grid position, not completion order.
    """
    jobs = []
    for lr, direction, seed in spec.cells():
        run_dir = None
        if out_dir is not None and keep_runs:
            run_dir = str(Path(out_dir) / "runs" / f"lr{fmt(lr)}_{direction}_s{seed}")
        jobs.append((spec.run_config(lr, direction, seed, run_dir), lr, direction, seed))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = []
        for job in jobs:
            cells.append(_run_cell(job))
            c = cells[-1]
            log.info("cell lr=%s dir=%s seed=%s -> %s %.4f", c.lr, c.direction, c.seed, c.status, c.final_eval_loss)
    result = SweepResult(spec, cells)
    if out_dir is not None:
        result.write(out_dir)
    return result
