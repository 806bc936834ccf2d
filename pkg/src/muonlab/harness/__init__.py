"""Experiment harness: configs, data, schedules, training runs, sweeps and benchmarks."""
from .config import RunConfig
from .schedulers import SchedulerSpec, lr_at
from .train import RunRecord, train

__all__ = ["RunConfig", "RunRecord", "SchedulerSpec", "lr_at", "train"]
