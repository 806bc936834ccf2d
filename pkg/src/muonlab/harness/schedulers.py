"""Learning-rate schedules, evaluated as a multiplier of the base rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigError

SCHEDULER_KINDS = ("constant_then_linear", "cosine_warmup")


@dataclass(frozen=True)
class SchedulerSpec:
    """``constant_then_linear`` holds the base rate until ``stable_ratio`` of the
    run and then decays linearly to zero; ``cosine_warmup`` ramps linearly over
    ``warmup_ratio`` and follows a half cosine to zero. Either kind accepts a
    warmup ramp from zero.
    """

    kind: str = "cosine_warmup"
    warmup_ratio: float = 0.1
    stable_ratio: float = 0.4

    def __post_init__(self):
        if self.kind not in SCHEDULER_KINDS:
            raise ConfigError(f"unknown scheduler {self.kind!r}; expected one of {SCHEDULER_KINDS}")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ConfigError(f"warmup_ratio must lie in [0, 1), got {self.warmup_ratio}")
        if not 0.0 <= self.stable_ratio <= 1.0:
            raise ConfigError(f"stable_ratio must lie in [0, 1], got {self.stable_ratio}")
        if self.kind == "constant_then_linear" and self.stable_ratio < self.warmup_ratio:
            raise ConfigError("stable_ratio must not be smaller than warmup_ratio")


def lr_at(spec: SchedulerSpec, base_lr: float, step: int, total: int) -> float:
    if total < 1:
        raise ConfigError(f"total steps must be positive, got {total}")
    if step < 0 or step > total:
        raise ConfigError(f"step {step} outside [0, {total}]")
    warm_end = spec.warmup_ratio * total
    if step < warm_end:
        return base_lr * step / warm_end
    if spec.kind == "constant_then_linear":
        decay_start = max(spec.stable_ratio * total, warm_end)
        if step < decay_start:
            return base_lr
        if decay_start >= total:
            return base_lr if step < total else 0.0
        return base_lr * (total - step) / (total - decay_start)
    progress = (step - warm_end) / (total - warm_end)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))
