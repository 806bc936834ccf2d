"""Flat key/value run configuration, loaded from JSON."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..norm import NormDirection
from ..optim import OPTIMIZER_KINDS, OptimizerConfig, PREFACTORS
from ..polar import SCHEDULE_NAMES, PolarMethod
from .schedulers import SchedulerSpec

TASKS = ("synthetic_regression", "char_lm")
DTYPES = ("float64", "float32")


@dataclass
class RunConfig:
    task: str = "char_lm"
    steps: int = 2000
    batch_size: int = 32
    seed: int = 0
    eval_every: int = 200
    eval_batches: int = 8
    output_dir: str | None = None
    dtype: str = "float64"
    divergence_factor: float = 1e3

    # char_lm
    d_model: int = 64
    n_blocks: int = 2
    seq_len: int = 128
    corpus: str = "synthetic"
    corpus_chars: int = 200_000

    # synthetic_regression
    d_in: int = 16
    hidden: int = 64
    d_out: int = 8
    teacher_hidden: int = 32

    # optimizer for attention / MLP weight matrices
    optimizer: str = "muon_plus"
    lr: float = 0.02
    momentum: float = 0.95
    weight_decay: float = 0.1
    eps: float = 1e-8
    direction: str = "none"
    polar: str = "jordan"
    ns_iters: int = 5
    nesterov: bool = False
    prefactor: str = "sqrt_ratio"
    normuon_beta2: float = 0.95
    adam_beta1: float = 0.9
    adam_beta2: float = 0.95
    adam_eps: float = 1e-8

    # AdamW group: embeddings, unembedding, positional table, norm gains
    adamw_lr: float = 0.003
    adamw_weight_decay: float = 0.0

    scheduler: str = "cosine_warmup"
    warmup_ratio: float = 0.1
    stable_ratio: float = 0.4

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be >= 0 (0 means final evaluation only)")
        if self.eval_every and self.steps % self.eval_every:
            raise ConfigError(f"eval_every ({self.eval_every}) must divide steps ({self.steps}) or be 0")
        if self.eval_batches < 1:
            raise ConfigError("eval_batches must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {DTYPES}, got {self.dtype!r}")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZER_KINDS}")
        if self.polar not in ("exact",) + SCHEDULE_NAMES:
            raise ConfigError(f"unknown polar method {self.polar!r}")
        if self.prefactor not in PREFACTORS:
            raise ConfigError(f"prefactor must be one of {PREFACTORS}")
        if not self.adamw_lr > 0 or not self.adamw_weight_decay >= 0:
            raise ConfigError("adamw_lr must be positive and adamw_weight_decay nonnegative")
        if not self.divergence_factor > 1:
            raise ConfigError("divergence_factor must exceed 1")
        for name in ("d_model", "n_blocks", "seq_len", "corpus_chars", "d_in", "hidden", "d_out", "teacher_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        self.direction = NormDirection.parse(self.direction).value
        # building these validates the remaining ranges
        self.matrix_optimizer_config()
        self.adamw_config()
        self.scheduler_spec()

    # -- derived objects ---------------------------------------------------
    def polar_method(self) -> PolarMethod:
        return PolarMethod.parse(self.polar, self.ns_iters)

    def matrix_optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            lr=self.lr,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            eps=self.eps,
            direction=self.direction,
            polar=self.polar_method(),
            nesterov=self.nesterov,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            normuon_beta2=self.normuon_beta2,
            prefactor=self.prefactor,
        )

    def adamw_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            lr=self.adamw_lr,
            weight_decay=self.adamw_weight_decay,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )

    def scheduler_spec(self) -> SchedulerSpec:
        return SchedulerSpec(self.scheduler, self.warmup_ratio, self.stable_ratio)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    # -- (de)serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = _coerce(key, known[key].type, value)
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a flat JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _coerce(key, annotation, value):
    ann = str(annotation)
    if isinstance(value, (dict, list)):
        raise ConfigError(f"config key {key!r} must be a scalar, got {type(value).__name__}")
    if ann == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be true or false")
        return value
    if ann == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
        return int(value)
    if ann == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
        return float(value)
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"config key {key!r} must be a string, got {value!r}")
    return value
