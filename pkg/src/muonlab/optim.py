"""Optimizer step functions: Muon, Muon+, NorMuon, AdamW and heavy-ball SGD.

Each step function takes the current weights, the parameter's state, the
gradient and an ``OptimizerConfig``; it updates the state in place and returns
the new weights (a fresh array). Weight decay is decoupled for every kind:
``w <- w * (1 - lr * weight_decay)`` happens before the direction update.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeError
from .norm import DEFAULT_EPS, NormDirection, apply_norm
from .polar import PolarMethod, ortho

OPTIMIZER_KINDS = ("muon", "muon_plus", "normuon", "adamw", "sgd_momentum")
MATRIX_KINDS = ("muon", "muon_plus", "normuon")
PREFACTORS = ("sqrt_ratio", "none")


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.02
    momentum: float = 0.95
    weight_decay: float = 0.0
    eps: float = DEFAULT_EPS
    direction: NormDirection = NormDirection.NONE
    polar: PolarMethod = field(default_factory=PolarMethod)
    nesterov: bool = False
    adam_beta1: float = 0.9
    adam_beta2: float = 0.95
    adam_eps: float = 1e-8
    normuon_beta2: float = 0.95
    prefactor: str = "sqrt_ratio"

    def __post_init__(self):
        # zero is allowed: schedules reach it at the ends of warmup and decay
        if not self.lr >= 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not self.weight_decay >= 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if not self.eps > 0 or not self.adam_eps > 0:
            raise ConfigError("eps and adam_eps must be positive")
        if not 0.0 <= self.adam_beta1 < 1.0:
            raise ConfigError(f"adam_beta1 must lie in [0, 1), got {self.adam_beta1}")
        if not 0.0 <= self.adam_beta2 <= 1.0 or not 0.0 <= self.normuon_beta2 <= 1.0:
            raise ConfigError("adam_beta2 and normuon_beta2 must lie in [0, 1]")
        if self.prefactor not in PREFACTORS:
            raise ConfigError(f"prefactor must be one of {PREFACTORS}, got {self.prefactor!r}")
        object.__setattr__(self, "direction", NormDirection.parse(self.direction))

    def with_lr(self, lr: float) -> "OptimizerConfig":
        return replace(self, lr=lr)


@dataclass
class ParamState:
    """Per-parameter buffers, zero-initialized lazily on the first step."""

    momentum: np.ndarray | None = None
    second_moment: np.ndarray | None = None
    step_count: int = 0

    @classmethod
    def zeros_like(cls, w) -> "ParamState":
        return cls(momentum=np.zeros_like(np.asarray(w, dtype=np.float64)))


@dataclass
class ParamGroup:
    name: str
    optimizer_kind: str
    param_ids: list
    config: OptimizerConfig

    def __post_init__(self):
        if self.optimizer_kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer kind {self.optimizer_kind!r}")


def _check_shapes(w, g):
    if w.shape != g.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {w.shape}")


def _as_float(a):
    a = np.asarray(a)
    return a if a.dtype in (np.float32, np.float64) else a.astype(np.float64)


def momentum_update(state: ParamState, g, mu: float, nesterov: bool = False) -> np.ndarray:
    """EMA momentum ``M <- mu M + (1 - mu) G``; returns the update direction.

    With ``nesterov`` the returned direction is ``mu M + (1 - mu) G`` evaluated
    with the freshly updated ``M``; the stored buffer is the plain EMA either way.
    """
    g = _as_float(g)
    if state.momentum is None:
        state.momentum = np.zeros_like(g)
    _check_shapes(state.momentum, g)
    state.momentum = mu * state.momentum + (1.0 - mu) * g
    if nesterov:
        return mu * state.momentum + (1.0 - mu) * g
    return state.momentum


def shape_prefactor(shape, prefactor: str = "sqrt_ratio") -> float:
    if prefactor == "none":
        return 1.0
    m, n = shape
    return math.sqrt(m / n)


def _decay(w, cfg: OptimizerConfig):
    if cfg.weight_decay == 0.0:
        return w
    return w * (1.0 - cfg.lr * cfg.weight_decay)


def _orthogonal_update(w, state, g, cfg: OptimizerConfig, direction, mu, transform=None):
    w = _as_float(w)
    g = _as_float(g)
    _check_shapes(w, g)
    if w.ndim != 2:
        raise ShapeError(f"matrix optimizers need 2-D parameters, got shape {w.shape}")
    d = momentum_update(state, g, mu, cfg.nesterov)
    state.step_count += 1
    try:
        o = ortho(d, cfg.polar)
    except DegenerateInputError:
        # zero momentum: nothing to orthogonalize, only the decay applies
        return _decay(w, cfg)
    if transform is not None:
        o = transform(o)
    o = apply_norm(o, direction, cfg.eps)
    scale = cfg.lr * shape_prefactor(w.shape, cfg.prefactor)
    return _decay(w, cfg) - scale * o


def muon_step(w, state: ParamState, g, cfg: OptimizerConfig) -> np.ndarray:
    """Momentum, orthogonalize, ``w - lr sqrt(m/n) O``. ``cfg.direction`` is ignored."""
    return _orthogonal_update(w, state, g, cfg, NormDirection.NONE, cfg.momentum)


def muon_plus_step(w, state: ParamState, g, cfg: OptimizerConfig) -> np.ndarray:
    """Muon with ``apply_norm(., cfg.direction)`` between orthogonalization and the update."""
    return _orthogonal_update(w, state, g, cfg, cfg.direction, cfg.momentum)


def normuon_scale(o, state: ParamState, beta2: float, adam_eps: float) -> np.ndarray:
    """Per-row second-moment scaling of an orthogonalized update.

    Each row is divided by the root of its bias-corrected running mean square;
    the result is then rescaled to the Frobenius norm ``o`` had on entry.
    Expects ``state.step_count`` to already count the current step.
    """
    rows = o.shape[0]
    if state.second_moment is None:
        state.second_moment = np.zeros(rows, dtype=o.dtype)
    row_ms = np.mean(o * o, axis=1)
    state.second_moment = beta2 * state.second_moment + (1.0 - beta2) * row_ms
    bias = 1.0 - beta2**state.step_count
    v_hat = state.second_moment / bias
    scaled = o / np.sqrt(v_hat + adam_eps)[:, None]
    before = np.linalg.norm(o)
    after = np.linalg.norm(scaled)
    if after == 0.0:
        return scaled
    return scaled * (before / after)


def normuon_step(w, state: ParamState, g, cfg: OptimizerConfig) -> np.ndarray:
    """Muon with neuron-wise (per-row) adaptive scaling; ``adam_beta1`` is the momentum."""

    def transform(o):
        return normuon_scale(o, state, cfg.normuon_beta2, cfg.adam_eps)

    return _orthogonal_update(w, state, g, cfg, NormDirection.NONE, cfg.adam_beta1, transform)


def adamw_step(w, state: ParamState, g, cfg: OptimizerConfig) -> np.ndarray:
    w = _as_float(w)
    g = _as_float(g)
    _check_shapes(w, g)
    if state.momentum is None:
        state.momentum = np.zeros_like(g)
    if state.second_moment is None:
        state.second_moment = np.zeros_like(g)
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    state.step_count += 1
    t = state.step_count
    state.momentum = b1 * state.momentum + (1.0 - b1) * g
    state.second_moment = b2 * state.second_moment + (1.0 - b2) * (g * g)
    m_hat = state.momentum / (1.0 - b1**t)
    v_hat = state.second_moment / (1.0 - b2**t)
    return _decay(w, cfg) - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def sgd_momentum_step(w, state: ParamState, g, cfg: OptimizerConfig) -> np.ndarray:
    """Heavy ball with the same EMA momentum convention as Muon."""
    w = _as_float(w)
    _check_shapes(w, _as_float(g))
    d = momentum_update(state, g, cfg.momentum, cfg.nesterov)
    state.step_count += 1
    return _decay(w, cfg) - cfg.lr * d


STEP_FUNCTIONS = {
    "muon": muon_step,
    "muon_plus": muon_plus_step,
    "normuon": normuon_step,
    "adamw": adamw_step,
    "sgd_momentum": sgd_momentum_step,
}


def step_function(kind: str):
    try:
        return STEP_FUNCTIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown optimizer kind {kind!r}; expected one of {OPTIMIZER_KINDS}") from None


def step_group(kind: str, params: dict, states: dict, grads: dict, cfg: OptimizerConfig) -> dict:
    """Apply one optimizer step to every named parameter; returns the new weights."""
    fn = step_function(kind)
    return {name: fn(params[name], states[name], grads[name], cfg) for name in params}


# Parameter naming convention shared with the models module.
_MATRIX_NAME = re.compile(r"^(blocks\.\d+\.attn\.(wq|wk|wv|wo)|blocks\.\d+\.mlp\.(up|down)|mlp\.(w1|w2))$")
_ADAMW_NAME = re.compile(r"^(embed\.tok|embed\.pos|unembed|blocks\.\d+\.(ln1|ln2)\.gain)$")


def partition_params(
    model_params,
    matrix_kind: str = "muon_plus",
    matrix_config: OptimizerConfig | None = None,
    adamw_config: OptimizerConfig | None = None,
) -> list[ParamGroup]:
    """Split ``(name, shape)`` pairs into a matrix-optimizer group and an AdamW group.

    Attention and MLP weight matrices go to ``matrix_kind``; embeddings, the
    unembedding, positional tables, norm gains and any 1-D tensor go to AdamW.
    """
    if matrix_kind not in OPTIMIZER_KINDS:
        raise ConfigError(f"unknown optimizer kind {matrix_kind!r}")
    matrix_config = matrix_config or OptimizerConfig()
    adamw_config = adamw_config or OptimizerConfig(lr=1e-3)
    matrix_ids, adamw_ids, unknown = [], [], []
    for name, shape in model_params:
        shape = tuple(shape)
        if _MATRIX_NAME.match(name) and len(shape) == 2:
            matrix_ids.append(name)
        elif _ADAMW_NAME.match(name) or len(shape) == 1:
            adamw_ids.append(name)
        else:
            unknown.append(name)
    if unknown:
        raise ConfigError(f"unrecognized parameter names: {', '.join(unknown)}")
    groups = []
    if matrix_ids:
        groups.append(ParamGroup("matrix", matrix_kind, matrix_ids, matrix_config))
    if adamw_ids:
        groups.append(ParamGroup("adamw", "adamw", adamw_ids, adamw_config))
    return groups
