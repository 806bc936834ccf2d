"""Small differentiable models with hand-written backward passes.

Two models supply matrix-shaped gradients to the optimizers:

* ``MlpModel``: ``y = W2 tanh(W1 x)`` with a mean-squared-error loss.
* ``MiniTransformer``: a pre-norm, single-head, causal character model.

Weights are stored ``(out_features, in_features)`` so rows are output neurons.
Parameters live in a flat ``dict`` keyed by the names ``partition_params``
understands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .tensorcore import Rng

RMS_EPS = 1e-5


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray


# ---------------------------------------------------------------------------
# MLP


@dataclass
class MlpModel:
    params: dict = field(default_factory=dict)

    @classmethod
    def init(cls, rng: Rng, d_in: int, hidden: int, d_out: int, scale: float = 1.0) -> "MlpModel":
        return cls(
            {
                "mlp.w1": rng.normal((hidden, d_in)) * (scale / math.sqrt(d_in)),
                "mlp.w2": rng.normal((d_out, hidden)) * (scale / math.sqrt(hidden)),
            }
        )

    @classmethod
    def zeros(cls, d_in: int, hidden: int, d_out: int) -> "MlpModel":
        return cls({"mlp.w1": np.zeros((hidden, d_in)), "mlp.w2": np.zeros((d_out, hidden))})

    @property
    def dims(self):
        hidden, d_in = self.params["mlp.w1"].shape
        return d_in, hidden, self.params["mlp.w2"].shape[0]

    def named_shapes(self):
        return [(k, v.shape) for k, v in self.params.items()]


def mlp_forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return np.tanh(x @ model.params["mlp.w1"].T) @ model.params["mlp.w2"].T


def mlp_forward_backward(model: MlpModel, batch: Batch):
    """Mean squared error over every output entry, and its exact gradients."""
    w1, w2 = model.params["mlp.w1"], model.params["mlp.w2"]
    x = np.asarray(batch.inputs, dtype=np.float64)
    t = np.asarray(batch.targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != w1.shape[1]:
        raise ShapeError(f"inputs of shape {x.shape} do not fit w1 {w1.shape}")
    if t.shape != (x.shape[0], w2.shape[0]):
        raise ShapeError(f"targets of shape {t.shape} do not fit outputs {(x.shape[0], w2.shape[0])}")
    h = np.tanh(x @ w1.T)
    y = h @ w2.T
    r = y - t
    loss = float(np.mean(r * r))
    dy = 2.0 * r / r.size
    gw2 = dy.T @ h
    dz = (dy @ w2) * (1.0 - h * h)
    gw1 = dz.T @ x
    return loss, {"mlp.w1": gw1, "mlp.w2": gw2}


# ---------------------------------------------------------------------------
# Transformer


@dataclass
class MiniTransformer:
    params: dict = field(default_factory=dict)
    n_blocks: int = 2

    @classmethod
    def init(
        cls, rng: Rng, vocab: int = 96, d_model: int = 64, n_blocks: int = 2, max_len: int = 128
    ) -> "MiniTransformer":
        d = d_model
        std = 1.0 / math.sqrt(d)
        out_std = std / math.sqrt(2 * n_blocks)
        p = {
            "embed.tok": rng.normal((vocab, d)) * 0.1,
            "embed.pos": rng.normal((max_len, d)) * 0.1,
        }
        for i in range(n_blocks):
            b = f"blocks.{i}."
            p[b + "ln1.gain"] = np.ones(d)
            p[b + "attn.wq"] = rng.normal((d, d)) * std
            p[b + "attn.wk"] = rng.normal((d, d)) * std
            p[b + "attn.wv"] = rng.normal((d, d)) * std
            p[b + "attn.wo"] = rng.normal((d, d)) * out_std
            p[b + "ln2.gain"] = np.ones(d)
            p[b + "mlp.up"] = rng.normal((4 * d, d)) * std
            p[b + "mlp.down"] = rng.normal((d, 4 * d)) * (out_std / 2.0)
        p["unembed"] = rng.normal((vocab, d)) * (0.1 * std)
        return cls(p, n_blocks)

    @property
    def vocab(self) -> int:
        return self.params["embed.tok"].shape[0]

    @property
    def d_model(self) -> int:
        return self.params["embed.tok"].shape[1]

    @property
    def max_len(self) -> int:
        return self.params["embed.pos"].shape[0]

    def named_shapes(self):
        return [(k, v.shape) for k, v in self.params.items()]

    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def astype(self, dtype) -> "MiniTransformer":
        return MiniTransformer({k: v.astype(dtype) for k, v in self.params.items()}, self.n_blocks)


_MASKS: dict = {}


def _causal_mask(s: int, dtype) -> np.ndarray:
    key = (s, np.dtype(dtype).str)
    mask = _MASKS.get(key)
    if mask is None:
        mask = np.triu(np.full((s, s), -np.inf, dtype=dtype), k=1)
        _MASKS[key] = mask
    return mask


def _rmsnorm(x, gain):
    r = np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + RMS_EPS)
    n = x / r
    return n * gain, n, r


def _rmsnorm_backward(dh, n, r, gain):
    dgain = np.einsum("ij,ij->j", dh, n)
    dn = dh * gain
    dx = (dn - n * np.mean(dn * n, axis=-1, keepdims=True)) / r
    return dx, dgain


def _check_tokens(model: MiniTransformer, tokens):
    tokens = np.asarray(tokens)
    if tokens.ndim != 2:
        raise ShapeError(f"token grid must be 2-D (batch, seq), got shape {tokens.shape}")
    if tokens.shape[1] > model.max_len:
        raise ShapeError(f"sequence length {tokens.shape[1]} exceeds max_len {model.max_len}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= model.vocab):
        raise ConfigError(f"token id out of range for vocabulary of size {model.vocab}")
    return tokens


def _forward(model: MiniTransformer, tokens, keep_cache: bool):
    # activations are kept flat as (batch * seq, features); attention alone
    # works on the (batch, seq, seq) view
    p = model.params
    bsz, s = tokens.shape
    d = model.d_model
    emb = p["embed.tok"]
    x = (emb[tokens] + p["embed.pos"][:s]).reshape(bsz * s, d)
    mask = _causal_mask(s, emb.dtype)
    inv_sqrt_d = 1.0 / math.sqrt(d)
    caches = []
    for i in range(model.n_blocks):
        b = f"blocks.{i}."
        h, n1, r1 = _rmsnorm(x, p[b + "ln1.gain"])
        q = (h @ p[b + "attn.wq"].T).reshape(bsz, s, d)
        k = (h @ p[b + "attn.wk"].T).reshape(bsz, s, d)
        v = (h @ p[b + "attn.wv"].T).reshape(bsz, s, d)
        scores = (q @ k.transpose(0, 2, 1)) * inv_sqrt_d + mask
        scores -= scores.max(axis=-1, keepdims=True)
        att = np.exp(scores)
        att /= att.sum(axis=-1, keepdims=True)
        a = (att @ v).reshape(bsz * s, d)
        x = x + a @ p[b + "attn.wo"].T
        h2, n2, r2 = _rmsnorm(x, p[b + "ln2.gain"])
        u = np.tanh(h2 @ p[b + "mlp.up"].T)
        x = x + u @ p[b + "mlp.down"].T
        if keep_cache:
            caches.append((h, n1, r1, q, k, v, att, a, h2, n2, r2, u))
    logits = x @ p["unembed"].T
    return logits, x, caches


def transformer_logits(model: MiniTransformer, tokens) -> np.ndarray:
    """Logits of shape (batch, seq, vocab)."""
    tokens = _check_tokens(model, tokens)
    logits = _forward(model, tokens, keep_cache=False)[0]
    return logits.reshape(tokens.shape + (model.vocab,))


def _cross_entropy(logits, targets):
    """Mean negative log-likelihood of flat ``targets`` under flat ``logits``."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    picked = logp[np.arange(targets.size), targets]
    return float(-np.mean(picked, dtype=np.float64)), logp


def transformer_loss(model: MiniTransformer, batch: Batch) -> float:
    tokens = _check_tokens(model, batch.inputs)
    targets = _check_tokens(model, batch.targets)
    logits = _forward(model, tokens, keep_cache=False)[0]
    return _cross_entropy(logits, targets.reshape(-1))[0]


def transformer_forward_backward(model: MiniTransformer, batch: Batch):
    """Mean next-token cross-entropy and gradients for every parameter."""
    p = model.params
    tokens = _check_tokens(model, batch.inputs)
    targets = _check_tokens(model, batch.targets)
    if targets.shape != tokens.shape:
        raise ShapeError("targets must have the same shape as inputs")
    bsz, s = tokens.shape
    n_tok = tokens.size
    d = model.d_model
    logits, x, caches = _forward(model, tokens, keep_cache=True)
    flat_targets = targets.reshape(-1)
    loss, logp = _cross_entropy(logits, flat_targets)

    grads = {}
    rows = np.arange(n_tok)
    dlogits = np.exp(logp)
    dlogits[rows, flat_targets] -= 1.0
    dlogits /= n_tok
    grads["unembed"] = dlogits.T @ x
    dx = dlogits @ p["unembed"]
    inv_sqrt_d = 1.0 / math.sqrt(d)

    for i in reversed(range(model.n_blocks)):
        b = f"blocks.{i}."
        h, n1, r1, q, k, v, att, a, h2, n2, r2, u = caches[i]
        # MLP branch
        grads[b + "mlp.down"] = dx.T @ u
        dz = (dx @ p[b + "mlp.down"]) * (1.0 - u * u)
        grads[b + "mlp.up"] = dz.T @ h2
        dres, grads[b + "ln2.gain"] = _rmsnorm_backward(dz @ p[b + "mlp.up"], n2, r2, p[b + "ln2.gain"])
        dx = dx + dres
        # attention branch
        grads[b + "attn.wo"] = dx.T @ a
        da = (dx @ p[b + "attn.wo"]).reshape(bsz, s, d)
        datt = da @ v.transpose(0, 2, 1)
        dv = (att.transpose(0, 2, 1) @ da).reshape(-1, d)
        dscores = att * (datt - np.sum(datt * att, axis=-1, keepdims=True))
        dscores *= inv_sqrt_d
        dq = (dscores @ k).reshape(-1, d)
        dk = (dscores.transpose(0, 2, 1) @ q).reshape(-1, d)
        grads[b + "attn.wq"] = dq.T @ h
        grads[b + "attn.wk"] = dk.T @ h
        grads[b + "attn.wv"] = dv.T @ h
        dh = dq @ p[b + "attn.wq"] + dk @ p[b + "attn.wk"] + dv @ p[b + "attn.wv"]
        dres, grads[b + "ln1.gain"] = _rmsnorm_backward(dh, n1, r1, p[b + "ln1.gain"])
        dx = dx + dres

    dx3 = dx.reshape(bsz, s, d)
    dpos = np.zeros_like(p["embed.pos"])
    dpos[:s] = dx3.sum(axis=0)
    grads["embed.pos"] = dpos
    onehot = np.zeros((n_tok, model.vocab), dtype=dx.dtype)
    onehot[rows, tokens.reshape(-1)] = 1.0
    grads["embed.tok"] = onehot.T @ dx
    return loss, {name: grads[name] for name in p}


# ---------------------------------------------------------------------------
# Finite-difference gradient check


@dataclass
class GradCheckReport:
    model_kind: str
    tolerance: float
    errors: dict  # parameter name -> max relative error

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def failing(self) -> list:
        return [name for name, err in self.errors.items() if not err <= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failing

    def lines(self):
        for name, err in self.errors.items():
            flag = "ok" if err <= self.tolerance else "FAIL"
            yield f"{name:28s} {err:.3e} {flag}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max entrywise error relative to the entry magnitude.

    Entries far below the tensor's largest gradient are measured against a
    floor of 1e-3 times that maximum, where finite-difference noise dominates.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.max(np.abs(numeric))), float(np.max(np.abs(analytic))))
    if scale == 0.0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3 * scale)
    return float(np.max(np.abs(analytic - numeric) / denom))


def finite_difference_grads(loss_fn, params: dict, step: float = 1e-5) -> dict:
    """Central differences of ``loss_fn()`` with respect to every entry of ``params``.

    ``params`` is perturbed in place and restored.
    """
    grads = {}
    for name, w in params.items():
        g = np.zeros_like(w)
        flat = w.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus = loss_fn()
            flat[i] = orig - step
            minus = loss_fn()
            flat[i] = orig
            gflat[i] = (plus - minus) / (2.0 * step)
        grads[name] = g
    return grads


def _gradcheck_problem(model_kind: str, seed: int, d_model: int = 16):
    rng = Rng(seed)
    if model_kind == "mlp":
        model = MlpModel.init(rng, d_in=4, hidden=8, d_out=3)
        batch = Batch(rng.normal((6, 4)), rng.normal((6, 3)))
        return model, batch, mlp_forward_backward, lambda: mlp_forward_backward(model, batch)[0]
    if model_kind == "transformer":
        model = MiniTransformer.init(rng, vocab=96, d_model=d_model, n_blocks=2, max_len=4)
        # random gains and a larger unembedding keep every path's gradient well above noise
        for name in model.params:
            if name.endswith(".gain"):
                model.params[name] = 1.0 + 0.3 * rng.normal(model.params[name].shape)
        model.params["unembed"] = rng.normal(model.params["unembed"].shape) / math.sqrt(d_model)
        tokens = rng.integers(0, 96, (2, 5))
        batch = Batch(tokens[:, :-1], tokens[:, 1:])
        return model, batch, transformer_forward_backward, lambda: transformer_loss(model, batch)
    raise ConfigError(f"unknown model kind {model_kind!r}; expected 'mlp' or 'transformer'")


def grad_check(model_kind: str, seed: int = 0, tolerance: float | None = None, corrupt: str | None = None,
               step: float = 1e-5) -> GradCheckReport:
    """Compare manual gradients with central finite differences.

    ``corrupt`` names a parameter whose analytic gradient is deliberately
    perturbed (a negative control for the checker itself).
    """
    if tolerance is None:
        tolerance = 1e-4 if model_kind == "mlp" else 1e-3
    model, batch, fb, loss_fn = _gradcheck_problem(model_kind, seed)
    _, analytic = fb(model, batch)
    if corrupt is not None:
        if corrupt not in analytic:
            raise ConfigError(f"cannot corrupt unknown parameter {corrupt!r}")
        analytic[corrupt] = analytic[corrupt] * 1.01 + 1e-3 * np.max(np.abs(analytic[corrupt]))
    numeric = finite_difference_grads(loss_fn, model.params, step)
    errors = {name: relative_error(analytic[name], numeric[name]) for name in model.params}
    return GradCheckReport(model_kind, tolerance, errors)
