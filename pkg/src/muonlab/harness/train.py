"""Training loop with scheduled per-group optimizers and CSV/JSON metric output."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import _accel
from ..errors import DataError, NumericalError
from ..models import MiniTransformer, MlpModel, mlp_forward_backward, transformer_forward_backward, transformer_loss
from ..optim import ParamState, partition_params, step_group
from ..tensorcore import Rng
from .config import RunConfig
from .data import RegressionTask, eval_lm_batches, load_char_corpus, sample_lm_batch, synthetic_corpus
from .schedulers import lr_at

log = logging.getLogger(__name__)

TRAIN_HEADER = "step,lr,train_loss"
EVAL_HEADER = "step,eval_loss,eval_ppl"


def fmt(x: float) -> str:
    """17 significant digits; round-trips every float64."""
    return format(float(x), ".17g")


def perplexity(loss: float) -> float:
    try:
        return math.exp(loss)
    except OverflowError:
        return math.inf


@dataclass
class RunRecord:
    config: dict
    train_rows: list = field(default_factory=list)  # (step, lr, train_loss)
    eval_rows: list = field(default_factory=list)  # (step, eval_loss, eval_ppl)
    status: str = "ok"
    wall_clock: float = 0.0
    message: str = ""

    @property
    def initial_eval_loss(self) -> float:
        return self.eval_rows[0][1] if self.eval_rows else math.nan

    @property
    def final_eval_loss(self) -> float:
        if self.status != "ok" or not self.eval_rows:
            return math.inf
        return self.eval_rows[-1][1]

    @property
    def final_ppl(self) -> float:
        return perplexity(self.final_eval_loss)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "message": self.message,
            "steps_completed": len(self.train_rows),
            "initial_eval_loss": self.initial_eval_loss,
            "final_eval_loss": self.final_eval_loss,
            "final_eval_ppl": self.final_ppl,
            "final_train_loss": self.train_rows[-1][2] if self.train_rows else math.nan,
            "wall_clock_seconds": self.wall_clock,
            "backend": _accel.backend(),
            "config": self.config,
        }


class _Problem:
    """Model parameters plus batch/eval/gradient callables for one task."""

    def __init__(self, cfg: RunConfig):
        dtype = cfg.np_dtype
        init_rng = Rng(cfg.seed, stream=0)
        self.data_rng = Rng(cfg.seed, stream=1)
        if cfg.task == "char_lm":
            if cfg.corpus == "synthetic":
                corpus = synthetic_corpus(0, cfg.corpus_chars, cfg.seq_len)
            else:
                corpus = load_char_corpus(cfg.corpus, cfg.seq_len)
            self.corpus = corpus
            self.model = MiniTransformer.init(
                init_rng, vocab=96, d_model=cfg.d_model, n_blocks=cfg.n_blocks, max_len=cfg.seq_len
            ).astype(dtype)
            self.eval_set = eval_lm_batches(corpus.val, cfg.eval_batches, cfg.batch_size, cfg.seq_len)
            self._next = lambda: sample_lm_batch(corpus.train, self.data_rng, cfg.batch_size, cfg.seq_len)
            self._fb = transformer_forward_backward
            self._loss = transformer_loss
        else:
            task = RegressionTask.make(cfg.seed, cfg.d_in, cfg.teacher_hidden, cfg.d_out)
            model = MlpModel.init(init_rng, cfg.d_in, cfg.hidden, cfg.d_out)
            model.params = {k: v.astype(dtype) for k, v in model.params.items()}
            self.model = model
            eval_rng = Rng(cfg.seed, stream=3)
            self.eval_set = [task.batch(eval_rng, cfg.batch_size) for _ in range(cfg.eval_batches)]

            def next_batch():
                b = task.batch(self.data_rng, cfg.batch_size)
                b.inputs = b.inputs.astype(dtype)
                return b

            self._next = next_batch
            self._fb = mlp_forward_backward
            self._loss = lambda m, b: mlp_forward_backward(m, b)[0]

    @property
    def params(self) -> dict:
        return self.model.params

    def next_batch(self):
        return self._next()

    def forward_backward(self, batch):
        return self._fb(self.model, batch)

    def eval_loss(self) -> float:
        return float(np.mean([self._loss(self.model, b) for b in self.eval_set]))


class _CsvSink:
    def __init__(self, path: Path | None, header: str):
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="\n")
            self._fh.write(header + "\n")

    def write(self, *values):
        if self._fh is not None:
            self._fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in values) + "\n")

    def close(self):
        if self._fh is not None:
            self._fh.close()


def train(cfg: RunConfig) -> RunRecord:
    """Run one training job; writes ``train.csv``, ``eval.csv`` and ``summary.json``
    to ``cfg.output_dir`` when it is set. Divergence is recorded, not raised.
    """
    cfg.validate()
    start = time.perf_counter()
    problem = _Problem(cfg)
    params = problem.params
    dtype = cfg.np_dtype
    groups = partition_params(
        [(k, v.shape) for k, v in params.items()], cfg.optimizer, cfg.matrix_optimizer_config(), cfg.adamw_config()
    )
    states = {name: ParamState() for name in params}
    spec = cfg.scheduler_spec()
    record = RunRecord(config=cfg.to_dict())

    out = None
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create output directory {out}: {exc}") from exc
    train_csv = _CsvSink(out / "train.csv" if out else None, TRAIN_HEADER)
    eval_csv = _CsvSink(out / "eval.csv" if out else None, EVAL_HEADER)

    def evaluate(step):
        loss = problem.eval_loss()
        row = (step, loss, perplexity(loss))
        record.eval_rows.append(row)
        eval_csv.write(*row)
        return loss

    try:
        evaluate(0)
        initial_loss = None
        for t in range(cfg.steps):
            batch = problem.next_batch()
            loss, grads = problem.forward_backward(batch)
            if initial_loss is None:
                initial_loss = loss
            if not math.isfinite(loss) or loss > cfg.divergence_factor * initial_loss:
                record.status = "diverged"
                record.message = f"loss {loss!r} at step {t}"
                break
            lrs = {}
            try:
                for group in groups:
                    lr = lr_at(spec, group.config.lr, t, cfg.steps)
                    lrs[group.name] = lr
                    group_cfg = group.config.with_lr(lr)
                    updated = step_group(
                        group.optimizer_kind,
                        {k: params[k] for k in group.param_ids},
                        {k: states[k] for k in group.param_ids},
                        {k: grads[k] for k in group.param_ids},
                        group_cfg,
                    )
                    for k, w in updated.items():
                        params[k] = w if w.dtype == dtype else w.astype(dtype)
            except NumericalError as exc:
                record.status = "diverged"
                record.message = f"numerical failure at step {t}: {exc}"
                break
            row = (t, lrs.get("matrix", lrs.get("adamw")), loss)
            record.train_rows.append(row)
            train_csv.write(*row)
            done = t + 1
            if cfg.eval_every and done % cfg.eval_every == 0 and done != cfg.steps:
                evaluate(done)
        if record.status == "ok":
            final = evaluate(cfg.steps)
            if not math.isfinite(final):
                record.status = "diverged"
                record.message = "non-finite final evaluation loss"
    finally:
        train_csv.close()
        eval_csv.close()
    record.wall_clock = time.perf_counter() - start
    if out is not None:
        with open(out / "summary.json", "w") as fh:
            json.dump(record.summary(), fh, indent=2, default=_json_default)
            fh.write("\n")
    log.info("run finished: status=%s final_eval_loss=%.4f (%.1fs)", record.status, record.final_eval_loss,
             record.wall_clock)
    return record


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
