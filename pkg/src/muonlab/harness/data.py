"""Data sources: byte-level character corpora and a synthetic regression task."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..models import Batch, MlpModel, mlp_forward
from ..tensorcore import Rng

VOCAB_SIZE = 96
OOV_ID = 95  # every byte outside printable ASCII 32..126 (newlines included)
VAL_FRACTION = 0.05


def encode(text: str | bytes) -> np.ndarray:
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    raw = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    ids = raw - 32
    ids[(raw < 32) | (raw > 126)] = OOV_ID
    return ids


def decode(ids) -> str:
    ids = np.asarray(ids)
    return "".join("\n" if i == OOV_ID else chr(int(i) + 32) for i in ids)


@dataclass
class CharCorpus:
    train: np.ndarray
    val: np.ndarray

    @classmethod
    def from_tokens(cls, tokens: np.ndarray, seq_len: int | None = None) -> "CharCorpus":
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.size == 0:
            raise DataError("corpus is empty")
        n_val = int(round(tokens.size * VAL_FRACTION))
        split = tokens.size - n_val
        corpus = cls(tokens[:split], tokens[split:])
        if seq_len is not None:
            # every window needs seq_len inputs plus one shifted target
            if corpus.train.size <= seq_len or corpus.val.size <= seq_len:
                raise ConfigError(
                    f"corpus of {tokens.size} tokens is too short for seq_len {seq_len} "
                    f"(train {corpus.train.size}, validation {corpus.val.size})"
                )
        return corpus

    @property
    def tokens(self) -> np.ndarray:
        return np.concatenate([self.train, self.val])

    def digest(self) -> str:
        return hashlib.sha256(self.tokens.astype(np.int64).tobytes()).hexdigest()


def load_char_corpus(path, seq_len: int | None = None) -> CharCorpus:
    """Read a text file as byte tokens; the last 5% (contiguous) is validation."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    if not data:
        raise DataError(f"corpus {path} is empty")
    return CharCorpus.from_tokens(encode(data), seq_len)


# ---------------------------------------------------------------------------
# Synthetic English-like text, so the char-LM task needs no downloads.

_NAMES = ["Ada", "Boris", "Clara", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kira", "Leo"]
_ADJ = ["quiet", "bright", "old", "narrow", "heavy", "silver", "distant", "careful", "green", "broken", "warm", "small"]
_NOUNS = ["river", "garden", "window", "engine", "letter", "market", "bridge", "lantern", "forest", "tower",
          "violin", "harbor", "kitchen", "mirror", "wagon", "meadow"]
_VERBS = [("opens", "opened"), ("watches", "watched"), ("carries", "carried"), ("paints", "painted"),
          ("repairs", "repaired"), ("follows", "followed"), ("finds", "found"), ("builds", "built"),
          ("remembers", "remembered"), ("crosses", "crossed")]
_PREP = ["near", "under", "behind", "beside", "across", "inside", "above", "toward"]
_ADV = ["slowly", "again", "at dawn", "every morning", "without a word", "before noon", "in the rain"]
_NUM = ["two", "three", "four", "five", "seven", "twelve"]


def _plural(noun: str) -> str:
    if noun.endswith(("s", "sh", "ch", "x")):
        return noun + "es"
    return noun + "s"


def synthetic_text(seed: int = 0, n_chars: int = 200_000) -> str:
    rng = Rng(seed, stream=17)

    def pick(options):
        return options[int(rng.integers(0, len(options)))]

    def noun_phrase():
        if rng.uniform() < 0.5:
            return f"the {pick(_ADJ)} {pick(_NOUNS)}"
        return f"the {pick(_NOUNS)}"

    def clause(past: bool):
        verb = pick(_VERBS)[1 if past else 0]
        return f"{pick(_NAMES)} {verb} {noun_phrase()} {pick(_PREP)} {noun_phrase()}"

    parts: list[str] = []
    size = 0
    sentences = 0
    while size < n_chars:
        r = rng.uniform()
        if r < 0.35:
            s = f"{clause(past=True)} {pick(_ADV)}."
        elif r < 0.55:
            s = f'{pick(_NAMES)} said, "{clause(past=False)}."'
        elif r < 0.75:
            n = pick(_NUM)
            s = f"In {1800 + int(rng.integers(0, 200))}, {pick(_NAMES)} {pick(_VERBS)[1]} {n} {_plural(pick(_NOUNS))}."
        else:
            s = f"{clause(past=True)}, and {clause(past=True)}."
        s = s[0].upper() + s[1:]
        sentences += 1
        sep = "\n" if sentences % 6 == 0 else " "
        parts.append(s + sep)
        size += len(s) + 1
    return "".join(parts)[:n_chars]


def synthetic_corpus(seed: int = 0, n_chars: int = 200_000, seq_len: int | None = None) -> CharCorpus:
    return CharCorpus.from_tokens(encode(synthetic_text(seed, n_chars)), seq_len)


def sample_lm_batch(tokens: np.ndarray, rng: Rng, batch_size: int, seq_len: int) -> Batch:
    """Random contiguous windows; targets are the inputs shifted by one."""
    starts = rng.integers(0, tokens.size - seq_len, size=batch_size)
    idx = starts[:, None] + np.arange(seq_len + 1)[None, :]
    windows = tokens[idx]
    return Batch(windows[:, :-1], windows[:, 1:])


def eval_lm_batches(tokens: np.ndarray, n_batches: int, batch_size: int, seq_len: int) -> list:
    """Evenly spaced validation windows, identical for every run and seed."""
    n_windows = n_batches * batch_size
    starts = np.linspace(0, tokens.size - seq_len - 1, n_windows).astype(np.int64)
    idx = starts[:, None] + np.arange(seq_len + 1)[None, :]
    windows = tokens[idx]
    return [
        Batch(windows[i : i + batch_size, :-1], windows[i : i + batch_size, 1:])
        for i in range(0, n_windows, batch_size)
    ]


@dataclass
class RegressionTask:
    """Targets from a fixed random teacher network ``W2 tanh(W1 x)``."""

    teacher: MlpModel
    d_in: int

    @classmethod
    def make(cls, seed: int, d_in: int, teacher_hidden: int, d_out: int) -> "RegressionTask":
        return cls(MlpModel.init(Rng(seed, stream=2), d_in, teacher_hidden, d_out, scale=2.0), d_in)

    def batch(self, rng: Rng, size: int) -> Batch:
        x = rng.normal((size, self.d_in))
        return Batch(x, mlp_forward(self.teacher, x))
