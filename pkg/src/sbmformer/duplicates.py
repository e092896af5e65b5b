"""Synthetic duplicate-token detection task.

Each sequence holds N tokens drawn uniformly and independently from
{1, ..., N}; a token's label is 1 exactly when its value occurs at least
twice in the sequence. Solving it requires comparing every position against
every other, so attention supports must grow toward full density. Token id 0
is reserved for padding and never generated.

For N=8 the sequence [1, 4, 3, 7, 3, 2, 3, 1] labels as
[1, 0, 1, 0, 1, 0, 1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError


@dataclass(frozen=True)
class TaskConfig:
    seq_len: int = 256   # N: both the sequence length and the alphabet size
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.seq_len < 1 or self.batch_size < 1:
            raise DomainError("seq_len and batch_size must be positive")


@dataclass(frozen=True, eq=False)
class LabeledBatch:
    tokens: np.ndarray   # (B, N) int64 in [1, N]
    targets: np.ndarray  # (B, N) float64 in {0, 1}


def generate_batch(cfg: TaskConfig, rng: np.random.Generator) -> LabeledBatch:
    """Uniform iid tokens with exact duplicate labels."""
    n = cfg.seq_len
    tokens = rng.integers(1, n + 1, size=(cfg.batch_size, n), dtype=np.int64)
    counts = np.zeros((cfg.batch_size, n + 1), dtype=np.int64)
    rows = np.repeat(np.arange(cfg.batch_size), n)
    np.add.at(counts, (rows, tokens.ravel()), 1)
    targets = (counts[rows, tokens.ravel()] >= 2).astype(np.float64).reshape(cfg.batch_size, n)
    return LabeledBatch(tokens=tokens, targets=targets)


def duplicate_rate(cfg: TaskConfig) -> float:
    """P(a given token is a duplicate) = 1 - (1 - 1/N)^(N-1); ~0.63 for large N."""
    n = cfg.seq_len
    return 1.0 - (1.0 - 1.0 / n) ** (n - 1)


def write_batch(batch: LabeledBatch, fh) -> None:
    """One line per sequence: tokens, a ``|`` separator, then 0/1 labels."""
    for toks, labs in zip(batch.tokens, batch.targets):
        left = " ".join(str(t) for t in toks.tolist())
        right = " ".join(str(int(v)) for v in labs.tolist())
        fh.write(f"{left} | {right}\n")


def read_batch(fh) -> LabeledBatch:
    tokens, targets = [], []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if "|" not in line:
            raise InputError("batch line missing '|' separator")
        left, right = line.split("|")
        tokens.append([int(t) for t in left.split()])
        targets.append([float(v) for v in right.split()])
        if len(tokens[-1]) != len(targets[-1]):
            raise InputError("token and label counts disagree")
    if not tokens:
        raise InputError("batch file is empty")
    return LabeledBatch(tokens=np.asarray(tokens, dtype=np.int64),
                        targets=np.asarray(targets, dtype=np.float64))


def read_sequence(fh) -> np.ndarray:
    """A single whitespace-separated token sequence (for mask inspection)."""
    text = fh.read().split()
    if not text:
        raise InputError("sequence file is empty")
    try:
        return np.asarray([int(t) for t in text], dtype=np.int64)
    except ValueError as exc:
        raise InputError(f"sequence file must hold integers: {exc}") from exc
