"""Vocabulary and frozen word-embedding table."""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import DataError, Sample
from .numerics import Rng

logger = logging.getLogger(__name__)

UNK = "<unk>"
DEFAULT_DIM = 300


class Vocab:
    """Token <-> index map in first-occurrence order; ``<unk>`` is always last."""

    def __init__(self, tokens: Sequence[str]):
        self.itos = list(tokens)
        if UNK not in self.itos:
            self.itos.append(UNK)
        self.stoi = {t: k for k, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        self.unk_index = self.stoi[UNK]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, self.unk_index)

    def indices(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.int64)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos


def build_vocab(train_samples: Iterable[Sample]) -> Vocab:
    seen: dict[str, None] = {}
    count = 0
    for s in train_samples:
        count += 1
        for t in s.sentence_tokens:
            seen.setdefault(t, None)
    if not count:
        raise ValueError("cannot build a vocabulary from an empty training set")
    return Vocab(list(seen))


@dataclass
class EmbeddingTable:
    vocab: Vocab
    matrix: np.ndarray  # (V, d_w)
    oov_indices: frozenset[int] = field(default_factory=frozenset)
    trainable: bool = False

    @property
    def d_w(self) -> int:
        return self.matrix.shape[1]

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.matrix).tobytes()).hexdigest()


def random_table(vocab: Vocab, d_w: int, rng: Rng, oov_range: float = 0.01, dtype=np.float64) -> EmbeddingTable:
    """Table with every row drawn from U(-oov_range, oov_range)."""
    m = rng.uniform(-oov_range, oov_range, (len(vocab), d_w)).astype(dtype)
    return EmbeddingTable(vocab, m, frozenset(range(len(vocab))))


def load_pretrained(
    path, vocab: Vocab, rng: Rng, oov_range: float = 0.01, dim: int | None = None, dtype=np.float64
) -> EmbeddingTable:
    """Read GloVe-style text vectors (``token v1 ... vd`` per line, no header).

    Rows of vocabulary tokens found in the file are copied verbatim; all
    other rows, including ``<unk>``, are drawn from U(-oov_range, oov_range).
    ``dim`` is only used when the file is empty.
    """
    path = Path(path)
    found: dict[int, np.ndarray] = {}
    d_w = None
    with open(path, encoding="utf-8", errors="strict") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) < 2:
                if not line.strip():
                    continue
                raise DataError(f"{path}:{lineno}: expected a token followed by reals")
            token, values = parts[0], parts[1:]
            if d_w is None:
                d_w = len(values)
            elif len(values) != d_w:
                raise DataError(f"{path}:{lineno}: vector has {len(values)} components, expected {d_w}")
            k = vocab.stoi.get(token)
            if k is None:
                continue
            if k in found:
                warnings.warn(f"{path}:{lineno}: duplicate vector for {token!r}; keeping the first", stacklevel=2)
                continue
            try:
                found[k] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: unreadable real in vector for {token!r}") from None
    if d_w is None:
        d_w = dim if dim is not None else DEFAULT_DIM
    matrix = rng.uniform(-oov_range, oov_range, (len(vocab), d_w))
    for k, v in found.items():
        matrix[k] = v
    oov = frozenset(k for k in range(len(vocab)) if k not in found)
    logger.info("loaded %d/%d vectors (d_w=%d) from %s", len(found), len(vocab), d_w, path)
    return EmbeddingTable(vocab, matrix.astype(dtype), oov)


def lookup(table: EmbeddingTable, tokens: Sequence[str]) -> np.ndarray:
    if len(tokens) == 0:
        raise ValueError("lookup needs at least one token")
    return table.matrix[table.vocab.indices(tokens)]
