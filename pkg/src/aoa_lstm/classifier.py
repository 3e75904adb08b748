"""Linear projection, softmax probabilities and the regularised loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .numerics import softmax_vec

LABELS = ("positive", "neutral", "negative")
LABEL_INDEX = {name: k for k, name in enumerate(LABELS)}
PROB_FLOOR = 1e-12


@dataclass
class LinearLayer:
    W: np.ndarray  # (C, 2 d_h)
    b: np.ndarray  # (C,)

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"linear layer shapes inconsistent: W {self.W.shape}, b {self.b.shape}")

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "LinearLayer":
        return LinearLayer(self.W.copy(), self.b.copy())


def scores(layer: LinearLayer, r) -> np.ndarray:
    r = np.asarray(r)
    if r.shape != (layer.W.shape[1],):
        raise ValueError(f"r has shape {r.shape}, linear layer expects ({layer.W.shape[1]},)")
    return layer.W @ r + layer.b


def predict(layer: LinearLayer, r):
    """Returns ``(probs, label_index)``; ties go to the lowest class index."""
    probs = softmax_vec(scores(layer, r))
    return probs, int(np.argmax(probs))


def _label_index(y) -> int:
    if isinstance(y, str):
        if y not in LABEL_INDEX:
            raise ValueError(f"unknown label {y!r}")
        return LABEL_INDEX[y]
    y = int(y)
    if not 0 <= y < len(LABELS):
        raise ValueError(f"label index {y} out of range")
    return y


def cross_entropy(probs, y) -> float:
    return -float(np.log(max(float(probs[_label_index(y)]), PROB_FLOOR)))


def l2_penalty(weights: Iterable[np.ndarray], lam: float) -> float:
    return lam * float(sum(np.sum(np.square(w, dtype=np.float64)) for w in weights))


def batch_loss(
    layer: LinearLayer,
    batch: Sequence[tuple[np.ndarray, object]],
    lam: float,
    weights: Iterable[np.ndarray] | None = None,
) -> float:
    """Summed cross-entropy over ``(r, label)`` pairs plus ``lam * ||theta||^2``.

    ``weights`` is the regularised set; it defaults to the linear layer's
    weight matrix alone (the trainer passes every LSTM matrix too).
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    ce = sum(cross_entropy(predict(layer, r)[0], y) for r, y in batch)
    return ce + l2_penalty([layer.W] if weights is None else weights, lam)


def cross_entropy_backward(probs, y) -> np.ndarray:
    """d(-log p_y)/d(scores). Zero where the probability floor is active."""
    k = _label_index(y)
    if probs[k] < PROB_FLOOR:
        return np.zeros_like(probs)
    d = probs.copy()
    d[k] -= 1.0
    return d
