"""Full-model analytic gradient versus central finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import LABELS, LinearLayer
from .data import Sample
from .embeddings import EmbeddingTable, Vocab
from .encoder import BiLstm, LstmWeights
from .numerics import Rng, finite_difference_gradient
from .trainer import ModelParams, backward, batch_loss_of, forward

GRAD_FLOOR = 1e-8
TOLERANCE = 1e-4
# five-point stencil: O(eps^4) truncation keeps the float64 noise floor
# near 1e-13, so coordinates with |g| just above GRAD_FLOOR stay checkable
FD_ORDER = 4
FD_EPSILON = 4e-3


@dataclass
class GradcheckReport:
    max_rel_error: float
    worst: list[tuple[str, float, float, float]]  # (coordinate, analytic, numeric, rel error)
    n_checked: int
    n_params: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= TOLERANCE


def random_problem(seed: int, d_w: int = 4, d_h: int = 3, n_max: int = 6, m_max: int = 2, n_samples: int = 3, scale: float = 0.5):
    """Tiny random model and batch in float64. Weights use a wide init so that
    gradients are well above the finite-difference noise floor."""
    rng = Rng(seed).derive("gradcheck")
    vocab = Vocab([f"w{k}" for k in range(8)])
    table = EmbeddingTable(vocab, rng.uniform(-1.0, 1.0, (len(vocab), d_w)))

    def lstm():
        return LstmWeights(
            rng.uniform(-scale, scale, (4 * d_h, d_w)),
            rng.uniform(-scale, scale, (4 * d_h, d_h)),
            rng.uniform(-scale, scale, 4 * d_h),
        )

    model = ModelParams(
        BiLstm(lstm(), lstm()),
        BiLstm(lstm(), lstm()),
        LinearLayer(rng.uniform(-scale, scale, (len(LABELS), 2 * d_h)), rng.uniform(-scale, scale, len(LABELS))),
        table,
    )
    batch = []
    for _ in range(n_samples):
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(1, min(m_max, n) + 1))
        i = int(rng.integers(0, n - m + 1))
        toks = tuple(vocab.itos[int(k)] for k in rng.integers(0, len(vocab) - 1, n))
        batch.append(Sample(toks, (i, i + m), LABELS[int(rng.integers(0, len(LABELS)))], " ".join(toks)))
    return model, batch


def check_gradients(
    model: ModelParams,
    batch,
    lam: float = 1e-2,
    epsilon: float = FD_EPSILON,
    order: int = FD_ORDER,
    corrupt: bool = False,
    top: int = 5,
) -> GradcheckReport:
    caches = [forward(model, s)[2] for s in batch]
    analytic = backward(model, batch, lam, caches).flatten()
    if corrupt:
        analytic = analytic.copy()
        analytic[int(np.argmax(np.abs(analytic)))] *= 1.01
    numeric = finite_difference_gradient(
        lambda th: batch_loss_of(model.unflatten(th), batch, lam), model.flatten(), epsilon, order
    )
    names = [f"{name}[{k}]" for name, t in model.named_tensors() for k in range(t.size)]
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = scale > GRAD_FLOOR
    rel = np.zeros_like(analytic)
    rel[mask] = np.abs(analytic[mask] - numeric[mask]) / scale[mask]
    ranked = np.argsort(-rel)[:top]
    worst = [(names[k], float(analytic[k]), float(numeric[k]), float(rel[k])) for k in ranked]
    return GradcheckReport(float(rel.max(initial=0.0)), worst, int(mask.sum()), analytic.size)


def run_gradcheck(seed: int = 0, d_w: int = 4, d_h: int = 3, n_max: int = 6, m_max: int = 2, corrupt: bool = False) -> GradcheckReport:
    model, batch = random_problem(seed, d_w, d_h, n_max, m_max)
    return check_gradients(model, batch, corrupt=corrupt)
