"""Model assembly, backpropagation, Adam, and the training protocol."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterator, Sequence

import numpy as np

from .aoa import AttentionTrace, aoa_backward, aoa_forward
from .classifier import LABELS, LABEL_INDEX, LinearLayer, cross_entropy, cross_entropy_backward, predict
from .data import Sample
from .embeddings import EmbeddingTable
from .encoder import BiLstm, BiLstmCache, LstmWeights, bilstm_backward, bilstm_forward_cached, input_dropout
from .numerics import Rng, resolve_dtype, uniform_init

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    d_h: int = 150
    lr: float = 0.01
    batch_size: int = 25
    l2_lambda: float = 1e-4
    keep_rate: float = 0.2
    init_range: float = 1e-4
    oov_range: float = 0.01
    val_fraction: float = 0.2
    max_epochs: int = 50
    patience_epochs: int = 3
    lr_decay: float = 0.5
    lr_schedule: str = "best"  # "best" | "window"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    d_w: int = 300  # only used when no pretrained vectors are supplied
    seed: int = 0
    precision: str = "float64"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("d_h", "batch_size", "max_epochs", "patience_epochs", "d_w"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("lr", "init_range", "oov_range", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if not 0 < self.keep_rate <= 1:
            raise ValueError("keep_rate must lie in (0, 1]")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.lr_schedule not in ("best", "window"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        resolve_dtype(self.precision)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------

@dataclass
class ModelParams:
    sentence_encoder: BiLstm
    target_encoder: BiLstm
    linear: LinearLayer
    embeddings: EmbeddingTable | None = None

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        """Every trainable tensor in a fixed order."""
        out = []
        for enc_name, enc in (("sentence", self.sentence_encoder), ("target", self.target_encoder)):
            for d_name, w in (("fwd", enc.forward), ("bwd", enc.backward)):
                for t_name in ("W", "U", "b"):
                    out.append((f"{enc_name}.{d_name}.{t_name}", getattr(w, t_name)))
        out.append(("linear.W", self.linear.W))
        out.append(("linear.b", self.linear.b))
        return out

    def tensors(self) -> list[np.ndarray]:
        return [t for _, t in self.named_tensors()]

    def weight_matrices(self) -> list[np.ndarray]:
        """The L2-regularised set: LSTM input/recurrent matrices and the linear weights."""
        return [t for name, t in self.named_tensors() if not name.endswith(".b")]

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors()])

    def unflatten(self, vec) -> "ModelParams":
        vec = np.asarray(vec)
        if vec.size != self.n_params():
            raise ValueError(f"flat vector has {vec.size} entries, model has {self.n_params()}")
        out = self.copy()
        offset = 0
        for t in out.tensors():
            t[...] = vec[offset : offset + t.size].reshape(t.shape)
            offset += t.size
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.sentence_encoder.copy(), self.target_encoder.copy(), self.linear.copy(), self.embeddings)

    def zeros_like(self) -> "ModelParams":
        z = self.copy()
        for t in z.tensors():
            t[...] = 0
        z.embeddings = None
        return z

    @property
    def dtype(self) -> np.dtype:
        return self.linear.W.dtype


def expected_param_count(d_w: int, d_h: int, n_classes: int = len(LABELS)) -> int:
    return 2 * 2 * 4 * (d_h * d_w + d_h * d_h + d_h) + n_classes * 2 * d_h + n_classes


def init_params(config: TrainConfig, rng: Rng, embeddings: EmbeddingTable) -> ModelParams:
    """Weights ~ U(-init_range, init_range); all biases zero."""
    dtype = resolve_dtype(config.precision)
    d_w, d_h, r = embeddings.d_w, config.d_h, config.init_range

    def bilstm():
        return BiLstm(LstmWeights.uniform(d_w, d_h, r, rng, dtype), LstmWeights.uniform(d_w, d_h, r, rng, dtype))

    sentence = bilstm()
    target = bilstm()
    linear = LinearLayer(uniform_init(len(LABELS), 2 * d_h, -r, r, rng, dtype), np.zeros(len(LABELS), dtype))
    if embeddings.matrix.dtype != dtype:
        embeddings = EmbeddingTable(embeddings.vocab, embeddings.matrix.astype(dtype), embeddings.oov_indices)
    return ModelParams(sentence, target, linear, embeddings)


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------

@dataclass
class ForwardCache:
    label: int
    x_s: np.ndarray
    x_t: np.ndarray
    mask_s: np.ndarray
    mask_t: np.ndarray
    enc_s: BiLstmCache
    enc_t: BiLstmCache
    h_s: np.ndarray
    h_t: np.ndarray
    r: np.ndarray
    probs: np.ndarray
    trace: AttentionTrace


def _embed(model: ModelParams, sample: Sample):
    idx = model.embeddings.vocab.indices(sample.sentence_tokens)
    i, j = sample.aspect_span
    return model.embeddings.matrix[idx], model.embeddings.matrix[idx[i:j]]


def forward(model: ModelParams, sample: Sample, training: bool = False, rng: Rng | None = None, keep_rate: float = 1.0):
    """Embedding lookup, input dropout, both Bi-LSTMs, attention-over-attention, softmax.

    Returns ``(probs, trace, cache)``. ``rng`` is only consumed when
    ``training`` and ``keep_rate < 1``.
    """
    x_s, x_t = _embed(model, sample)
    x_s, mask_s = input_dropout(x_s, keep_rate, rng, training)
    x_t, mask_t = input_dropout(x_t, keep_rate, rng, training)
    h_s, enc_s = bilstm_forward_cached(x_s, model.sentence_encoder)
    h_t, enc_t = bilstm_forward_cached(x_t, model.target_encoder)
    r, trace = aoa_forward(h_s, h_t)
    probs, _ = predict(model.linear, r)
    cache = ForwardCache(LABEL_INDEX[sample.polarity], x_s, x_t, mask_s, mask_t, enc_s, enc_t, h_s, h_t, r, probs, trace)
    return probs, trace, cache


def sample_backward(model: ModelParams, cache: ForwardCache, grads: ModelParams) -> None:
    """Accumulate the cross-entropy gradient of one sample into ``grads``."""
    dx = cross_entropy_backward(cache.probs, cache.label)
    grads.linear.W += np.outer(dx, cache.r)
    grads.linear.b += dx
    dr = model.linear.W.T @ dx
    dh_s, dh_t = aoa_backward(dr, cache.h_s, cache.h_t, cache.trace)
    _, gs = bilstm_backward(dh_s, model.sentence_encoder, cache.enc_s)
    _, gt = bilstm_backward(dh_t, model.target_encoder, cache.enc_t)
    for acc, g in ((grads.sentence_encoder, gs), (grads.target_encoder, gt)):
        for a, b in ((acc.forward, g.forward), (acc.backward, g.backward)):
            a.W += b.W
            a.U += b.U
            a.b += b.b


def add_l2_gradient(model: ModelParams, grads: ModelParams, lam: float) -> None:
    if lam:
        for g, w in zip(grads.weight_matrices(), model.weight_matrices()):
            g += 2.0 * lam * w


def backward(model: ModelParams, batch: Sequence[Sample], lam: float, caches: Sequence[ForwardCache]) -> ModelParams:
    """Exact gradient of the summed batch loss (plus ``lam * ||theta||^2``)."""
    if len(batch) != len(caches):
        raise ValueError(f"batch has {len(batch)} samples but {len(caches)} caches were given")
    grads = model.zeros_like()
    for sample, cache in zip(batch, caches):
        if cache.label != LABEL_INDEX[sample.polarity] or cache.h_s.shape[0] != len(sample.sentence_tokens):
            raise ValueError("forward cache does not belong to this batch sample")
        sample_backward(model, cache, grads)
    add_l2_gradient(model, grads, lam)
    return grads


def l2_term(model: ModelParams, lam: float) -> float:
    return lam * float(sum(np.sum(np.square(w, dtype=np.float64)) for w in model.weight_matrices()))


def batch_loss_of(model: ModelParams, batch: Sequence[Sample], lam: float) -> float:
    """Summed cross-entropy + L2, dropout off."""
    ce = sum(cross_entropy(forward(model, s)[0], s.polarity) for s in batch)
    return ce + l2_term(model, lam)


# --------------------------------------------------------------------------
# optimiser
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(
            [np.zeros_like(t) for t in params.tensors()],
            [np.zeros_like(t) for t in params.tensors()],
            0, beta1, beta2, eps,
        )

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v], self.t, self.beta1, self.beta2, self.eps)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float):
    """Bias-corrected Adam update, in place. Returns ``(params, state)``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params.tensors(), grads.tensors(), state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# --------------------------------------------------------------------------
# protocol
# --------------------------------------------------------------------------

def split_train_validation(samples: Sequence[Sample], fraction: float, rng: Rng):
    """Shuffle, then hold out ``floor(len * fraction)`` samples for validation."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n = len(samples)
    n_val = int(math.floor(n * fraction + 1e-9))
    if n < 2 or n_val < 1 or n_val >= n:
        raise ValueError(f"cannot split {n} samples with validation fraction {fraction}")
    order = rng.permutation(n)
    val = [samples[k] for k in order[:n_val]]
    train = [samples[k] for k in order[n_val:]]
    return train, val


class LrSchedule:
    """Halve (``decay``) the learning rate when the epoch training loss stalls.

    ``"best"``: stalled means no improvement on the best loss so far for
    ``patience`` consecutive epochs; the counter restarts after each decay.
    ``"window"``: decay whenever the loss is not below the loss ``patience``
    epochs earlier, at most once per ``patience`` epochs.
    """

    def __init__(self, lr: float, patience: int = 3, decay: float = 0.5, mode: str = "best"):
        self.lr = lr
        self.patience = patience
        self.decay = decay
        self.mode = mode
        self.best = math.inf
        self.stale = 0
        self.losses: list[float] = []
        self._since_decay = 0

    def step(self, loss: float) -> float:
        self.losses.append(loss)
        if self.mode == "best":
            if loss < self.best:
                self.best = loss
                self.stale = 0
            else:
                self.stale += 1
                if self.stale >= self.patience:
                    self.lr *= self.decay
                    self.stale = 0
        else:
            self._since_decay += 1
            if len(self.losses) > self.patience and self._since_decay >= self.patience:
                if not loss < self.losses[-1 - self.patience]:
                    self.lr *= self.decay
                    self._since_decay = 0
        return self.lr


class TrainingAborted(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float, norms: dict[str, float]):
        worst = ", ".join(f"{k}={v:.3g}" for k, v in norms.items())
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}; parameter norms: {worst}")
        self.epoch, self.batch, self.loss, self.norms = epoch, batch, loss, norms


def predict_label(model: ModelParams, sample: Sample) -> int:
    return int(np.argmax(forward(model, sample)[0]))


def evaluate_accuracy(model: ModelParams, samples: Sequence[Sample]) -> float:
    if not samples:
        raise ValueError("cannot evaluate on an empty sample set")
    hits = sum(predict_label(model, s) == LABEL_INDEX[s.polarity] for s in samples)
    return hits / len(samples)


def confusion_matrix(model: ModelParams, samples: Sequence[Sample]) -> np.ndarray:
    """Rows: gold label, columns: predicted label, in ``LABELS`` order."""
    cm = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    for s in samples:
        cm[LABEL_INDEX[s.polarity], predict_label(model, s)] += 1
    return cm


def _batches(items: Sequence, size: int) -> Iterator[Sequence]:
    for k in range(0, len(items), size):
        yield items[k : k + size]


def train(
    config: TrainConfig,
    train_samples: Sequence[Sample],
    embeddings: EmbeddingTable,
    on_epoch: Callable[[dict], None] | None = None,
    timing: bool = True,
):
    """Train with a held-out validation split; returns ``(best_params, history)``.

    The returned parameters are those of the epoch with the highest
    validation accuracy (earliest epoch on ties). ``history`` holds one dict
    per epoch with ``epoch, lr, train_loss, train_accuracy, val_accuracy``
    and, when ``timing``, ``wall_seconds``. ``train_loss`` is the epoch's
    summed batch loss divided by the number of training samples.
    """
    if not train_samples:
        raise ValueError("no training samples")
    root = Rng(config.seed)
    train_set, val_set = split_train_validation(list(train_samples), config.val_fraction, root.derive("split"))
    model = init_params(config, root.derive("init"), embeddings)
    frozen = model.embeddings.checksum()
    shuffle_rng = root.derive("shuffle")
    dropout_rng = root.derive("dropout")
    state = AdamState.for_params(model, config.beta1, config.beta2, config.adam_eps)
    schedule = LrSchedule(config.lr, config.patience_epochs, config.lr_decay, config.lr_schedule)
    lr = config.lr
    history: list[dict] = []
    best_acc, best_model = -1.0, model.copy()

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(train_set))
        epoch_loss = 0.0
        for b, idx in enumerate(_batches(order, config.batch_size), 1):
            batch = [train_set[k] for k in idx]
            caches = [forward(model, s, True, dropout_rng, config.keep_rate)[2] for s in batch]
            loss = sum(cross_entropy(c.probs, c.label) for c in caches) + l2_term(model, config.l2_lambda)
            if not math.isfinite(loss):
                norms = {name: float(np.linalg.norm(t)) for name, t in model.named_tensors()}
                raise TrainingAborted(epoch, b, loss, norms)
            epoch_loss += loss
            grads = backward(model, batch, config.l2_lambda, caches)
            adam_step(model, grads, state, lr)
        train_loss = epoch_loss / len(train_set)
        train_acc = evaluate_accuracy(model, train_set)
        val_acc = evaluate_accuracy(model, val_set)
        record = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": train_loss,
            "train_accuracy": train_acc,
            "val_accuracy": val_acc,
        }
        if timing:
            record["wall_seconds"] = time.perf_counter() - t0
        history.append(record)
        logger.info("epoch %d lr %.3g loss %.4f train %.4f val %.4f", epoch, lr, train_loss, train_acc, val_acc)
        if on_epoch is not None:
            on_epoch(record)
        if val_acc > best_acc:
            best_acc, best_model = val_acc, model.copy()
        lr = schedule.step(train_loss)

    if model.embeddings.checksum() != frozen:  # pragma: no cover - guards the frozen-table invariant
        raise AssertionError("frozen embedding table changed during training")
    return best_model, history


def majority_label(samples: Sequence[Sample]) -> str:
    counts = [sum(s.polarity == lab for s in samples) for lab in LABELS]
    return LABELS[int(np.argmax(counts))]


def majority_baseline(train_samples: Sequence[Sample], test_samples: Sequence[Sample]) -> float:
    """Accuracy of always predicting the most frequent training label (ties -> positive)."""
    if not train_samples or not test_samples:
        raise ValueError("majority baseline needs non-empty train and test sets")
    label = majority_label(train_samples)
    return sum(s.polarity == label for s in test_samples) / len(test_samples)


@dataclass
class RunSummary:
    accuracies: list[float] = field(default_factory=list)

    @property
    def best(self) -> float:
        return max(self.accuracies)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        if len(self.accuracies) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))

    def __str__(self) -> str:
        return f"{self.best:.3f} ({self.mean:.3f}±{self.std:.3f})"


def run_seeds(seed: int, k: int) -> list[int]:
    return [int(s) for s in Rng(seed).derive("multi_run").integers(0, 2**63, size=k)]


def multi_run(
    config: TrainConfig,
    k: int,
    train_samples: Sequence[Sample],
    test_samples: Sequence[Sample],
    embeddings: EmbeddingTable,
    on_run: Callable[[int, float], None] | None = None,
) -> RunSummary:
    """``k`` independent train+test runs with seeds derived from ``config.seed``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    summary = RunSummary()
    for i, seed in enumerate(run_seeds(config.seed, k)):
        cfg = TrainConfig.from_dict({**config.to_dict(), "seed": seed})
        model, _ = train(cfg, train_samples, embeddings)
        acc = evaluate_accuracy(model, test_samples)
        summary.accuracies.append(acc)
        if on_run is not None:
            on_run(i, acc)
    return summary
