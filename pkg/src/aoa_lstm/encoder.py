"""LSTM cell, bidirectional encoder and input dropout.

Standard no-peephole LSTM::

    i = sigmoid(W_i x + U_i h + b_i)      f = sigmoid(W_f x + U_f h + b_f)
    o = sigmoid(W_o x + U_o h + b_o)      g = tanh(W_c x + U_c h + b_c)
    c = f * c_prev + i * g                h = o * tanh(c)

The four gate blocks are stored stacked (order i, f, o, c) in one
``(4 d_h, d_in)`` input matrix, one ``(4 d_h, d_h)`` recurrent matrix and one
``(4 d_h,)`` bias; ``W_i`` etc. are views into those.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numerics import Rng, sigmoid, uniform_init

GATES = ("i", "f", "o", "c")


@dataclass
class LstmWeights:
    W: np.ndarray  # (4 d_h, d_in)
    U: np.ndarray  # (4 d_h, d_h)
    b: np.ndarray  # (4 d_h,)

    def __post_init__(self):
        four_h, d_in = self.W.shape
        if four_h % 4:
            raise ValueError(f"input matrix rows must be 4*d_h, got {four_h}")
        h = four_h // 4
        if self.U.shape != (four_h, h):
            raise ValueError(f"recurrent matrix shape {self.U.shape} inconsistent with d_h={h}")
        if self.b.shape != (four_h,):
            raise ValueError(f"bias shape {self.b.shape} inconsistent with d_h={h}")

    @property
    def d_h(self) -> int:
        return self.U.shape[1]

    @property
    def d_in(self) -> int:
        return self.W.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(W, U, b) views for one gate."""
        k = GATES.index(name)
        h = self.d_h
        sl = slice(k * h, (k + 1) * h)
        return self.W[sl], self.U[sl], self.b[sl]

    @classmethod
    def zeros(cls, d_in: int, d_h: int, dtype=np.float64) -> "LstmWeights":
        return cls(
            np.zeros((4 * d_h, d_in), dtype), np.zeros((4 * d_h, d_h), dtype), np.zeros(4 * d_h, dtype)
        )

    @classmethod
    def uniform(cls, d_in: int, d_h: int, init_range: float, rng: Rng, dtype=np.float64) -> "LstmWeights":
        W = uniform_init(4 * d_h, d_in, -init_range, init_range, rng, dtype)
        U = uniform_init(4 * d_h, d_h, -init_range, init_range, rng, dtype)
        return cls(W, U, np.zeros(4 * d_h, dtype))

    def copy(self) -> "LstmWeights":
        return LstmWeights(self.W.copy(), self.U.copy(), self.b.copy())


@dataclass
class BiLstm:
    forward: LstmWeights
    backward: LstmWeights

    def __post_init__(self):
        if self.forward.d_in != self.backward.d_in or self.forward.d_h != self.backward.d_h:
            raise ValueError("forward and backward directions must share (d_in, d_h)")

    @property
    def d_h(self) -> int:
        return self.forward.d_h

    @property
    def d_in(self) -> int:
        return self.forward.d_in

    def copy(self) -> "BiLstm":
        return BiLstm(self.forward.copy(), self.backward.copy())


def lstm_cell(x_t, h_prev, c_prev, w: LstmWeights):
    """One LSTM step. Returns ``(h_t, c_t)``."""
    x_t = np.asarray(x_t)
    h_prev = np.asarray(h_prev)
    c_prev = np.asarray(c_prev)
    if x_t.shape != (w.d_in,) or h_prev.shape != (w.d_h,) or c_prev.shape != (w.d_h,):
        raise ValueError(
            f"lstm_cell shapes x={x_t.shape}, h={h_prev.shape}, c={c_prev.shape} "
            f"do not match weights (d_in={w.d_in}, d_h={w.d_h})"
        )
    h = w.d_h
    z = w.W @ x_t + w.U @ h_prev + w.b
    i, f, o = sigmoid(z[:h]), sigmoid(z[h : 2 * h]), sigmoid(z[2 * h : 3 * h])
    g = np.tanh(z[3 * h :])
    c_t = f * c_prev + i * g
    return o * np.tanh(c_t), c_t


def lstm_cell_backward(dh_t, dc_t, x_t, h_prev, c_prev, w: LstmWeights):
    """Gradients of a single step. Returns ``(dx, dh_prev, dc_prev, dW, dU, db)``."""
    h = w.d_h
    z = w.W @ x_t + w.U @ h_prev + w.b
    i, f, o = sigmoid(z[:h]), sigmoid(z[h : 2 * h]), sigmoid(z[2 * h : 3 * h])
    g = np.tanh(z[3 * h :])
    tc = np.tanh(f * c_prev + i * g)
    dc = dh_t * o * (1.0 - tc * tc) + dc_t
    dz = np.concatenate(
        [dc * g * i * (1 - i), dc * c_prev * f * (1 - f), dh_t * tc * o * (1 - o), dc * i * (1 - g * g)]
    )
    return w.W.T @ dz, w.U.T @ dz, dc * f, np.outer(dz, x_t), np.outer(dz, h_prev), dz


@dataclass
class LstmCache:
    x: np.ndarray
    H: np.ndarray
    C: np.ndarray
    G: np.ndarray


def lstm_forward(x: np.ndarray, w: LstmWeights):
    """Run one direction over ``x`` (n, d_in) from zero states. Returns ``(H, cache)``."""
    xw = x @ w.W.T + w.b
    H, C, G = kernels.lstm_recurrence(xw, w.U)
    return H, LstmCache(x, H, C, G)


def lstm_backward(dH: np.ndarray, w: LstmWeights, cache: LstmCache):
    """Returns ``(dx, LstmWeights-shaped gradient)``."""
    dZ = kernels.lstm_recurrence_backward(dH, w.U, cache.C, cache.G)
    dW = dZ.T @ cache.x
    dU = dZ[1:].T @ cache.H[:-1]
    db = dZ.sum(axis=0)
    return dZ @ w.W, LstmWeights(dW, dU, db)


@dataclass
class BiLstmCache:
    fwd: LstmCache
    bwd: LstmCache


def bilstm_forward_cached(x, enc: BiLstm):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"bilstm_forward needs a non-empty (n, d_in) sequence, got shape {x.shape}")
    if x.shape[1] != enc.d_in:
        raise ValueError(f"input width {x.shape[1]} does not match encoder d_in={enc.d_in}")
    Hf, cf = lstm_forward(x, enc.forward)
    Hb, cb = lstm_forward(x[::-1], enc.backward)
    return np.concatenate([Hf, Hb[::-1]], axis=1), BiLstmCache(cf, cb)


def bilstm_forward(x, enc: BiLstm) -> np.ndarray:
    """Encode ``x`` (n, d_w) into (n, 2 d_h): row t is [forward_t | backward_t]."""
    return bilstm_forward_cached(x, enc)[0]


def bilstm_backward(dout: np.ndarray, enc: BiLstm, cache: BiLstmCache):
    """Returns ``(dx, BiLstm-shaped gradient)``."""
    h = enc.d_h
    dxf, gf = lstm_backward(np.ascontiguousarray(dout[:, :h]), enc.forward, cache.fwd)
    dxb, gb = lstm_backward(np.ascontiguousarray(dout[::-1, h:]), enc.backward, cache.bwd)
    return dxf + dxb[::-1], BiLstm(gf, gb)


def input_dropout(x, keep_rate: float, rng: Rng | None, training: bool):
    """Inverted dropout. Returns ``(output, mask)``; ``mask`` already carries the
    ``1/keep_rate`` scale so the backward pass is ``grad * mask``."""
    if not 0.0 < keep_rate <= 1.0:
        raise ValueError(f"keep_rate must lie in (0, 1], got {keep_rate}")
    x = np.asarray(x)
    if not training or keep_rate == 1.0:
        return x, np.ones_like(x)
    keep = rng.random(x.shape) < keep_rate
    mask = keep.astype(x.dtype) / x.dtype.type(keep_rate)
    return x * mask, mask
