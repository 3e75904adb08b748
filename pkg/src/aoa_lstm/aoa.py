"""Attention-over-attention pooling of sentence states given target states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import softmax_cols, softmax_rows


@dataclass
class AttentionTrace:
    I: np.ndarray  # (n, m) interaction
    alpha: np.ndarray  # (n, m) column-stochastic
    beta: np.ndarray  # (n, m) row-stochastic
    beta_bar: np.ndarray  # (m,)
    gamma: np.ndarray  # (n,)

    def to_json(self, tokens=None) -> dict:
        d = {
            "I": self.I.tolist(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "beta_bar": self.beta_bar.tolist(),
            "gamma": self.gamma.tolist(),
        }
        if tokens is not None:
            d["tokens"] = list(tokens)
        return d


def interaction(h_s, h_t) -> np.ndarray:
    h_s, h_t = np.asarray(h_s), np.asarray(h_t)
    if h_s.ndim != 2 or h_t.ndim != 2 or h_s.shape[1] != h_t.shape[1]:
        raise ValueError(f"interaction needs a shared inner dimension, got {h_s.shape} and {h_t.shape}")
    return h_s @ h_t.T


def dual_attention(I):
    return softmax_cols(I), softmax_rows(I)


def average_beta(beta) -> np.ndarray:
    return np.asarray(beta).mean(axis=0)


def final_attention(alpha, beta_bar) -> np.ndarray:
    alpha, beta_bar = np.asarray(alpha), np.asarray(beta_bar)
    if alpha.shape[1] != beta_bar.shape[0]:
        raise ValueError(f"alpha has {alpha.shape[1]} columns but beta_bar has length {beta_bar.shape[0]}")
    return alpha @ beta_bar


def sentence_representation(h_s, gamma) -> np.ndarray:
    h_s, gamma = np.asarray(h_s), np.asarray(gamma)
    if h_s.shape[0] != gamma.shape[0]:
        raise ValueError(f"h_s has {h_s.shape[0]} rows but gamma has length {gamma.shape[0]}")
    return h_s.T @ gamma


def aoa_forward(h_s, h_t):
    """Returns ``(r, trace)`` where ``r = h_s^T gamma``."""
    I = interaction(h_s, h_t)
    alpha, beta = dual_attention(I)
    beta_bar = average_beta(beta)
    gamma = final_attention(alpha, beta_bar)
    return sentence_representation(h_s, gamma), AttentionTrace(I, alpha, beta, beta_bar, gamma)


def aoa_backward(dr, h_s, h_t, trace: AttentionTrace):
    """Gradients of a scalar w.r.t. ``h_s`` and ``h_t`` given ``dL/dr``."""
    alpha, beta, beta_bar, gamma = trace.alpha, trace.beta, trace.beta_bar, trace.gamma
    n = h_s.shape[0]
    dh_s = np.outer(gamma, dr)
    dgamma = h_s @ dr
    dalpha = np.outer(dgamma, beta_bar)
    dbeta_bar = alpha.T @ dgamma
    # every row of beta receives dbeta_bar / n
    dbeta = np.broadcast_to(dbeta_bar / n, beta.shape)
    dI = alpha * (dalpha - (dalpha * alpha).sum(axis=0, keepdims=True))
    dI += beta * (dbeta - (dbeta * beta).sum(axis=1, keepdims=True))
    dh_s += dI @ h_t
    dh_t = dI.T @ h_s
    return dh_s, dh_t
