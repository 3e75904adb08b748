"""Recurrent inner loops of the LSTM, in two interchangeable backends.

The time recurrence is the only part of the model that cannot be
vectorised over the sequence axis, so it is isolated here:

* ``lstm_recurrence``: given the input projections ``xw = X W^T + b`` run the
  cell over time and return hidden states, cell states and gate activations.
* ``lstm_recurrence_backward``: back-propagation through time, returning the
  gradient w.r.t. the pre-activations ``z_t = W x_t + U h_{t-1} + b``.

Gate blocks are stacked in the order input, forget, output, candidate.

The numba backend (scalar loops under ``@njit``) is used when numba is
importable and ``AOA_NO_NUMBA`` is unset or ``0``; otherwise the vectorised
numpy backend runs. Both give the same results up to summation order.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("AOA_NO_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")


# --------------------------------------------------------------------------
# numpy backend
# --------------------------------------------------------------------------

def _sigmoid_np(x):
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def recurrence_numpy(xw: np.ndarray, U: np.ndarray):
    n, four_h = xw.shape
    h = four_h // 4
    H = np.zeros((n, h), dtype=xw.dtype)
    C = np.zeros((n, h), dtype=xw.dtype)
    G = np.zeros((n, four_h), dtype=xw.dtype)
    h_prev = np.zeros(h, dtype=xw.dtype)
    c_prev = np.zeros(h, dtype=xw.dtype)
    for t in range(n):
        z = xw[t] + U @ h_prev
        G[t, : 3 * h] = _sigmoid_np(z[: 3 * h])
        G[t, 3 * h :] = np.tanh(z[3 * h :])
        i, f, o, g = G[t, :h], G[t, h : 2 * h], G[t, 2 * h : 3 * h], G[t, 3 * h :]
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        C[t] = c_prev
        H[t] = h_prev
    return H, C, G


def recurrence_backward_numpy(dH: np.ndarray, U: np.ndarray, C: np.ndarray, G: np.ndarray):
    n, h = dH.shape
    dZ = np.zeros((n, 4 * h), dtype=dH.dtype)
    dh_next = np.zeros(h, dtype=dH.dtype)
    dc_next = np.zeros(h, dtype=dH.dtype)
    for t in range(n - 1, -1, -1):
        i, f, o, g = G[t, :h], G[t, h : 2 * h], G[t, 2 * h : 3 * h], G[t, 3 * h :]
        c_prev = C[t - 1] if t > 0 else np.zeros(h, dtype=dH.dtype)
        tc = np.tanh(C[t])
        dh = dH[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dZ[t, :h] = dc * g * i * (1.0 - i)
        dZ[t, h : 2 * h] = dc * c_prev * f * (1.0 - f)
        dZ[t, 2 * h : 3 * h] = dh * tc * o * (1.0 - o)
        dZ[t, 3 * h :] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = U.T @ dZ[t]
    return dZ


# --------------------------------------------------------------------------
# numba backend
# --------------------------------------------------------------------------

def _sigmoid_scalar(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _recurrence_loops(xw, U):
    n, four_h = xw.shape
    h = four_h // 4
    H = np.zeros((n, h), dtype=xw.dtype)
    C = np.zeros((n, h), dtype=xw.dtype)
    G = np.zeros((n, four_h), dtype=xw.dtype)
    z = np.empty(four_h, dtype=xw.dtype)
    # z += U h as a sum of scaled columns of U (rows of U^T): the inner loop
    # is contiguous and vectorises, unlike a per-row dot-product reduction
    UT = np.ascontiguousarray(U.T)
    for t in range(n):
        for k in range(four_h):
            z[k] = xw[t, k]
        if t > 0:
            for j in range(h):
                hj = H[t - 1, j]
                for k in range(four_h):
                    z[k] += UT[j, k] * hj
        for k in range(h):
            i = _sigmoid_kernel(z[k])
            f = _sigmoid_kernel(z[h + k])
            o = _sigmoid_kernel(z[2 * h + k])
            g = math.tanh(z[3 * h + k])
            c_prev = C[t - 1, k] if t > 0 else 0.0
            c = f * c_prev + i * g
            C[t, k] = c
            H[t, k] = o * math.tanh(c)
            G[t, k] = i
            G[t, h + k] = f
            G[t, 2 * h + k] = o
            G[t, 3 * h + k] = g
    return H, C, G


def _recurrence_backward_loops(dH, U, C, G):
    n, h = dH.shape
    four_h = 4 * h
    dZ = np.zeros((n, four_h), dtype=dH.dtype)
    dh_next = np.zeros(h, dtype=dH.dtype)
    dc_next = np.zeros(h, dtype=dH.dtype)
    for t in range(n - 1, -1, -1):
        for k in range(h):
            i = G[t, k]
            f = G[t, h + k]
            o = G[t, 2 * h + k]
            g = G[t, 3 * h + k]
            c_prev = C[t - 1, k] if t > 0 else 0.0
            tc = math.tanh(C[t, k])
            dh = dH[t, k] + dh_next[k]
            dc = dh * o * (1.0 - tc * tc) + dc_next[k]
            dZ[t, k] = dc * g * i * (1.0 - i)
            dZ[t, h + k] = dc * c_prev * f * (1.0 - f)
            dZ[t, 2 * h + k] = dh * tc * o * (1.0 - o)
            dZ[t, 3 * h + k] = dc * i * (1.0 - g * g)
            dc_next[k] = dc * f
        # dh_next = U^T dZ[t], walked row by row so U is read contiguously
        for j in range(h):
            dh_next[j] = 0.0
        for k in range(four_h):
            dz = dZ[t, k]
            for j in range(h):
                dh_next[j] += U[k, j] * dz
    return dZ


if HAVE_NUMBA:
    _sigmoid_kernel = numba.njit(cache=True, inline="always")(_sigmoid_scalar)
    recurrence_numba = numba.njit(cache=True)(_recurrence_loops)
    recurrence_backward_numba = numba.njit(cache=True)(_recurrence_backward_loops)
else:  # pragma: no cover
    _sigmoid_kernel = _sigmoid_scalar
    recurrence_numba = None
    recurrence_backward_numba = None


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def lstm_recurrence(xw: np.ndarray, U: np.ndarray):
    if USE_NUMBA:
        return recurrence_numba(np.ascontiguousarray(xw), np.ascontiguousarray(U))
    return recurrence_numpy(xw, U)


def lstm_recurrence_backward(dH: np.ndarray, U: np.ndarray, C: np.ndarray, G: np.ndarray):
    if USE_NUMBA:
        return recurrence_backward_numba(
            np.ascontiguousarray(dH), np.ascontiguousarray(U), np.ascontiguousarray(C), np.ascontiguousarray(G)
        )
    return recurrence_backward_numpy(dH, U, C, G)
