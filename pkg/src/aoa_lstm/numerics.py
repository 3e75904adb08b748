"""Dense matrix primitives, stable nonlinearities, seeded RNG and the
finite-difference gradient oracle.

Matrices are plain 2-D ``numpy.ndarray`` objects. The random generator is
numpy's PCG64 (O'Neill's permuted congruential generator, 128-bit state),
seeded through ``numpy.random.SeedSequence``; every named sub-stream is
derived from the root seed with a CRC-32 stream id, so a given
``(seed, stream name)`` pair yields the same numbers on every platform.
"""

from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

__all__ = [
    "Rng",
    "DTYPES",
    "resolve_dtype",
    "matmul",
    "softmax_cols",
    "softmax_rows",
    "softmax_vec",
    "sigmoid",
    "elementwise",
    "uniform_init",
    "finite_difference_gradient",
    "NonFiniteLossError",
]

DTYPES = {"float64": np.float64, "float32": np.float32}


def resolve_dtype(precision: str | np.dtype | type) -> np.dtype:
    if isinstance(precision, str):
        try:
            return np.dtype(DTYPES[precision])
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}; expected one of {sorted(DTYPES)}") from None
    return np.dtype(precision)


class Rng:
    """Deterministic PCG64 stream with named, independently derived children.

    ``Rng(seed).derive("init")`` always produces the same stream for the same
    seed; children of different names are statistically independent.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.key = tuple(_key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.key))
        )

    def derive(self, name: str | int) -> "Rng":
        stream_id = name if isinstance(name, int) else zlib.crc32(name.encode("utf-8"))
        return Rng(self.seed, self.key + (stream_id,))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def uniform(self, lo: float, hi: float, size) -> np.ndarray:
        return self._gen.uniform(lo, hi, size)

    def random(self, size) -> np.ndarray:
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo: int, hi: int, size=None):
        return self._gen.integers(lo, hi, size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key})"


def _as_matrix(m, name: str) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape[0]}x{a.shape[1]} times {b.shape[0]}x{b.shape[1]}")
    return a @ b


def softmax_cols(m) -> np.ndarray:
    """Column-wise softmax: every column of the result sums to one."""
    m = _as_matrix(m, "m")
    e = np.exp(m - m.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def softmax_rows(m) -> np.ndarray:
    m = _as_matrix(m, "m")
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_vec(x) -> np.ndarray:
    x = np.asarray(x)
    e = np.exp(x - x.max())
    return e / e.sum()


def sigmoid(x):
    # exp of a non-positive argument only, so neither branch can overflow
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


_NONLINEARITIES: dict[str, Callable] = {"sigmoid": sigmoid, "tanh": np.tanh}


def elementwise(m, fn: str) -> np.ndarray:
    try:
        f = _NONLINEARITIES[fn]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {fn!r}; expected one of {sorted(_NONLINEARITIES)}") from None
    return f(np.asarray(m))


def uniform_init(rows: int, cols: int, lo: float, hi: float, rng: Rng, dtype=np.float64) -> np.ndarray:
    if not lo < hi:
        raise ValueError(f"uniform_init requires lo < hi, got lo={lo}, hi={hi}")
    return rng.uniform(lo, hi, (rows, cols)).astype(dtype, copy=False)


class NonFiniteLossError(ArithmeticError):
    def __init__(self, coordinate: int, sign: str, value: float):
        super().__init__(f"non-finite loss {value!r} when probing coordinate {coordinate} ({sign}epsilon)")
        self.coordinate = coordinate


def finite_difference_gradient(
    loss_fn: Callable[[np.ndarray], float], params, epsilon: float = 1e-6, order: int = 2
) -> np.ndarray:
    """Finite-difference gradient of ``loss_fn`` at ``params``.

    ``order=2`` is the central difference ``(f(p + eps e_i) - f(p - eps e_i)) / 2 eps``.
    ``order=4`` uses the five-point stencil
    ``(-f(p + 2 eps) + 8 f(p + eps) - 8 f(p - eps) + f(p - 2 eps)) / 12 eps``,
    whose O(eps^4) truncation error allows a larger ``eps`` and so a much
    lower float64 roundoff floor.

    ``loss_fn`` receives a perturbed copy of ``params``. Runs in float64
    regardless of the input dtype.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if order == 2:
        stencil = ((1.0, 1.0), (-1.0, -1.0))
        denom = 2.0 * epsilon
    elif order == 4:
        stencil = ((2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0))
        denom = 12.0 * epsilon
    else:
        raise ValueError("order must be 2 or 4")
    theta = np.array(params, dtype=np.float64).ravel()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        acc = 0.0
        for step, weight in stencil:
            theta[i] = orig + step * epsilon
            f = float(loss_fn(theta.copy()))
            if not np.isfinite(f):
                theta[i] = orig
                raise NonFiniteLossError(i, f"{step:+g}*", f)
            acc += weight * f
        theta[i] = orig
        grad[i] = acc / denom
    return grad
