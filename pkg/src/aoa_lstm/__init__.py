"""Attention-over-attention LSTM for aspect-level sentiment classification."""

from .kernels import backend

__version__ = "0.1.0"
__all__ = ["backend", "__version__"]
