"""Additive temporal attention over a hidden-state sequence.

Each timestep gets a scalar score tanh(w_h . h_t + b_h); a softmax over
time turns the scores into convex weights, and the context vector is
the weighted sum of the hidden states.  The weights are returned
alongside the context so they can be exported for inspection.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, as_tensor, matmul, reshape, softmax, tanh
from .errors import ConfigError, DomainError, ShapeError


class TemporalAttention:
    """Score weight vector and bias mapping hidden vectors to scalars."""

    def __init__(self, hidden_size: int, *, rng: np.random.Generator):
        if hidden_size < 1:
            raise ConfigError(f"hidden_size must be >= 1, got {hidden_size}")
        self.hidden_size = hidden_size
        bound = 1.0 / np.sqrt(hidden_size)
        self.w_h = Tensor(rng.uniform(-bound, bound, size=(hidden_size, 1)), requires_grad=True)
        self.b_h = Tensor(rng.uniform(-bound, bound), requires_grad=True)

    def forward(self, h: Tensor) -> tuple[Tensor, Tensor]:
        return attention_forward(h, self)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {"w_h": self.w_h, "b_h": self.b_h}


def attention_forward(h: Tensor, params: TemporalAttention) -> tuple[Tensor, Tensor]:
    """Reduce (batch, time, hidden) to one context vector per sample.

    Returns (context, weights) with context of shape (batch, hidden)
    and weights of shape (batch, time), each row summing to 1.
    """
    h = as_tensor(h)
    if h.ndim != 3:
        raise ShapeError(f"attention expects (batch, time, hidden), got {h.shape}")
    batch, steps, hidden = h.shape
    if steps < 1:
        raise DomainError("attention needs at least one timestep")
    if hidden != params.hidden_size:
        raise ShapeError(
            f"attention width mismatch: input hidden {hidden}, "
            f"params expect {params.hidden_size}"
        )
    flat = reshape(h, (batch * steps, hidden))
    scores = tanh(matmul(flat, params.w_h) + params.b_h)
    weights = softmax(reshape(scores, (batch, steps)), axis=1)
    context = (reshape(weights, (batch, steps, 1)) * h).sum(axis=1)
    return context, weights
