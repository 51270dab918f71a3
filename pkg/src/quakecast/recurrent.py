"""LSTM cell, directional sequence pass, and bidirectional wrapper.

The cell keeps the four gate weight matrices packed row-wise into one
(4 * hidden, hidden + input) array in the order forget, input,
candidate, output, over the concatenated [h_prev, x_t] vector; per-gate
views are exposed for inspection.  A single cell step is composed from
autodiff primitives; full sequence passes run as one fused tape node
backed by the kernel backend, whose manual backward is the
backpropagation-through-time recurrence.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .autodiff import (
    Tensor,
    as_tensor,
    concat,
    from_operation,
    matmul,
    sigmoid,
    tanh,
    transpose,
)
from .errors import ConfigError, DomainError, ShapeError


class LSTMCell:
    """Gate parameters and sizes for one LSTM direction.

    Weights start uniform in [-1/sqrt(hidden), +1/sqrt(hidden)]; the
    forget-gate bias starts at 1.0.  Initial hidden and cell states are
    zero.
    """

    def __init__(self, input_size: int, hidden_size: int, *, rng: np.random.Generator):
        if input_size < 1 or hidden_size < 1:
            raise ConfigError("input_size and hidden_size must be >= 1")
        self.input_size = input_size
        self.hidden_size = hidden_size
        bound = 1.0 / np.sqrt(hidden_size)
        weight = rng.uniform(-bound, bound, size=(4 * hidden_size, hidden_size + input_size))
        bias = rng.uniform(-bound, bound, size=4 * hidden_size)
        bias[:hidden_size] = 1.0
        self.weight = Tensor(weight, requires_grad=True)
        self.bias = Tensor(bias, requires_grad=True)

    # Per-gate views into the packed storage (mutating them mutates the cell).

    @property
    def w_f(self) -> np.ndarray:
        return self.weight.data[: self.hidden_size]

    @property
    def w_i(self) -> np.ndarray:
        return self.weight.data[self.hidden_size:2 * self.hidden_size]

    @property
    def w_c(self) -> np.ndarray:
        return self.weight.data[2 * self.hidden_size:3 * self.hidden_size]

    @property
    def w_o(self) -> np.ndarray:
        return self.weight.data[3 * self.hidden_size:]

    @property
    def b_f(self) -> np.ndarray:
        return self.bias.data[: self.hidden_size]

    @property
    def b_i(self) -> np.ndarray:
        return self.bias.data[self.hidden_size:2 * self.hidden_size]

    @property
    def b_c(self) -> np.ndarray:
        return self.bias.data[2 * self.hidden_size:3 * self.hidden_size]

    @property
    def b_o(self) -> np.ndarray:
        return self.bias.data[3 * self.hidden_size:]

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


def lstm_cell_step(
    x_t: Tensor, h_prev: Tensor, c_prev: Tensor, params: LSTMCell
) -> tuple[Tensor, Tensor]:
    """One recurrence step: gates from [h_prev, x_t], new cell and hidden.

    forget = sigmoid(W_f [h, x] + b_f); input gate likewise; candidate =
    tanh(W_c [h, x] + b_c); c_t = forget * c_prev + input * candidate;
    h_t = output * tanh(c_t).
    """
    x_t, h_prev, c_prev = as_tensor(x_t), as_tensor(h_prev), as_tensor(c_prev)
    if x_t.ndim != 2 or h_prev.ndim != 2 or c_prev.ndim != 2:
        raise ShapeError(
            f"lstm_cell_step expects 2-d (batch, width) inputs, got "
            f"{x_t.shape}, {h_prev.shape}, {c_prev.shape}"
        )
    hidden = params.hidden_size
    if (
        x_t.shape[1] != params.input_size
        or h_prev.shape[1] != hidden
        or c_prev.shape[1] != hidden
        or not (x_t.shape[0] == h_prev.shape[0] == c_prev.shape[0])
    ):
        raise ShapeError(
            f"lstm_cell_step shape mismatch: x {x_t.shape}, h {h_prev.shape}, "
            f"c {c_prev.shape} against input_size {params.input_size}, "
            f"hidden_size {hidden}"
        )
    hx = concat((h_prev, x_t), axis=1)
    pre = matmul(hx, transpose(params.weight)) + params.bias
    f = sigmoid(pre[:, :hidden])
    i = sigmoid(pre[:, hidden:2 * hidden])
    g = tanh(pre[:, 2 * hidden:3 * hidden])
    o = sigmoid(pre[:, 3 * hidden:])
    c_t = f * c_prev + i * g
    h_t = o * tanh(c_t)
    return h_t, c_t


def lstm_forward(x: Tensor, cell: LSTMCell, reverse: bool = False) -> Tensor:
    """Run the cell over (batch, time, features) from zero initial state.

    With reverse=True the steps run in reversed time order and the
    output is flipped back, so output[t] always aligns with input[t].
    The whole pass is one fused tape node.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"lstm_forward expects (batch, time, features), got {x.shape}")
    if x.shape[1] < 1:
        raise DomainError("lstm_forward needs at least one timestep")
    if x.shape[2] != cell.input_size:
        raise ShapeError(
            f"lstm_forward feature mismatch: input has {x.shape[2]}, "
            f"cell expects {cell.input_size}"
        )
    weight, bias = cell.weight, cell.bias
    xd = np.ascontiguousarray(x.data[:, ::-1] if reverse else x.data)
    h, cache = kernels.lstm_forward(xd, weight.data, bias.data)
    out = np.ascontiguousarray(h[:, ::-1]) if reverse else h

    def backward(gh):
        gh_fwd = np.ascontiguousarray(gh[:, ::-1]) if reverse else gh
        gx, gw, gb = kernels.lstm_backward(xd, weight.data, cache, gh_fwd)
        if reverse:
            gx = np.ascontiguousarray(gx[:, ::-1])
        return gx, gw, gb

    return from_operation(out, (x, weight, bias), backward)


class BiLSTM:
    """Two LSTM passes, forward and backward in time, combined per step.

    combine 'sum' adds the two hidden sequences elementwise (output
    width = hidden_size); 'concat' stacks them (width = 2 * hidden_size).
    """

    def __init__(
        self,
        input_size: int,
        hidden_size: int,
        combine: str = "sum",
        *,
        rng: np.random.Generator,
    ):
        if combine not in ("sum", "concat"):
            raise ConfigError(f"combine must be 'sum' or 'concat', got {combine!r}")
        self.hidden_size = hidden_size
        self.combine = combine
        self.forward_cell = LSTMCell(input_size, hidden_size, rng=rng)
        self.backward_cell = LSTMCell(input_size, hidden_size, rng=rng)

    @property
    def out_width(self) -> int:
        return self.hidden_size if self.combine == "sum" else 2 * self.hidden_size

    def forward(self, x: Tensor) -> Tensor:
        return bilstm_forward(x, self)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        named = {}
        for prefix, cell in (("forward", self.forward_cell), ("backward", self.backward_cell)):
            for key, value in cell.parameters().items():
                named[f"{prefix}.{key}"] = value
        return named


def bilstm_forward(x: Tensor, layer: BiLSTM) -> Tensor:
    """Combine the forward-time and reverse-time passes of both cells."""
    ahead = lstm_forward(x, layer.forward_cell, reverse=False)
    behind = lstm_forward(x, layer.backward_cell, reverse=True)
    if layer.combine == "sum":
        return ahead + behind
    return concat((ahead, behind), axis=2)
