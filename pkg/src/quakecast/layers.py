"""Feedforward building blocks: convolution, pooling, normalization,
dropout, dense layers, and flatten helpers.

Convolution and max pooling are fused operations dispatched to the
active kernel backend; batch normalization, dropout, and dense layers
are composed from autodiff primitives so their gradients come from the
tape.  Layer classes own parameters; the module-level ``*_forward``
functions hold the math.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .autodiff import (
    Tensor,
    as_tensor,
    from_operation,
    matmul,
    power,
    relu,
    reshape,
    sigmoid,
    tanh,
    transpose,
)
from .errors import ConfigError, DomainError, ShapeError


def _linear(t: Tensor) -> Tensor:
    return t


ACTIVATIONS = {
    "linear": _linear,
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
}


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Trainable tensor drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Conv1D:
    """1-d cross-correlation with 'same' zero-padding.

    Weights have shape (out_channels, in_channels, kernel_size); output
    length is ceil(length / stride), so stride 1 preserves length.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        stride: int = 1,
        *,
        rng: np.random.Generator,
    ):
        if in_channels < 1 or out_channels < 1:
            raise ConfigError("channel counts must be >= 1")
        if kernel_size < 1 or stride < 1:
            raise ConfigError("kernel_size and stride must be >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        fan_in = in_channels * kernel_size
        self.weight = uniform_init(rng, (out_channels, in_channels, kernel_size), fan_in)
        self.bias = uniform_init(rng, (out_channels,), fan_in)

    def forward(self, x: Tensor) -> Tensor:
        return conv1d_forward(x, self)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


def conv1d_forward(x: Tensor, layer: Conv1D) -> Tensor:
    """Convolve (batch, channels, length) with the layer's filters."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"conv1d expects (batch, channels, length), got {x.shape}")
    if x.shape[1] != layer.in_channels:
        raise ShapeError(
            f"conv1d channel mismatch: input has {x.shape[1]} channels, "
            f"layer expects {layer.in_channels}"
        )
    weight, bias, stride = layer.weight, layer.bias, layer.stride
    xd = np.ascontiguousarray(x.data)
    y = kernels.conv1d_forward(xd, weight.data, bias.data, stride)

    def backward(gy):
        return kernels.conv1d_backward(xd, weight.data, stride, gy)

    return from_operation(y, (x, weight, bias), backward)


class MaxPool1D:
    """Windowed maximum with 'same' padding (pad value -inf)."""

    def __init__(self, size: int, stride: int = 1):
        if size < 1 or stride < 1:
            raise ConfigError("pool size and stride must be >= 1")
        self.size = size
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return maxpool1d(x, self.size, self.stride)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {}


def maxpool1d(x: Tensor, size: int, stride: int = 1) -> Tensor:
    """Max-pool (batch, channels, length); gradient goes to each argmax."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"maxpool1d expects (batch, channels, length), got {x.shape}")
    xd = np.ascontiguousarray(x.data)
    y, src = kernels.maxpool1d_forward(xd, size, stride)
    length = xd.shape[2]

    def backward(gy):
        return (kernels.maxpool1d_backward(src, length, gy),)

    return from_operation(y, (x,), backward)


class BatchNorm1D:
    """Per-channel batch normalization with running statistics.

    Train mode normalizes with biased batch statistics and updates the
    running mean/variance by exponential moving average; eval mode uses
    the running statistics.  Accepts (batch, channels) or
    (batch, channels, length); statistics pool over every axis except
    the channel axis.
    """

    def __init__(self, channels: int, *, epsilon: float = 1e-5, momentum: float = 0.9):
        if epsilon <= 0.0:
            raise ConfigError("epsilon must be > 0")
        if not 0.0 < momentum < 1.0:
            raise ConfigError("momentum must be in (0, 1)")
        self.channels = channels
        self.epsilon = epsilon
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.train_mode = True

    def forward(self, x: Tensor) -> Tensor:
        return batchnorm_forward(x, self, self.train_mode)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}


def batchnorm_forward(x: Tensor, state: BatchNorm1D, train: bool) -> Tensor:
    """Normalize per channel, scale by gamma, shift by beta."""
    x = as_tensor(x)
    if x.ndim not in (2, 3):
        raise ShapeError(f"batchnorm expects 2-d or 3-d input, got {x.shape}")
    if x.shape[1] != state.channels:
        raise ShapeError(
            f"batchnorm channel mismatch: input has {x.shape[1]}, state has {state.channels}"
        )
    channel_shape = (1, -1) if x.ndim == 2 else (1, -1, 1)
    axes = (0,) if x.ndim == 2 else (0, 2)
    if train:
        if x.shape[0] < 2:
            raise DomainError(
                f"batchnorm train mode needs batch size >= 2, got {x.shape[0]}"
            )
        mean = x.mean(axis=axes, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=axes, keepdims=True)
        m = state.momentum
        state.running_mean = m * state.running_mean + (1.0 - m) * mean.data.reshape(-1)
        state.running_var = m * state.running_var + (1.0 - m) * var.data.reshape(-1)
        xhat = centered / power(var + state.epsilon, 0.5)
    else:
        mean = state.running_mean.reshape(channel_shape)
        std = np.sqrt(state.running_var + state.epsilon).reshape(channel_shape)
        xhat = (x - mean) / Tensor(std)
    gamma = reshape(state.gamma, channel_shape)
    beta = reshape(state.beta, channel_shape)
    return xhat * gamma + beta


class Dropout:
    """Inverted dropout: train-mode survivors scaled by 1/(1-rate)."""

    def __init__(self, rate: float, *, rng: np.random.Generator | None = None):
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self.train_mode = True

    def forward(self, x: Tensor) -> Tensor:
        return dropout_forward(x, self.rate, self.train_mode, self.rng)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {}


def dropout_forward(
    x: Tensor, rate: float, train: bool, rng: np.random.Generator | None
) -> Tensor:
    """Zero elements with probability `rate` in train mode, else identity."""
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"dropout rate must be in [0, 1), got {rate}")
    x = as_tensor(x)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in train mode needs an RNG")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) >= rate) / keep
    return x * Tensor(mask)


class Dense:
    """Fully connected layer: y = activation(x @ W + b)."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        activation: str = "linear",
        *,
        rng: np.random.Generator,
    ):
        if in_features < 1 or out_features < 1:
            raise ConfigError("feature counts must be >= 1")
        if activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {activation!r}; choose from {sorted(ACTIVATIONS)}"
            )
        self.in_features = in_features
        self.out_features = out_features
        self.activation = activation
        self.weight = uniform_init(rng, (in_features, out_features), in_features)
        self.bias = uniform_init(rng, (out_features,), in_features)

    def forward(self, x: Tensor) -> Tensor:
        return dense_forward(x, self.weight, self.bias, self.activation)

    __call__ = forward

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


def dense_forward(
    x: Tensor, weight: Tensor, bias: Tensor, activation: str = "linear"
) -> Tensor:
    """Affine map plus activation on (batch, features) input."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"dense expects (batch, features), got {x.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"dense shape mismatch: input width {x.shape[1]}, "
            f"weight expects {weight.shape[0]}"
        )
    try:
        act = ACTIVATIONS[activation]
    except KeyError:
        raise ConfigError(
            f"unknown activation {activation!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None
    return act(matmul(x, weight) + bias)


def flatten(x: Tensor, mode: str = "features") -> Tensor:
    """Collapse (batch, channels, length) for the next block.

    mode 'features': -> (batch, channels * length) for dense heads.
    mode 'sequence': -> (batch, length, channels), reordering axes so
    the recurrent block sees one feature vector per timestep.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"flatten expects (batch, channels, length), got {x.shape}")
    if mode == "features":
        return reshape(x, (x.shape[0], -1))
    if mode == "sequence":
        return transpose(x, (0, 2, 1))
    raise ConfigError(f"flatten mode must be 'features' or 'sequence', got {mode!r}")
