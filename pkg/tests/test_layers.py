"""Layer semantics and gradient checks: convolution, pooling, batch
norm, dropout, dense, and flatten."""

import numpy as np
import numpy.testing as npt
import pytest

from conftest import check_gradients, fixed_projection
from quakecast.autodiff import Tensor
from quakecast.errors import ConfigError, DomainError, ShapeError
from quakecast.layers import (
    BatchNorm1D,
    Conv1D,
    Dense,
    Dropout,
    MaxPool1D,
    batchnorm_forward,
    conv1d_forward,
    dense_forward,
    dropout_forward,
    flatten,
    maxpool1d,
)


def test_conv1d_hand_example():
    layer = Conv1D(1, 1, kernel_size=2, rng=np.random.default_rng(0))
    layer.weight.data[:] = 1.0
    layer.bias.data[:] = 0.0
    out = conv1d_forward(Tensor(np.array([[[1.0, 2.0, 3.0]]])), layer)
    npt.assert_allclose(out.data, np.array([[[3.0, 5.0, 3.0]]]))


def test_conv1d_output_length_matches_ceil_rule():
    rng = np.random.default_rng(1)
    for stride in (1, 2, 3):
        layer = Conv1D(2, 3, kernel_size=3, stride=stride, rng=rng)
        out = conv1d_forward(Tensor(rng.standard_normal((2, 2, 10))), layer)
        assert out.data.shape == (2, 3, -(-10 // stride))


def test_conv1d_rejects_bad_input():
    layer = Conv1D(2, 3, kernel_size=3, rng=np.random.default_rng(0))
    with pytest.raises(ShapeError):
        conv1d_forward(Tensor(np.zeros((4, 10))), layer)
    with pytest.raises(ShapeError):
        conv1d_forward(Tensor(np.zeros((1, 5, 10))), layer)
    with pytest.raises(ConfigError):
        Conv1D(0, 3, kernel_size=3, rng=np.random.default_rng(0))


def test_conv1d_gradcheck():
    rng = np.random.default_rng(2)
    layer = Conv1D(2, 3, kernel_size=3, stride=1, rng=rng)
    raw = rng.standard_normal((2, 2, 6))
    x = Tensor(raw, requires_grad=True)
    direction = fixed_projection(rng, (2, 3, 6))

    def build_loss():
        x.zero_grad()
        layer.weight.zero_grad()
        layer.bias.zero_grad()
        return (conv1d_forward(x, layer) * direction).sum()

    check_gradients(
        build_loss,
        {
            "x": (raw, x),
            "weight": (layer.weight.data, layer.weight),
            "bias": (layer.bias.data, layer.bias),
        },
    )


def test_maxpool_hand_example():
    out = maxpool1d(Tensor(np.array([[[1.0, 3.0, 2.0]]])), 2, 1)
    npt.assert_allclose(out.data, np.array([[[3.0, 3.0, 2.0]]]))


def test_maxpool_gradient_routes_to_argmax_only():
    x = Tensor(np.array([[[1.0, 3.0, 2.0]]]), requires_grad=True)
    maxpool1d(x, 2, 1).sum().backward()
    # 3 wins the first two windows, 2 wins the last.
    npt.assert_allclose(x.grad, np.array([[[0.0, 2.0, 1.0]]]))


def test_maxpool_gradcheck_away_from_ties():
    rng = np.random.default_rng(3)
    # Distinct values keep max selection stable under perturbation.
    raw = rng.permutation(24).astype(np.float64).reshape(2, 2, 6) * 0.37
    x = Tensor(raw, requires_grad=True)
    direction = fixed_projection(rng, (2, 2, 3))

    def build_loss():
        x.zero_grad()
        return (maxpool1d(x, 2, 2) * direction).sum()

    check_gradients(build_loss, {"x": (raw, x)})


def test_batchnorm_hand_fixture():
    bn = BatchNorm1D(1, epsilon=1e-8)
    out = batchnorm_forward(Tensor(np.array([[1.0], [2.0], [3.0]])), bn, train=True)
    npt.assert_allclose(
        out.data.reshape(-1), np.array([-1.2247, 0.0, 1.2247]), atol=1e-4
    )


def test_batchnorm_normalizes_per_channel():
    rng = np.random.default_rng(4)
    bn = BatchNorm1D(3)
    x = Tensor(rng.standard_normal((16, 3, 5)) * 4.0 + 2.0)
    out = batchnorm_forward(x, bn, train=True).data
    npt.assert_allclose(out.mean(axis=(0, 2)), np.zeros(3), atol=1e-8)
    npt.assert_allclose(out.var(axis=(0, 2)), np.ones(3), atol=1e-4)


def test_batchnorm_running_stats_track_batches():
    rng = np.random.default_rng(5)
    bn = BatchNorm1D(2, momentum=0.5)
    x = rng.standard_normal((8, 2, 4)) + 3.0
    batchnorm_forward(Tensor(x), bn, train=True)
    expected_mean = 0.5 * np.zeros(2) + 0.5 * x.mean(axis=(0, 2))
    npt.assert_allclose(bn.running_mean, expected_mean, atol=1e-12)
    eval_out = batchnorm_forward(Tensor(x), bn, train=False).data
    manual = (x - bn.running_mean[:, None]) / np.sqrt(bn.running_var[:, None] + bn.epsilon)
    npt.assert_allclose(eval_out, manual, atol=1e-12)


def test_batchnorm_rejects_singleton_train_batch():
    bn = BatchNorm1D(2)
    with pytest.raises(DomainError):
        batchnorm_forward(Tensor(np.zeros((1, 2, 4))), bn, train=True)
    # Eval mode is fine with one sample.
    batchnorm_forward(Tensor(np.zeros((1, 2, 4))), bn, train=False)


def test_batchnorm_gradcheck():
    rng = np.random.default_rng(6)
    bn = BatchNorm1D(2)
    raw = rng.standard_normal((4, 2, 3))
    x = Tensor(raw, requires_grad=True)
    direction = fixed_projection(rng, (4, 2, 3))

    def build_loss():
        x.zero_grad()
        bn.gamma.zero_grad()
        bn.beta.zero_grad()
        return (batchnorm_forward(x, bn, train=True) * direction).sum()

    check_gradients(
        build_loss,
        {
            "x": (raw, x),
            "gamma": (bn.gamma.data, bn.gamma),
            "beta": (bn.beta.data, bn.beta),
        },
    )


def test_dropout_eval_and_zero_rate_are_identity():
    rng = np.random.default_rng(7)
    x = Tensor(rng.standard_normal((5, 4)))
    assert dropout_forward(x, 0.3, train=False, rng=None) is x
    assert dropout_forward(x, 0.0, train=True, rng=rng) is x


def test_dropout_train_mode_scales_survivors():
    rng = np.random.default_rng(8)
    x = Tensor(np.ones((200, 50)))
    out = dropout_forward(x, 0.25, train=True, rng=rng).data
    survivors = out[out != 0.0]
    npt.assert_allclose(survivors, np.full(survivors.shape, 1.0 / 0.75))
    # Inverted scaling keeps the expectation near identity.
    assert abs(out.mean() - 1.0) < 0.02
    assert abs((out == 0.0).mean() - 0.25) < 0.02


def test_dropout_needs_rng_in_train_mode():
    with pytest.raises(ConfigError):
        dropout_forward(Tensor(np.ones((2, 2))), 0.5, train=True, rng=None)
    with pytest.raises(DomainError):
        dropout_forward(Tensor(np.ones((2, 2))), 1.0, train=False, rng=None)
    with pytest.raises(ConfigError):
        Dropout(1.5)


def test_dropout_eval_passes_gradient_through():
    raw = np.ones((3, 2))
    x = Tensor(raw, requires_grad=True)
    dropout_forward(x, 0.4, train=False, rng=None).sum().backward()
    npt.assert_allclose(x.grad, np.ones((3, 2)))


def test_dense_matches_numpy_oracle():
    rng = np.random.default_rng(9)
    layer = Dense(4, 3, activation="tanh", rng=rng)
    x = rng.standard_normal((5, 4))
    out = dense_forward(Tensor(x), layer.weight, layer.bias, "tanh")
    npt.assert_allclose(out.data, np.tanh(x @ layer.weight.data + layer.bias.data), atol=1e-12)


def test_dense_rejects_mismatch_and_unknown_activation():
    rng = np.random.default_rng(10)
    layer = Dense(4, 3, rng=rng)
    with pytest.raises(ShapeError):
        dense_forward(Tensor(np.zeros((2, 5))), layer.weight, layer.bias)
    with pytest.raises(ConfigError):
        dense_forward(Tensor(np.zeros((2, 4))), layer.weight, layer.bias, "gelu")
    with pytest.raises(ConfigError):
        Dense(4, 3, activation="gelu", rng=rng)


@pytest.mark.parametrize("activation", ["linear", "relu", "sigmoid", "tanh"])
def test_dense_gradcheck(activation):
    rng = np.random.default_rng(11)
    layer = Dense(4, 3, activation=activation, rng=rng)
    raw = rng.standard_normal((5, 4)) + 0.1
    x = Tensor(raw, requires_grad=True)
    direction = fixed_projection(rng, (5, 3))

    def build_loss():
        x.zero_grad()
        layer.weight.zero_grad()
        layer.bias.zero_grad()
        return (dense_forward(x, layer.weight, layer.bias, activation) * direction).sum()

    check_gradients(
        build_loss,
        {
            "x": (raw, x),
            "weight": (layer.weight.data, layer.weight),
            "bias": (layer.bias.data, layer.bias),
        },
    )


def test_flatten_modes():
    x = Tensor(np.arange(24.0).reshape(2, 3, 4))
    feat = flatten(x, "features")
    assert feat.data.shape == (2, 12)
    npt.assert_allclose(feat.data, x.data.reshape(2, 12))
    seq = flatten(x, "sequence")
    assert seq.data.shape == (2, 4, 3)
    npt.assert_allclose(seq.data, x.data.transpose(0, 2, 1))
    with pytest.raises(ConfigError):
        flatten(x, "channels")
    with pytest.raises(ShapeError):
        flatten(Tensor(np.zeros((2, 3))), "features")


def test_maxpool_layer_state_validation():
    with pytest.raises(ConfigError):
        MaxPool1D(0)
    with pytest.raises(ConfigError):
        MaxPool1D(2, stride=0)


def test_uniform_init_bounds():
    rng = np.random.default_rng(12)
    conv = Conv1D(8, 16, kernel_size=5, rng=rng)
    bound = 1.0 / np.sqrt(8 * 5)
    assert np.all(np.abs(conv.weight.data) <= bound)
    assert conv.weight.data.std() > 0.0
