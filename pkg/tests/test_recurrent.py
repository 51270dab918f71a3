"""LSTM cell, sequence runner, and BiLSTM: transcription oracle,
closed forms, direction contracts, and backpropagation through time."""

import numpy as np
import numpy.testing as npt
import pytest

from conftest import check_gradients, fixed_projection
from quakecast.autodiff import Tensor
from quakecast.errors import ConfigError, DomainError, ShapeError
from quakecast.recurrent import (
    BiLSTM,
    LSTMCell,
    bilstm_forward,
    lstm_cell_step,
    lstm_forward,
)


def oracle_step(cell, x_vec, h_vec, c_vec):
    """One recurrence step written out gate by gate for a single sample,
    kept deliberately independent of the library's vectorized path."""

    def sig(z):
        return 1.0 / (1.0 + np.exp(-z))

    hx = np.concatenate([h_vec, x_vec])
    f = sig(cell.w_f.data @ hx + cell.b_f.data)
    i = sig(cell.w_i.data @ hx + cell.b_i.data)
    candidate = np.tanh(cell.w_c.data @ hx + cell.b_c.data)
    o = sig(cell.w_o.data @ hx + cell.b_o.data)
    c_new = f * c_vec + i * candidate
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def test_cell_matches_per_sample_oracle():
    rng = np.random.default_rng(0)
    cell = LSTMCell(3, 4, rng=rng)
    for trial in range(200):
        x = rng.standard_normal((2, 3))
        h = rng.standard_normal((2, 4))
        c = rng.standard_normal((2, 4))
        h_new, c_new = lstm_cell_step(Tensor(x), Tensor(h), Tensor(c), cell)
        for row in range(2):
            h_exp, c_exp = oracle_step(cell, x[row], h[row], c[row])
            npt.assert_allclose(h_new.data[row], h_exp, atol=1e-12)
            npt.assert_allclose(c_new.data[row], c_exp, atol=1e-12)


def test_zero_weight_closed_form():
    # With all weights and biases zero: every gate is 1/2 and the
    # candidate is 0, so c halves each step and h = tanh(c) / 2.
    rng = np.random.default_rng(1)
    cell = LSTMCell(2, 3, rng=rng)
    cell.weight.data[:] = 0.0
    cell.bias.data[:] = 0.0
    c0 = rng.standard_normal((4, 3))
    h_new, c_new = lstm_cell_step(
        Tensor(np.zeros((4, 2))), Tensor(np.zeros((4, 3))), Tensor(c0), cell
    )
    npt.assert_allclose(c_new.data, 0.5 * c0, atol=1e-14)
    npt.assert_allclose(h_new.data, 0.5 * np.tanh(0.5 * c0), atol=1e-14)


def test_forget_bias_initialized_to_one():
    cell = LSTMCell(2, 5, rng=np.random.default_rng(2))
    npt.assert_allclose(cell.b_f.data, np.ones(5))
    bound = 1.0 / np.sqrt(5)
    assert np.all(np.abs(cell.weight.data) <= bound)


def test_sequence_runner_matches_unrolled_cell_steps():
    rng = np.random.default_rng(3)
    cell = LSTMCell(3, 4, rng=rng)
    x = rng.standard_normal((2, 6, 3))
    seq = lstm_forward(Tensor(x), cell).data
    h = Tensor(np.zeros((2, 4)))
    c = Tensor(np.zeros((2, 4)))
    for t in range(6):
        h, c = lstm_cell_step(Tensor(x[:, t, :]), h, c, cell)
        npt.assert_allclose(seq[:, t, :], h.data, atol=1e-12)


def test_reverse_runner_equals_flip_run_flip():
    rng = np.random.default_rng(4)
    cell = LSTMCell(3, 4, rng=rng)
    x = rng.standard_normal((2, 5, 3))
    reverse = lstm_forward(Tensor(x), cell, reverse=True).data
    flipped = lstm_forward(Tensor(x[:, ::-1, :].copy()), cell).data[:, ::-1, :]
    npt.assert_allclose(reverse, flipped, atol=1e-13)


def test_shape_and_domain_errors():
    rng = np.random.default_rng(5)
    cell = LSTMCell(3, 4, rng=rng)
    with pytest.raises(ShapeError):
        lstm_forward(Tensor(np.zeros((2, 5))), cell)
    with pytest.raises(ShapeError):
        lstm_forward(Tensor(np.zeros((2, 5, 7))), cell)
    with pytest.raises(DomainError):
        lstm_forward(Tensor(np.zeros((2, 0, 3))), cell)
    with pytest.raises(ShapeError):
        lstm_cell_step(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 4))), Tensor(np.zeros((2, 4))), cell)
    with pytest.raises(ConfigError):
        LSTMCell(0, 4, rng=rng)
    with pytest.raises(ConfigError):
        BiLSTM(3, 4, combine="average", rng=rng)


def test_bilstm_sum_combines_directions():
    rng = np.random.default_rng(6)
    layer = BiLSTM(3, 4, combine="sum", rng=rng)
    x = Tensor(rng.standard_normal((2, 5, 3)))
    out = bilstm_forward(x, layer).data
    ahead = lstm_forward(x, layer.forward_cell).data
    behind = lstm_forward(x, layer.backward_cell, reverse=True).data
    npt.assert_allclose(out, ahead + behind, atol=1e-13)
    assert layer.out_width == 4


def test_bilstm_concat_widens_output():
    rng = np.random.default_rng(7)
    layer = BiLSTM(3, 4, combine="concat", rng=rng)
    out = bilstm_forward(Tensor(rng.standard_normal((2, 5, 3))), layer)
    assert out.data.shape == (2, 5, 8)
    assert layer.out_width == 8


def test_bilstm_parameters_are_prefixed_and_independent():
    layer = BiLSTM(3, 4, rng=np.random.default_rng(8))
    params = layer.parameters()
    assert set(params) == {
        "forward.weight",
        "forward.bias",
        "backward.weight",
        "backward.bias",
    }
    assert not np.allclose(params["forward.weight"].data, params["backward.weight"].data)


def test_cell_step_gradcheck():
    rng = np.random.default_rng(9)
    cell = LSTMCell(3, 2, rng=rng)
    x_raw = rng.standard_normal((2, 3))
    h_raw = rng.standard_normal((2, 2))
    c_raw = rng.standard_normal((2, 2))
    x, h, c = Tensor(x_raw, requires_grad=True), Tensor(h_raw, requires_grad=True), Tensor(c_raw, requires_grad=True)
    dir_h = fixed_projection(rng, (2, 2))
    dir_c = fixed_projection(rng, (2, 2))

    def build_loss():
        for t in (x, h, c, cell.weight, cell.bias):
            t.zero_grad()
        h_new, c_new = lstm_cell_step(x, h, c, cell)
        return (h_new * dir_h).sum() + (c_new * dir_c).sum()

    check_gradients(
        build_loss,
        {
            "x": (x_raw, x),
            "h": (h_raw, h),
            "c": (c_raw, c),
            "weight": (cell.weight.data, cell.weight),
            "bias": (cell.bias.data, cell.bias),
        },
    )


@pytest.mark.parametrize("reverse", [False, True])
def test_sequence_gradcheck_through_time(reverse):
    rng = np.random.default_rng(10)
    cell = LSTMCell(2, 3, rng=rng)
    raw = rng.standard_normal((2, 4, 2))
    x = Tensor(raw, requires_grad=True)
    direction = fixed_projection(rng, (2, 4, 3))

    def build_loss():
        x.zero_grad()
        cell.weight.zero_grad()
        cell.bias.zero_grad()
        return (lstm_forward(x, cell, reverse=reverse) * direction).sum()

    check_gradients(
        build_loss,
        {
            "x": (raw, x),
            "weight": (cell.weight.data, cell.weight),
            "bias": (cell.bias.data, cell.bias),
        },
    )


def test_bilstm_gradcheck():
    rng = np.random.default_rng(11)
    layer = BiLSTM(2, 3, combine="sum", rng=rng)
    raw = rng.standard_normal((2, 4, 2))
    x = Tensor(raw, requires_grad=True)
    direction = fixed_projection(rng, (2, 4, 3))
    params = layer.parameters()

    def build_loss():
        x.zero_grad()
        for p in params.values():
            p.zero_grad()
        return (bilstm_forward(x, layer) * direction).sum()

    arrays = {"x": (raw, x)}
    arrays.update({name: (p.data, p) for name, p in params.items()})
    check_gradients(build_loss, arrays)
