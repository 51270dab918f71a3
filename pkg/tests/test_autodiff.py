"""Tape and elementary op gradients, checked against central
finite differences and hand-derived closed forms."""

import numpy as np
import numpy.testing as npt
import pytest

from conftest import check_gradients, fixed_projection
from quakecast.autodiff import (
    Tensor,
    concat,
    from_operation,
    no_grad,
    relu,
    sigmoid,
    softmax,
    stable_sigmoid,
    tanh,
)


def test_add_mul_closed_form():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    b = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    loss = ((a + b) * a).sum()
    loss.backward()
    # d/da (a^2 + ab) = 2a + b, d/db = a
    npt.assert_allclose(a.grad, np.array([5.0, 8.0]))
    npt.assert_allclose(b.grad, np.array([1.0, 2.0]))


def test_repeated_backward_accumulates():
    a = Tensor(np.array([2.0]), requires_grad=True)
    loss = (a * a).sum()
    loss.backward()
    loss.backward()
    npt.assert_allclose(a.grad, np.array([8.0]))


def test_zero_grad_resets():
    a = Tensor(np.array([2.0]), requires_grad=True)
    (a * a).sum().backward()
    a.zero_grad()
    assert a.grad is None


def test_no_grad_records_nothing():
    a = Tensor(np.array([2.0]), requires_grad=True)
    with no_grad():
        out = (a * a).sum()
    out.backward()
    assert a.grad is None


def test_broadcast_gradient_sums_over_expanded_axes():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.ones((4,)), requires_grad=True)
    (a + b).sum().backward()
    npt.assert_allclose(a.grad, np.ones((3, 4)))
    npt.assert_allclose(b.grad, np.full((4,), 3.0))


def test_diamond_graph_accumulates_both_paths():
    a = Tensor(np.array([3.0]), requires_grad=True)
    b = a * a
    loss = (b + b).sum()
    loss.backward()
    npt.assert_allclose(a.grad, np.array([12.0]))


def test_getitem_backward_handles_duplicate_rows():
    a = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    picked = a[np.array([0, 0, 2])]
    picked.sum().backward()
    npt.assert_allclose(a.grad, np.array([[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]]))


def test_matmul_gradients_match_closed_form():
    rng = np.random.default_rng(0)
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    direction = fixed_projection(rng, (3, 5))
    ((a @ b) * direction).sum().backward()
    npt.assert_allclose(a.grad, direction.data @ b.data.T, atol=1e-12)
    npt.assert_allclose(b.grad, a.data.T @ direction.data, atol=1e-12)


@pytest.mark.parametrize(
    "op",
    [
        lambda t: t + t * 2.0,
        lambda t: t - t * 0.5,
        lambda t: t * t,
        lambda t: t / 2.5,
        lambda t: t ** 3.0,
        lambda t: sigmoid(t),
        lambda t: tanh(t),
        lambda t: relu(t * 10.0),
        lambda t: softmax(t, axis=1),
        lambda t: t.reshape((6, 2)),
        lambda t: t.transpose((1, 0, 2)),
        lambda t: t.mean(axis=1),
        lambda t: t.sum(axis=(0, 2)),
    ],
)
def test_elementwise_and_shape_ops_gradcheck(op):
    rng = np.random.default_rng(7)
    raw = rng.uniform(0.3, 1.7, size=(3, 2, 2))
    tensor = Tensor(raw, requires_grad=True)
    first = op(tensor)
    direction = fixed_projection(rng, first.data.shape)

    def build_loss():
        tensor.zero_grad()
        return (op(tensor) * direction).sum()

    check_gradients(build_loss, {"x": (raw, tensor)})


def test_concat_gradcheck():
    rng = np.random.default_rng(3)
    left_raw = rng.standard_normal((2, 3))
    right_raw = rng.standard_normal((2, 2))
    left = Tensor(left_raw, requires_grad=True)
    right = Tensor(right_raw, requires_grad=True)
    direction = fixed_projection(rng, (2, 5))

    def build_loss():
        left.zero_grad()
        right.zero_grad()
        return (concat((left, right), axis=1) * direction).sum()

    check_gradients(build_loss, {"left": (left_raw, left), "right": (right_raw, right)})


def test_stable_sigmoid_extremes():
    out = stable_sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert np.all(np.isfinite(out))
    npt.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(11)
    t = Tensor(rng.standard_normal((4, 6)) * 50.0)
    out = softmax(t, axis=1)
    npt.assert_allclose(out.data.sum(axis=1), np.ones(4), atol=1e-12)
    assert np.all(np.isfinite(out.data))


def test_from_operation_custom_backward():
    raw = np.array([1.0, 2.0, 3.0])
    a = Tensor(raw, requires_grad=True)

    def backward(grad):
        return (grad * 2.0 * raw,)

    out = from_operation(raw * raw, (a,), backward)
    out.sum().backward()
    npt.assert_allclose(a.grad, 2.0 * raw)


def test_detached_tensor_is_constant():
    a = Tensor(np.array([1.0, 2.0]))
    b = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    (a * b).sum().backward()
    assert a.grad is None
    npt.assert_allclose(b.grad, a.data)
