"""Numpy reference kernels for the hot numeric loops.

These are the fallback implementations selected when the compiled
extension is unavailable, and the ground truth the compiled kernels are
tested against.  All functions are pure: they take and return plain
float64 arrays and keep no state.

Conventions shared with the compiled backend:

* 1-d convolution is cross-correlation with zero 'same' padding; when
  the total padding is odd the extra element goes on the right.
* Max pooling pads with -inf and routes gradient to the first maximal
  element of each window.
* The LSTM weight matrix packs the four gates row-wise in the order
  forget, input, candidate, output: shape (4H, H + F), columns laid out
  as [previous hidden | current input].  Initial hidden and cell states
  are zero.
"""

from __future__ import annotations

import numpy as np

from ..autodiff import stable_sigmoid


def same_padding(length: int, window: int, stride: int) -> tuple[int, int, int]:
    """Return (output length, left pad, right pad) for 'same' padding."""
    out_len = -(-length // stride)
    total = max(0, (out_len - 1) * stride + window - length)
    left = total // 2
    return out_len, left, total - left


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    """Cross-correlate (B, C_in, L) with (C_out, C_in, K) filters."""
    batch, c_in, length = x.shape
    c_out, _, k = w.shape
    out_len, left, right = same_padding(length, k, stride)
    xp = np.zeros((batch, c_in, length + left + right))
    xp[:, :, left:left + length] = x
    span = (out_len - 1) * stride + 1
    y = np.empty((batch, c_out, out_len))
    y[:] = b[:, None]
    for t in range(k):
        segment = xp[:, :, t:t + span:stride]
        y += np.einsum("oi,bil->bol", w[:, :, t], segment, optimize=True)
    return y


def conv1d_backward(
    x: np.ndarray, w: np.ndarray, stride: int, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv1d_forward w.r.t. input, weights, and bias."""
    batch, c_in, length = x.shape
    c_out, _, k = w.shape
    out_len, left, right = same_padding(length, k, stride)
    xp = np.zeros((batch, c_in, length + left + right))
    xp[:, :, left:left + length] = x
    span = (out_len - 1) * stride + 1
    gxp = np.zeros_like(xp)
    gw = np.empty_like(w)
    for t in range(k):
        segment = xp[:, :, t:t + span:stride]
        gw[:, :, t] = np.einsum("bol,bil->oi", gy, segment, optimize=True)
        gxp[:, :, t:t + span:stride] += np.einsum(
            "bol,oi->bil", gy, w[:, :, t], optimize=True
        )
    gb = gy.sum(axis=(0, 2))
    gx = np.ascontiguousarray(gxp[:, :, left:left + length])
    return gx, gw, gb


def maxpool1d_forward(
    x: np.ndarray, size: int, stride: int
) -> tuple[np.ndarray, np.ndarray]:
    """Windowed maximum; returns (values, source index of each maximum)."""
    batch, channels, length = x.shape
    out_len, left, right = same_padding(length, size, stride)
    xp = np.full((batch, channels, length + left + right), -np.inf)
    xp[:, :, left:left + length] = x
    span = (out_len - 1) * stride + 1
    windows = np.stack(
        [xp[:, :, t:t + span:stride] for t in range(size)], axis=-1
    )
    within = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, within[..., None], axis=-1)[..., 0]
    src = np.arange(out_len)[None, None, :] * stride - left + within
    return y, src.astype(np.int64)


def maxpool1d_backward(src: np.ndarray, length: int, gy: np.ndarray) -> np.ndarray:
    """Scatter pooled gradients back to the argmax positions."""
    batch, channels, out_len = gy.shape
    gx = np.zeros((batch, channels, length))
    b_idx = np.arange(batch)[:, None, None]
    c_idx = np.arange(channels)[None, :, None]
    np.add.at(gx, (b_idx, c_idx, src), gy)
    return gx


def lstm_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Run a full LSTM pass over (B, T, F); returns hidden states and cache.

    The cache holds the post-activation gates, cell states, tanh of the
    cell states, and the hidden states, everything the backward pass
    needs without recomputation.
    """
    batch, steps, features = x.shape
    h4 = w.shape[0]
    hidden = h4 // 4
    w_hid = w[:, :hidden]
    w_in = w[:, hidden:]
    xproj = (x.reshape(batch * steps, features) @ w_in.T).reshape(batch, steps, h4) + b
    acts = np.empty((batch, steps, h4))
    cell = np.empty((batch, steps, hidden))
    cell_tanh = np.empty((batch, steps, hidden))
    h_seq = np.empty((batch, steps, hidden))
    h_prev = np.zeros((batch, hidden))
    c_prev = np.zeros((batch, hidden))
    for t in range(steps):
        pre = xproj[:, t] + h_prev @ w_hid.T
        a = np.empty_like(pre)
        a[:, :2 * hidden] = stable_sigmoid(pre[:, :2 * hidden])
        a[:, 2 * hidden:3 * hidden] = np.tanh(pre[:, 2 * hidden:3 * hidden])
        a[:, 3 * hidden:] = stable_sigmoid(pre[:, 3 * hidden:])
        c_t = a[:, :hidden] * c_prev + a[:, hidden:2 * hidden] * a[:, 2 * hidden:3 * hidden]
        tc_t = np.tanh(c_t)
        h_t = a[:, 3 * hidden:] * tc_t
        acts[:, t] = a
        cell[:, t] = c_t
        cell_tanh[:, t] = tc_t
        h_seq[:, t] = h_t
        h_prev, c_prev = h_t, c_t
    return h_seq, (acts, cell, cell_tanh, h_seq)


def lstm_backward(
    x: np.ndarray,
    w: np.ndarray,
    cache: tuple[np.ndarray, ...],
    gh: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagate through time; returns (d_input, d_weights, d_bias)."""
    acts, cell, cell_tanh, h_seq = cache
    batch, steps, features = x.shape
    hidden = cell.shape[2]
    h4 = 4 * hidden
    w_hid = w[:, :hidden]
    w_in = w[:, hidden:]
    dpre_all = np.empty((batch, steps, h4))
    gx = np.empty_like(x)
    dh_rec = np.zeros((batch, hidden))
    dc_rec = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        a = acts[:, t]
        f = a[:, :hidden]
        i = a[:, hidden:2 * hidden]
        g = a[:, 2 * hidden:3 * hidden]
        o = a[:, 3 * hidden:]
        tc = cell_tanh[:, t]
        dh = gh[:, t] + dh_rec
        dc = dh * o * (1.0 - tc * tc) + dc_rec
        c_prev = cell[:, t - 1] if t > 0 else 0.0
        dpre = dpre_all[:, t]
        dpre[:, :hidden] = dc * c_prev * f * (1.0 - f)
        dpre[:, hidden:2 * hidden] = dc * g * i * (1.0 - i)
        dpre[:, 2 * hidden:3 * hidden] = dc * i * (1.0 - g * g)
        dpre[:, 3 * hidden:] = dh * tc * o * (1.0 - o)
        dc_rec = dc * f
        dhx = dpre @ w
        dh_rec = dhx[:, :hidden]
        gx[:, t] = dhx[:, hidden:]
    h_prev_all = np.zeros_like(h_seq)
    h_prev_all[:, 1:] = h_seq[:, :-1]
    dpre_flat = dpre_all.reshape(batch * steps, h4)
    gw = np.empty_like(w)
    gw[:, :hidden] = dpre_flat.T @ h_prev_all.reshape(batch * steps, hidden)
    gw[:, hidden:] = dpre_flat.T @ x.reshape(batch * steps, features)
    gb = dpre_flat.sum(axis=0)
    return gx, gw, gb
