# cython: language_level=3, boundscheck=False, wraparound=False
# cython: cdivision=True, initializedcheck=False
"""Compiled kernels: 1-d convolution, max pooling, and fused LSTM passes.

Matrix products go through BLAS dgemm; gate math, im2col packing, and
scatter loops are plain C loops.  Shapes, padding rules, gate packing,
and tie-breaking mirror quakecast.kernels.reference exactly, which is
what the parity tests assert.
"""

from libc.math cimport exp, tanh, INFINITY

import numpy as np

from scipy.linalg.cython_blas cimport dgemm


cdef inline double sigmoid(double v) noexcept nogil:
    cdef double e
    if v >= 0.0:
        return 1.0 / (1.0 + exp(-v))
    e = exp(v)
    return e / (1.0 + e)


cdef void rm_gemm(char ta, char tb, int m, int n, int k, double alpha,
                  const double* a, int lda, const double* b, int ldb,
                  double beta, double* c, int ldc) noexcept nogil:
    # Row-major product C(m,n) = alpha * op(A)(m,k) @ op(B)(k,n) + beta * C
    # on top of column-major BLAS, computed as C^T = op(B)^T @ op(A)^T.
    # lda/ldb/ldc are the row strides of the row-major buffers.
    dgemm(&tb, &ta, &n, &m, &k, &alpha, <double*> b, &ldb,
          <double*> a, &lda, &beta, c, &ldc)


cdef inline void same_padding(Py_ssize_t length, Py_ssize_t window,
                              Py_ssize_t stride, Py_ssize_t* out_len,
                              Py_ssize_t* left) noexcept nogil:
    cdef Py_ssize_t total
    out_len[0] = (length + stride - 1) // stride
    total = (out_len[0] - 1) * stride + window - length
    if total < 0:
        total = 0
    left[0] = total // 2


def conv1d_forward(x, w, b, int stride):
    """Cross-correlate (B, C_in, L) with (C_out, C_in, K) filters."""
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t batch = xv.shape[0], c_in = xv.shape[1], length = xv.shape[2]
    cdef Py_ssize_t c_out = wv.shape[0], k = wv.shape[2]
    cdef Py_ssize_t out_len, left
    same_padding(length, k, stride, &out_len, &left)

    cols_arr = np.zeros((batch * out_len, c_in * k))
    cdef double[:, ::1] cols = cols_arr
    cdef Py_ssize_t bb, p, ci, t, src, row, co
    with nogil:
        for bb in range(batch):
            for p in range(out_len):
                row = bb * out_len + p
                for ci in range(c_in):
                    for t in range(k):
                        src = p * stride - left + t
                        if 0 <= src < length:
                            cols[row, ci * k + t] = xv[bb, ci, src]

    y2_arr = np.empty((batch * out_len, c_out))
    cdef double[:, ::1] y2 = y2_arr
    rm_gemm(c'N', c'T', <int> (batch * out_len), <int> c_out, <int> (c_in * k),
            1.0, &cols[0, 0], <int> (c_in * k), &wv[0, 0, 0], <int> (c_in * k),
            0.0, &y2[0, 0], <int> c_out)

    y_arr = np.empty((batch, c_out, out_len))
    cdef double[:, :, ::1] yv = y_arr
    with nogil:
        for bb in range(batch):
            for co in range(c_out):
                for p in range(out_len):
                    yv[bb, co, p] = y2[bb * out_len + p, co] + bv[co]
    return y_arr


def conv1d_backward(x, w, int stride, gy):
    """Gradients of conv1d_forward w.r.t. input, weights, and bias."""
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, ::1] gyv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t batch = xv.shape[0], c_in = xv.shape[1], length = xv.shape[2]
    cdef Py_ssize_t c_out = wv.shape[0], k = wv.shape[2]
    cdef Py_ssize_t out_len, left
    same_padding(length, k, stride, &out_len, &left)

    cols_arr = np.zeros((batch * out_len, c_in * k))
    gy2_arr = np.empty((batch * out_len, c_out))
    cdef double[:, ::1] cols = cols_arr
    cdef double[:, ::1] gy2 = gy2_arr
    cdef Py_ssize_t bb, p, ci, t, src, row, co
    with nogil:
        for bb in range(batch):
            for p in range(out_len):
                row = bb * out_len + p
                for ci in range(c_in):
                    for t in range(k):
                        src = p * stride - left + t
                        if 0 <= src < length:
                            cols[row, ci * k + t] = xv[bb, ci, src]
                for co in range(c_out):
                    gy2[row, co] = gyv[bb, co, p]

    gw_arr = np.empty((c_out, c_in, k))
    gcols_arr = np.empty((batch * out_len, c_in * k))
    cdef double[:, :, ::1] gwv = gw_arr
    cdef double[:, ::1] gcols = gcols_arr
    rm_gemm(c'T', c'N', <int> c_out, <int> (c_in * k), <int> (batch * out_len),
            1.0, &gy2[0, 0], <int> c_out, &cols[0, 0], <int> (c_in * k),
            0.0, &gwv[0, 0, 0], <int> (c_in * k))
    rm_gemm(c'N', c'N', <int> (batch * out_len), <int> (c_in * k), <int> c_out,
            1.0, &gy2[0, 0], <int> c_out, &wv[0, 0, 0], <int> (c_in * k),
            0.0, &gcols[0, 0], <int> (c_in * k))

    gx_arr = np.zeros((batch, c_in, length))
    gb_arr = np.zeros(c_out)
    cdef double[:, :, ::1] gxv = gx_arr
    cdef double[::1] gbv = gb_arr
    with nogil:
        for bb in range(batch):
            for p in range(out_len):
                row = bb * out_len + p
                for ci in range(c_in):
                    for t in range(k):
                        src = p * stride - left + t
                        if 0 <= src < length:
                            gxv[bb, ci, src] += gcols[row, ci * k + t]
                for co in range(c_out):
                    gbv[co] += gy2[row, co]
    return gx_arr, gw_arr, gb_arr


def maxpool1d_forward(x, int size, int stride):
    """Windowed maximum; returns (values, source index of each maximum)."""
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t batch = xv.shape[0], channels = xv.shape[1], length = xv.shape[2]
    cdef Py_ssize_t out_len, left
    same_padding(length, size, stride, &out_len, &left)

    y_arr = np.empty((batch, channels, out_len))
    src_arr = np.empty((batch, channels, out_len), dtype=np.int64)
    cdef double[:, :, ::1] yv = y_arr
    cdef long long[:, :, ::1] sv = src_arr
    cdef Py_ssize_t bb, ci, p, t, s
    cdef double best, v
    cdef Py_ssize_t best_src
    with nogil:
        for bb in range(batch):
            for ci in range(channels):
                for p in range(out_len):
                    best = -INFINITY
                    best_src = -1
                    for t in range(size):
                        s = p * stride - left + t
                        if 0 <= s < length:
                            v = xv[bb, ci, s]
                            if v > best:
                                best = v
                                best_src = s
                    yv[bb, ci, p] = best
                    sv[bb, ci, p] = best_src
    return y_arr, src_arr


def maxpool1d_backward(src, Py_ssize_t length, gy):
    """Scatter pooled gradients back to the argmax positions."""
    cdef long long[:, :, ::1] sv = np.ascontiguousarray(src, dtype=np.int64)
    cdef double[:, :, ::1] gyv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t batch = gyv.shape[0], channels = gyv.shape[1], out_len = gyv.shape[2]
    gx_arr = np.zeros((batch, channels, length))
    cdef double[:, :, ::1] gxv = gx_arr
    cdef Py_ssize_t bb, ci, p
    with nogil:
        for bb in range(batch):
            for ci in range(channels):
                for p in range(out_len):
                    gxv[bb, ci, sv[bb, ci, p]] += gyv[bb, ci, p]
    return gx_arr


def lstm_forward(x, w, b):
    """Run a full LSTM pass over (B, T, F); returns hidden states and cache."""
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t batch = xv.shape[0], steps = xv.shape[1], features = xv.shape[2]
    cdef Py_ssize_t h4 = wv.shape[0], hidden = h4 // 4
    cdef Py_ssize_t cols = wv.shape[1]

    pre_arr = np.empty((batch, steps, h4))
    acts_arr = np.empty((batch, steps, h4))
    cell_arr = np.empty((batch, steps, hidden))
    tc_arr = np.empty((batch, steps, hidden))
    h_arr = np.empty((batch, steps, hidden))
    cdef double[:, :, ::1] pre = pre_arr
    cdef double[:, :, ::1] av = acts_arr
    cdef double[:, :, ::1] cv = cell_arr
    cdef double[:, :, ::1] tcv = tc_arr
    cdef double[:, :, ::1] hv = h_arr

    # Input projection for every step in one product, bias folded in.
    rm_gemm(c'N', c'T', <int> (batch * steps), <int> h4, <int> features,
            1.0, &xv[0, 0, 0], <int> features, &wv[0, hidden], <int> cols,
            0.0, &pre[0, 0, 0], <int> h4)

    cdef Py_ssize_t bb, t, j
    cdef double f, i, g, o, c_prev, c_t
    with nogil:
        for bb in range(batch):
            for t in range(steps):
                for j in range(h4):
                    pre[bb, t, j] += bv[j]
    for t in range(steps):
        if t > 0:
            rm_gemm(c'N', c'T', <int> batch, <int> h4, <int> hidden,
                    1.0, &hv[0, t - 1, 0], <int> (steps * hidden),
                    &wv[0, 0], <int> cols,
                    1.0, &pre[0, t, 0], <int> (steps * h4))
        with nogil:
            for bb in range(batch):
                for j in range(hidden):
                    f = sigmoid(pre[bb, t, j])
                    i = sigmoid(pre[bb, t, hidden + j])
                    g = tanh(pre[bb, t, 2 * hidden + j])
                    o = sigmoid(pre[bb, t, 3 * hidden + j])
                    c_prev = cv[bb, t - 1, j] if t > 0 else 0.0
                    c_t = f * c_prev + i * g
                    av[bb, t, j] = f
                    av[bb, t, hidden + j] = i
                    av[bb, t, 2 * hidden + j] = g
                    av[bb, t, 3 * hidden + j] = o
                    cv[bb, t, j] = c_t
                    tcv[bb, t, j] = tanh(c_t)
                    hv[bb, t, j] = o * tcv[bb, t, j]
    return h_arr, (acts_arr, cell_arr, tc_arr, h_arr)


def lstm_backward(x, w, cache, gh):
    """Backpropagate through time; returns (d_input, d_weights, d_bias)."""
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    acts_arr, cell_arr, tc_arr, h_arr = cache
    cdef double[:, :, ::1] av = np.ascontiguousarray(acts_arr, dtype=np.float64)
    cdef double[:, :, ::1] cv = np.ascontiguousarray(cell_arr, dtype=np.float64)
    cdef double[:, :, ::1] tcv = np.ascontiguousarray(tc_arr, dtype=np.float64)
    cdef double[:, :, ::1] hv = np.ascontiguousarray(h_arr, dtype=np.float64)
    cdef double[:, :, ::1] ghv = np.ascontiguousarray(gh, dtype=np.float64)
    cdef Py_ssize_t batch = xv.shape[0], steps = xv.shape[1], features = xv.shape[2]
    cdef Py_ssize_t hidden = cv.shape[2], h4 = 4 * hidden
    cdef Py_ssize_t cols = wv.shape[1]

    dpre_arr = np.empty((batch, steps, h4))
    gx_arr = np.empty((batch, steps, features))
    dh_rec_arr = np.zeros((batch, hidden))
    dc_rec_arr = np.zeros((batch, hidden))
    cdef double[:, :, ::1] dpre = dpre_arr
    cdef double[:, :, ::1] gxv = gx_arr
    cdef double[:, ::1] dh_rec = dh_rec_arr
    cdef double[:, ::1] dc_rec = dc_rec_arr

    cdef Py_ssize_t bb, t, j
    cdef double f, i, g, o, tc, dh, dc, c_prev
    for t in range(steps - 1, -1, -1):
        with nogil:
            for bb in range(batch):
                for j in range(hidden):
                    f = av[bb, t, j]
                    i = av[bb, t, hidden + j]
                    g = av[bb, t, 2 * hidden + j]
                    o = av[bb, t, 3 * hidden + j]
                    tc = tcv[bb, t, j]
                    dh = ghv[bb, t, j] + dh_rec[bb, j]
                    dc = dh * o * (1.0 - tc * tc) + dc_rec[bb, j]
                    c_prev = cv[bb, t - 1, j] if t > 0 else 0.0
                    dpre[bb, t, j] = dc * c_prev * f * (1.0 - f)
                    dpre[bb, t, hidden + j] = dc * g * i * (1.0 - i)
                    dpre[bb, t, 2 * hidden + j] = dc * i * (1.0 - g * g)
                    dpre[bb, t, 3 * hidden + j] = dh * tc * o * (1.0 - o)
                    dc_rec[bb, j] = dc * f
        rm_gemm(c'N', c'N', <int> batch, <int> hidden, <int> h4,
                1.0, &dpre[0, t, 0], <int> (steps * h4),
                &wv[0, 0], <int> cols,
                0.0, &dh_rec[0, 0], <int> hidden)
        rm_gemm(c'N', c'N', <int> batch, <int> features, <int> h4,
                1.0, &dpre[0, t, 0], <int> (steps * h4),
                &wv[0, hidden], <int> cols,
                0.0, &gxv[0, t, 0], <int> (steps * features))

    h_prev_arr = np.zeros((batch, steps, hidden))
    h_prev_arr[:, 1:] = h_arr[:, :-1]
    cdef double[:, :, ::1] hp = h_prev_arr
    gw_arr = np.empty((h4, cols))
    cdef double[:, ::1] gwv = gw_arr
    rm_gemm(c'T', c'N', <int> h4, <int> hidden, <int> (batch * steps),
            1.0, &dpre[0, 0, 0], <int> h4, &hp[0, 0, 0], <int> hidden,
            0.0, &gwv[0, 0], <int> cols)
    rm_gemm(c'T', c'N', <int> h4, <int> features, <int> (batch * steps),
            1.0, &dpre[0, 0, 0], <int> h4, &xv[0, 0, 0], <int> features,
            0.0, &gwv[0, hidden], <int> cols)
    gb_arr = dpre_arr.sum(axis=(0, 1))
    return gx_arr, gw_arr, gb_arr
