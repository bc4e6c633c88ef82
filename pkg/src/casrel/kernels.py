"""Hot inner loops: LSTM recurrence, row-wise layer norm, nearest start/end matching.

Each kernel exists twice: a vectorised numpy version (``*_numpy``) and an
explicit-loop version compiled with numba (``*_numba``). The unsuffixed names
point at the numba versions unless ``CASREL_DISABLE_JIT`` is set or numba is
missing. Both versions must agree to rounding; ``tests/test_kernels.py`` checks
that and ``benchmarks/bench_kernels.py`` times them against each other.

LSTM gate layout along the ``4h`` axis is ``[input, forget, cell, output]``.
Sequences are packed back to back; ``seg_starts``/``seg_ends`` (end exclusive)
delimit sentences and the recurrent state is reset at every segment start.
"""

import math

import numpy as np

from ._jit import JIT_ENABLED, njit


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------- numpy


def lstm_forward_numpy(pre, w_hh, seg_starts, seg_ends, reverse):
    """Run the recurrence over packed segments.

    ``pre`` holds the input projections ``x_t W_ih + b`` (T x 4h). Returns
    hidden states H (T x h), cell states C (T x h) and post-activation gates
    A (T x 4h), the latter two kept for the backward pass.
    """
    T, four_h = pre.shape
    h = four_h // 4
    H = np.zeros((T, h))
    C = np.zeros((T, h))
    A = np.zeros((T, four_h))
    for s, e in zip(seg_starts, seg_ends):
        order = range(e - 1, s - 1, -1) if reverse else range(s, e)
        h_prev = np.zeros(h)
        c_prev = np.zeros(h)
        for t in order:
            z = pre[t] + h_prev @ w_hh
            i = _sigmoid(z[:h])
            f = _sigmoid(z[h:2 * h])
            g = np.tanh(z[2 * h:3 * h])
            o = _sigmoid(z[3 * h:])
            c_prev = f * c_prev + i * g
            h_prev = o * np.tanh(c_prev)
            A[t, :h] = i
            A[t, h:2 * h] = f
            A[t, 2 * h:3 * h] = g
            A[t, 3 * h:] = o
            C[t] = c_prev
            H[t] = h_prev
    return H, C, A


def lstm_backward_numpy(dH, H, C, A, w_hh, seg_starts, seg_ends, reverse):
    """Gradients of the recurrence w.r.t. ``pre`` and ``w_hh``."""
    T, h = H.shape
    d_pre = np.zeros((T, 4 * h))
    d_whh = np.zeros_like(w_hh)
    for s, e in zip(seg_starts, seg_ends):
        order = range(s, e) if reverse else range(e - 1, s - 1, -1)
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for t in order:
            prev = t + 1 if reverse else t - 1
            first = t == (e - 1 if reverse else s)
            h_prev = np.zeros(h) if first else H[prev]
            c_prev = np.zeros(h) if first else C[prev]
            i, f, g, o = A[t, :h], A[t, h:2 * h], A[t, 2 * h:3 * h], A[t, 3 * h:]
            tc = np.tanh(C[t])
            dh = dH[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ])
            d_pre[t] = dz
            d_whh += np.outer(h_prev, dz)
            dh_next = w_hh @ dz
            dc_next = dc * f
    return d_pre, d_whh


def layer_norm_forward_numpy(x, gain, bias, eps):
    """Normalise each row to zero mean / unit variance, then scale and shift."""
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gain + bias, xhat, rstd[..., 0]


def layer_norm_backward_numpy(dy, xhat, rstd, gain):
    d = xhat.shape[-1]
    dxhat = dy * gain
    dx = (rstd[:, None] / d) * (
        d * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    return dx, (dy * xhat).sum(axis=0), dy.sum(axis=0)


def match_spans_numpy(start_tags, end_tags):
    """Pair each start with the nearest end at the same or a later position."""
    starts = np.flatnonzero(start_tags)
    ends = np.flatnonzero(end_tags)
    idx = np.searchsorted(ends, starts, side="left")
    keep = idx < len(ends)
    out = np.empty((int(keep.sum()), 2), dtype=np.int64)
    out[:, 0] = starts[keep]
    out[:, 1] = ends[idx[keep]]
    return out


# --------------------------------------------------------------------- numba


@njit
def _sig(x):
    return 0.5 * (1.0 + math.tanh(0.5 * x))


@njit
def lstm_forward_numba(pre, w_hh, seg_starts, seg_ends, reverse):
    T = pre.shape[0]
    h = pre.shape[1] // 4
    H = np.zeros((T, h))
    C = np.zeros((T, h))
    A = np.zeros((T, 4 * h))
    z = np.empty(4 * h)
    h_prev = np.empty(h)
    c_prev = np.empty(h)
    for k in range(seg_starts.shape[0]):
        s = seg_starts[k]
        e = seg_ends[k]
        h_prev[:] = 0.0
        c_prev[:] = 0.0
        for step in range(e - s):
            t = e - 1 - step if reverse else s + step
            for j in range(4 * h):
                acc = pre[t, j]
                for m in range(h):
                    acc += h_prev[m] * w_hh[m, j]
                z[j] = acc
            for j in range(h):
                i = _sig(z[j])
                f = _sig(z[h + j])
                g = math.tanh(z[2 * h + j])
                o = _sig(z[3 * h + j])
                c = f * c_prev[j] + i * g
                A[t, j] = i
                A[t, h + j] = f
                A[t, 2 * h + j] = g
                A[t, 3 * h + j] = o
                C[t, j] = c
                H[t, j] = o * math.tanh(c)
            for j in range(h):
                h_prev[j] = H[t, j]
                c_prev[j] = C[t, j]
    return H, C, A


@njit
def lstm_backward_numba(dH, H, C, A, w_hh, seg_starts, seg_ends, reverse):
    T = H.shape[0]
    h = H.shape[1]
    d_pre = np.zeros((T, 4 * h))
    d_whh = np.zeros_like(w_hh)
    dh_next = np.empty(h)
    dc_next = np.empty(h)
    h_prev = np.empty(h)
    c_prev = np.empty(h)
    for k in range(seg_starts.shape[0]):
        s = seg_starts[k]
        e = seg_ends[k]
        dh_next[:] = 0.0
        dc_next[:] = 0.0
        for step in range(e - s):
            t = s + step if reverse else e - 1 - step
            first = t == (e - 1 if reverse else s)
            prev = t + 1 if reverse else t - 1
            for j in range(h):
                if first:
                    h_prev[j] = 0.0
                    c_prev[j] = 0.0
                else:
                    h_prev[j] = H[prev, j]
                    c_prev[j] = C[prev, j]
            for j in range(h):
                i = A[t, j]
                f = A[t, h + j]
                g = A[t, 2 * h + j]
                o = A[t, 3 * h + j]
                tc = math.tanh(C[t, j])
                dh = dH[t, j] + dh_next[j]
                dc = dc_next[j] + dh * o * (1.0 - tc * tc)
                d_pre[t, j] = dc * g * i * (1.0 - i)
                d_pre[t, h + j] = dc * c_prev[j] * f * (1.0 - f)
                d_pre[t, 2 * h + j] = dc * i * (1.0 - g * g)
                d_pre[t, 3 * h + j] = dh * tc * o * (1.0 - o)
                dc_next[j] = dc * f
            for m in range(h):
                acc = 0.0
                for j in range(4 * h):
                    dz = d_pre[t, j]
                    d_whh[m, j] += h_prev[m] * dz
                    acc += w_hh[m, j] * dz
                dh_next[m] = acc
    return d_pre, d_whh


@njit
def layer_norm_forward_numba(x, gain, bias, eps):
    n, d = x.shape
    y = np.empty((n, d))
    xhat = np.empty((n, d))
    rstd = np.empty(n)
    for r in range(n):
        mu = 0.0
        for j in range(d):
            mu += x[r, j]
        mu /= d
        var = 0.0
        for j in range(d):
            c = x[r, j] - mu
            var += c * c
        var /= d
        rs = 1.0 / math.sqrt(var + eps)
        rstd[r] = rs
        for j in range(d):
            xh = (x[r, j] - mu) * rs
            xhat[r, j] = xh
            y[r, j] = xh * gain[j] + bias[j]
    return y, xhat, rstd


@njit
def layer_norm_backward_numba(dy, xhat, rstd, gain):
    n, d = dy.shape
    dx = np.empty((n, d))
    dgain = np.zeros(d)
    dbias = np.zeros(d)
    for r in range(n):
        s1 = 0.0
        s2 = 0.0
        for j in range(d):
            g = dy[r, j] * gain[j]
            s1 += g
            s2 += g * xhat[r, j]
            dgain[j] += dy[r, j] * xhat[r, j]
            dbias[j] += dy[r, j]
        for j in range(d):
            g = dy[r, j] * gain[j]
            dx[r, j] = (rstd[r] / d) * (d * g - s1 - xhat[r, j] * s2)
    return dx, dgain, dbias


@njit
def match_spans_numba(start_tags, end_tags):
    L = start_tags.shape[0]
    nearest = np.empty(L, dtype=np.int64)
    nxt = -1
    for j in range(L - 1, -1, -1):
        if end_tags[j] != 0:
            nxt = j
        nearest[j] = nxt
    count = 0
    for i in range(L):
        if start_tags[i] != 0 and nearest[i] >= 0:
            count += 1
    out = np.empty((count, 2), dtype=np.int64)
    k = 0
    for i in range(L):
        if start_tags[i] != 0 and nearest[i] >= 0:
            out[k, 0] = i
            out[k, 1] = nearest[i]
            k += 1
    return out


# ------------------------------------------------------------------ dispatch

if JIT_ENABLED:
    lstm_forward = lstm_forward_numba
    lstm_backward = lstm_backward_numba
    layer_norm_forward = layer_norm_forward_numba
    layer_norm_backward = layer_norm_backward_numba
    _match_spans = match_spans_numba
else:
    lstm_forward = lstm_forward_numpy
    lstm_backward = lstm_backward_numpy
    layer_norm_forward = layer_norm_forward_numpy
    layer_norm_backward = layer_norm_backward_numpy
    _match_spans = match_spans_numpy

BACKEND = "numba" if JIT_ENABLED else "numpy"


def match_spans(start_tags, end_tags):
    """Dispatching wrapper; normalises inputs to int64 arrays first."""
    return _match_spans(
        np.ascontiguousarray(start_tags, dtype=np.int64),
        np.ascontiguousarray(end_tags, dtype=np.int64),
    )
