"""Hot numeric kernels: LSTM recurrences in forward and backward form.

The recurrences are the only Python-level loops that dominate runtime
(everything else is BLAS-backed matmul), so they are JIT-compiled with
numba. Setting the environment variable ``TRIALNLI_NO_NUMBA=1`` before
import selects the pure-numpy fallback; the same source runs either way.
``benchmarks/bench_kernels.py`` compares the two paths.
"""

import os

import numpy as np


def _numba_wanted() -> bool:
    flag = os.environ.get("TRIALNLI_NO_NUMBA", "").strip().lower()
    return flag not in ("1", "true", "yes", "on")


NUMBA_ENABLED = False
if _numba_wanted():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:
        pass

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


@njit(cache=True)
def lstm_forward(x, wx, wh, b):
    """Run a unidirectional LSTM over ``x`` (T, d_in).

    Weights: wx (d_in, 4h), wh (h, 4h), b (4h,). Gate order along the
    last axis is input, forget, cell, output. Initial states are zero.

    Returns (hs, cs, gates): hidden states (T, h), cell states (T, h)
    and post-activation gates (T, 4h) cached for the backward pass.
    """
    T = x.shape[0]
    h = wh.shape[0]
    hs = np.zeros((T, h))
    cs = np.zeros((T, h))
    gates = np.zeros((T, 4 * h))
    hprev = np.zeros(h)
    cprev = np.zeros(h)
    for t in range(T):
        z = np.dot(x[t], wx) + np.dot(hprev, wh) + b
        ig = 1.0 / (1.0 + np.exp(-z[:h]))
        fg = 1.0 / (1.0 + np.exp(-z[h : 2 * h]))
        gg = np.tanh(z[2 * h : 3 * h])
        og = 1.0 / (1.0 + np.exp(-z[3 * h :]))
        c = fg * cprev + ig * gg
        hcur = og * np.tanh(c)
        gates[t, :h] = ig
        gates[t, h : 2 * h] = fg
        gates[t, 2 * h : 3 * h] = gg
        gates[t, 3 * h :] = og
        cs[t] = c
        hs[t] = hcur
        hprev = hcur
        cprev = c
    return hs, cs, gates


@njit(cache=True)
def lstm_backward(x, wx, wh, hs, cs, gates, dhs):
    """Backpropagate ``dhs`` (T, h) through the recurrence of lstm_forward.

    Returns (dx, dwx, dwh, db).
    """
    T = x.shape[0]
    h = wh.shape[0]
    dx = np.zeros_like(x)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * h)
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    dz = np.zeros(4 * h)
    for t in range(T - 1, -1, -1):
        ig = gates[t, :h]
        fg = gates[t, h : 2 * h]
        gg = gates[t, 2 * h : 3 * h]
        og = gates[t, 3 * h :]
        tc = np.tanh(cs[t])
        dh = dhs[t] + dh_next
        dc = dh * og * (1.0 - tc * tc) + dc_next
        cprev = cs[t - 1] if t > 0 else np.zeros(h)
        dz[:h] = dc * gg * ig * (1.0 - ig)
        dz[h : 2 * h] = dc * cprev * fg * (1.0 - fg)
        dz[2 * h : 3 * h] = dc * ig * (1.0 - gg * gg)
        dz[3 * h :] = dh * tc * og * (1.0 - og)
        dc_next = dc * fg
        dx[t] = np.dot(dz, wx.T)
        dh_next = np.dot(dz, wh.T)
        dwx += np.outer(x[t], dz)
        if t > 0:
            dwh += np.outer(hs[t - 1], dz)
        db += dz
    return dx, dwx, dwh, db


def warmup():
    """Trigger JIT compilation on tiny inputs so timings stay honest."""
    x = np.zeros((2, 3))
    wx = np.zeros((3, 8))
    wh = np.zeros((2, 8))
    b = np.zeros(8)
    hs, cs, gates = lstm_forward(x, wx, wh, b)
    lstm_backward(x, wx, wh, hs, cs, gates, np.zeros((2, 2)))
