"""Pure-numpy LSTM sequence kernel (forward + backward-through-time).

This is the fallback backend; ``fewsig.kernels._lstm`` is the compiled
Cython twin with the same contract. Gate layout in the fused weight
matrices is ``[input, forget, candidate, output]`` blocks of width H.

Shapes:
    x    (T, D)   input sequence
    w_x  (D, 4H)  input-to-gates weights
    w_h  (H, 4H)  hidden-to-gates weights
    b    (4H,)    gate biases
Initial hidden and cell states are zero.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(z):
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_forward(x, w_x, w_h, b):
    """Run the sequence; returns (h, gates, c).

    h (T, H) per-step hidden states; gates (T, 4H) post-activation gate
    values and c (T, H) cell states are the cache consumed by
    :func:`lstm_backward`.
    """
    T = x.shape[0]
    H = w_h.shape[0]
    h = np.zeros((T, H))
    c = np.zeros((T, H))
    gates = np.zeros((T, 4 * H))

    xz = x @ w_x + b  # (T, 4H), input contribution for all steps at once
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    for t in range(T):
        z = xz[t] + h_prev @ w_h
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H : 2 * H])
        g = np.tanh(z[2 * H : 3 * H])
        o = _sigmoid(z[3 * H :])
        c_t = f * c_prev + i * g
        h_t = o * np.tanh(c_t)
        gates[t, :H] = i
        gates[t, H : 2 * H] = f
        gates[t, 2 * H : 3 * H] = g
        gates[t, 3 * H :] = o
        c[t] = c_t
        h[t] = h_t
        h_prev = h_t
        c_prev = c_t
    return h, gates, c


def lstm_backward(dh, x, w_x, w_h, gates, c):
    """Backward through time; returns (dx, dw_x, dw_h, db).

    ``dh`` (T, H) is the loss gradient w.r.t. every per-step hidden state.
    """
    T, H = dh.shape
    dz_all = np.zeros((T, 4 * H))

    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H : 2 * H]
        g = gates[t, 2 * H : 3 * H]
        o = gates[t, 3 * H :]
        c_prev = c[t - 1] if t > 0 else np.zeros(H)

        dh_t = dh[t] + dh_next
        tanh_c = np.tanh(c[t])
        do = dh_t * tanh_c
        dc = dc_next + dh_t * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f

        dz = dz_all[t]
        dz[:H] = di * i * (1.0 - i)
        dz[H : 2 * H] = df * f * (1.0 - f)
        dz[2 * H : 3 * H] = dg * (1.0 - g * g)
        dz[3 * H :] = do * o * (1.0 - o)

        dh_next = dz @ w_h.T

    # Weight gradients in one vectorized pass. h_t = o_t * tanh(c_t), h_{-1}=0.
    h = gates[:, 3 * H :] * np.tanh(c)
    h_prev = np.vstack([np.zeros((1, H)), h[:-1]])
    dw_x = x.T @ dz_all
    dw_h = h_prev.T @ dz_all
    db = dz_all.sum(axis=0)
    dx = dz_all @ w_x.T
    return dx, dw_x, dw_h, db
