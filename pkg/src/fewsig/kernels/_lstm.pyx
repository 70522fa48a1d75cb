# Compiled LSTM sequence kernel: same contract as fewsig.kernels.reference.
# Gate layout [input, forget, candidate, output]; zero initial h/c state.

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sigmoid(double z) nogil:
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    cdef double ez = exp(z)
    return ez / (1.0 + ez)


def lstm_forward(double[:, ::1] x, double[:, ::1] w_x, double[:, ::1] w_h,
                 double[::1] b):
    """Run the sequence; returns (h, gates, c) float64 arrays."""
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t H = w_h.shape[0]
    cdef Py_ssize_t G = 4 * H

    h_arr = np.zeros((T, H))
    gates_arr = np.zeros((T, G))
    c_arr = np.zeros((T, H))
    z_arr = np.zeros(G)
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] gates = gates_arr
    cdef double[:, ::1] c = c_arr
    cdef double[::1] z = z_arr

    cdef Py_ssize_t t, j, k
    cdef double acc, i_g, f_g, g_g, o_g, c_t

    with nogil:
        for t in range(T):
            for j in range(G):
                acc = b[j]
                for k in range(D):
                    acc += x[t, k] * w_x[k, j]
                if t > 0:
                    for k in range(H):
                        acc += h[t - 1, k] * w_h[k, j]
                z[j] = acc
            for j in range(H):
                i_g = _sigmoid(z[j])
                f_g = _sigmoid(z[H + j])
                g_g = tanh(z[2 * H + j])
                o_g = _sigmoid(z[3 * H + j])
                c_t = i_g * g_g
                if t > 0:
                    c_t += f_g * c[t - 1, j]
                gates[t, j] = i_g
                gates[t, H + j] = f_g
                gates[t, 2 * H + j] = g_g
                gates[t, 3 * H + j] = o_g
                c[t, j] = c_t
                h[t, j] = o_g * tanh(c_t)
    return h_arr, gates_arr, c_arr


def lstm_backward(double[:, ::1] dh, double[:, ::1] x, double[:, ::1] w_x,
                  double[:, ::1] w_h, double[:, ::1] gates, double[:, ::1] c):
    """Backward through time; returns (dx, dw_x, dw_h, db)."""
    cdef Py_ssize_t T = dh.shape[0]
    cdef Py_ssize_t H = dh.shape[1]
    cdef Py_ssize_t D = x.shape[1]
    cdef Py_ssize_t G = 4 * H

    dx_arr = np.zeros((T, D))
    dwx_arr = np.zeros((D, G))
    dwh_arr = np.zeros((H, G))
    db_arr = np.zeros(G)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dwx = dwx_arr
    cdef double[:, ::1] dwh = dwh_arr
    cdef double[::1] db = db_arr

    dh_next_arr = np.zeros(H)
    dc_next_arr = np.zeros(H)
    dz_arr = np.zeros(G)
    hprev_arr = np.zeros(H)
    cdef double[::1] dh_next = dh_next_arr
    cdef double[::1] dc_next = dc_next_arr
    cdef double[::1] dz = dz_arr
    cdef double[::1] hprev = hprev_arr

    cdef Py_ssize_t t, j, k
    cdef double i_g, f_g, g_g, o_g, tc, dht, dcj, di, df, dg, do, acc

    with nogil:
        for t in range(T - 1, -1, -1):
            if t > 0:
                for k in range(H):
                    # h_{t-1} = o_{t-1} * tanh(c_{t-1}) recomputed from the cache
                    hprev[k] = gates[t - 1, 3 * H + k] * tanh(c[t - 1, k])
            for j in range(H):
                i_g = gates[t, j]
                f_g = gates[t, H + j]
                g_g = gates[t, 2 * H + j]
                o_g = gates[t, 3 * H + j]
                tc = tanh(c[t, j])

                dht = dh[t, j] + dh_next[j]
                do = dht * tc
                dcj = dc_next[j] + dht * o_g * (1.0 - tc * tc)
                di = dcj * g_g
                if t > 0:
                    df = dcj * c[t - 1, j]
                else:
                    df = 0.0
                dg = dcj * i_g
                dc_next[j] = dcj * f_g

                dz[j] = di * i_g * (1.0 - i_g)
                dz[H + j] = df * f_g * (1.0 - f_g)
                dz[2 * H + j] = dg * (1.0 - g_g * g_g)
                dz[3 * H + j] = do * o_g * (1.0 - o_g)

            for j in range(G):
                db[j] += dz[j]
            for k in range(D):
                for j in range(G):
                    dwx[k, j] += x[t, k] * dz[j]
            if t > 0:
                for k in range(H):
                    for j in range(G):
                        dwh[k, j] += hprev[k] * dz[j]
            for k in range(D):
                acc = 0.0
                for j in range(G):
                    acc += dz[j] * w_x[k, j]
                dx[t, k] = acc
            for k in range(H):
                acc = 0.0
                for j in range(G):
                    acc += dz[j] * w_h[k, j]
                dh_next[k] = acc
    return dx_arr, dwx_arr, dwh_arr, db_arr
