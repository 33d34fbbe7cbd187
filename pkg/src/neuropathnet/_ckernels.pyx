# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Signatures mirror ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def softmax_rows(const double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef double mx, tot
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, m):
            if x[i, j] > mx:
                mx = x[i, j]
        for j in range(m):
            o[i, j] = x[i, j] - mx
    np.exp(out, out=out)
    for i in range(n):
        tot = 0.0
        for j in range(m):
            tot += o[i, j]
        tot = 1.0 / tot
        for j in range(m):
            o[i, j] *= tot
    return out


def softmax_rows_backward(const double[:, ::1] y, const double[:, ::1] gy):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], i, j
    cdef double dot
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        dot = 0.0
        for j in range(m):
            dot += gy[i, j] * y[i, j]
        for j in range(m):
            o[i, j] = y[i, j] * (gy[i, j] - dot)
    return out


def layer_norm_rows(const double[:, ::1] x, const double[::1] gain,
                    const double[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef double mu, var, d, r
    y_arr = np.empty((n, m), dtype=np.float64)
    xhat_arr = np.empty((n, m), dtype=np.float64)
    rstd_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    for i in range(n):
        mu = 0.0
        for j in range(m):
            mu += x[i, j]
        mu /= m
        var = 0.0
        for j in range(m):
            d = x[i, j] - mu
            xhat[i, j] = d
            var += d * d
        var /= m
        r = 1.0 / sqrt(var + eps)
        rstd[i] = r
        for j in range(m):
            xhat[i, j] *= r
            y[i, j] = xhat[i, j] * gain[j] + bias[j]
    return y_arr, xhat_arr, rstd_arr


def layer_norm_rows_backward(const double[:, ::1] gy, const double[:, ::1] xhat,
                             const double[::1] rstd, const double[::1] gain):
    cdef Py_ssize_t n = gy.shape[0], m = gy.shape[1], i, j
    cdef double m1, m2, g
    dx_arr = np.empty((n, m), dtype=np.float64)
    dgain_arr = np.zeros(m, dtype=np.float64)
    dbias_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgain = dgain_arr
    cdef double[::1] dbias = dbias_arr
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(m):
            g = gy[i, j]
            dgain[j] += g * xhat[i, j]
            dbias[j] += g
            g = g * gain[j]
            dx[i, j] = g
            m1 += g
            m2 += g * xhat[i, j]
        m1 /= m
        m2 /= m
        for j in range(m):
            dx[i, j] = (dx[i, j] - m1 - xhat[i, j] * m2) * rstd[i]
    return dx_arr, dgain_arr, dbias_arr


def window_connectivity(const double[:, ::1] values, const cnp.int64_t[::1] starts,
                        Py_ssize_t window_length, const cnp.int64_t[::1] assignment,
                        Py_ssize_t n_communities, double rel_tol):
    cdef Py_ssize_t n_rois = values.shape[0], n_windows = starts.shape[0]
    cdef Py_ssize_t t, p, q, k, s0, a, b
    cdef double mu, ss, amax, v, acc
    cdef long degenerate = 0

    out_arr = np.zeros((n_windows, n_communities, n_communities), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    xc_arr = np.empty((n_rois, window_length), dtype=np.float64)
    cdef double[:, ::1] xc = xc_arr
    norm_arr = np.empty(n_rois, dtype=np.float64)
    cdef double[::1] norm = norm_arr
    bad_arr = np.zeros(n_rois, dtype=np.uint8)
    cdef unsigned char[::1] bad = bad_arr
    sizes_arr = np.zeros(n_communities, dtype=np.float64)
    cdef double[::1] sizes = sizes_arr
    acc_arr = np.zeros((n_communities, n_communities), dtype=np.float64)
    cdef double[:, ::1] accm = acc_arr

    for p in range(n_rois):
        sizes[assignment[p]] += 1.0

    for t in range(n_windows):
        s0 = starts[t]
        for p in range(n_rois):
            mu = 0.0
            amax = 0.0
            for k in range(window_length):
                v = values[p, s0 + k]
                mu += v
                if fabs(v) > amax:
                    amax = fabs(v)
            mu /= window_length
            ss = 0.0
            for k in range(window_length):
                v = values[p, s0 + k] - mu
                xc[p, k] = v
                ss += v * v
            if ss <= window_length * (rel_tol * amax) * (rel_tol * amax):
                bad[p] = 1
                degenerate += 1
                norm[p] = 1.0
            else:
                bad[p] = 0
                norm[p] = sqrt(ss)
        for a in range(n_communities):
            for b in range(n_communities):
                accm[a, b] = 0.0
        for p in range(n_rois):
            for q in range(p, n_rois):
                if bad[p] or bad[q]:
                    continue
                acc = 0.0
                for k in range(window_length):
                    acc += xc[p, k] * xc[q, k]
                v = acc / (norm[p] * norm[q])
                if v > 1.0:
                    v = 1.0
                elif v < -1.0:
                    v = -1.0
                a = assignment[p]
                b = assignment[q]
                accm[a, b] += v
                if p != q:
                    accm[b, a] += v
        for a in range(n_communities):
            for b in range(a, n_communities):
                v = accm[a, b] / (sizes[a] * sizes[b])
                out[t, a, b] = v
                out[t, b, a] = v
    return out_arr, int(degenerate)


def attention_forward(const double[:, :, ::1] q, const double[:, :, ::1] k,
                      const double[:, :, ::1] v, Py_ssize_t heads, double scale):
    """Multi-head attention on ``(S, T, heads*dh)`` inputs; returns ``(out, attn)``."""
    cdef Py_ssize_t S = q.shape[0], T = q.shape[1], D = q.shape[2]
    cdef Py_ssize_t dh = D // heads
    cdef Py_ssize_t s, h, i, j, c
    cdef double acc, mx, tot, a
    cdef const double* qi
    cdef const double* kj
    cdef const double* vj
    cdef double* oi
    cdef double* row
    out_arr = np.zeros((S, T, D), dtype=np.float64)
    attn_arr = np.empty((S, heads, T, T), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, :, :, ::1] attn = attn_arr
    if S == 0 or T == 0:
        return out_arr, attn_arr
    # pass 1: shifted logits
    for s in range(S):
        for h in range(heads):
            for i in range(T):
                qi = &q[s, i, h * dh]
                row = &attn[s, h, i, 0]
                mx = -1e308
                for j in range(T):
                    kj = &k[s, j, h * dh]
                    acc = 0.0
                    for c in range(dh):
                        acc = acc + qi[c] * kj[c]
                    acc = acc * scale
                    row[j] = acc
                    if acc > mx:
                        mx = acc
                for j in range(T):
                    row[j] = row[j] - mx
    # vectorised exp is several times faster than scalar libm calls
    np.exp(attn_arr, out=attn_arr)
    # pass 2: normalise and mix values
    for s in range(S):
        for h in range(heads):
            for i in range(T):
                row = &attn[s, h, i, 0]
                oi = &out[s, i, h * dh]
                tot = 0.0
                for j in range(T):
                    tot = tot + row[j]
                tot = 1.0 / tot
                for j in range(T):
                    a = row[j] * tot
                    row[j] = a
                    vj = &v[s, j, h * dh]
                    for c in range(dh):
                        oi[c] = oi[c] + a * vj[c]
    return out_arr, attn_arr


def attention_backward(const double[:, :, ::1] q, const double[:, :, ::1] k,
                       const double[:, :, ::1] v, const double[:, :, :, ::1] attn,
                       const double[:, :, ::1] gout, Py_ssize_t heads, double scale):
    cdef Py_ssize_t S = q.shape[0], T = q.shape[1], D = q.shape[2]
    cdef Py_ssize_t dh = D // heads
    cdef Py_ssize_t s, h, i, j, c
    cdef double acc, rowdot, a, ds
    cdef const double* qi
    cdef const double* kj
    cdef const double* vj
    cdef const double* gi
    cdef const double* row
    cdef double* dqi
    cdef double* dkj
    cdef double* dvj
    dq_arr = np.zeros((S, T, D), dtype=np.float64)
    dk_arr = np.zeros((S, T, D), dtype=np.float64)
    dv_arr = np.zeros((S, T, D), dtype=np.float64)
    da_arr = np.empty(max(T, 1), dtype=np.float64)
    cdef double[:, :, ::1] dq = dq_arr
    cdef double[:, :, ::1] dk = dk_arr
    cdef double[:, :, ::1] dv = dv_arr
    cdef double[::1] da = da_arr
    if S == 0 or T == 0:
        return dq_arr, dk_arr, dv_arr
    for s in range(S):
        for h in range(heads):
            for i in range(T):
                gi = &gout[s, i, h * dh]
                qi = &q[s, i, h * dh]
                dqi = &dq[s, i, h * dh]
                row = &attn[s, h, i, 0]
                rowdot = 0.0
                for j in range(T):
                    a = row[j]
                    vj = &v[s, j, h * dh]
                    dvj = &dv[s, j, h * dh]
                    acc = 0.0
                    for c in range(dh):
                        acc = acc + gi[c] * vj[c]
                    for c in range(dh):
                        dvj[c] = dvj[c] + a * gi[c]
                    da[j] = acc
                    rowdot = rowdot + acc * a
                for j in range(T):
                    ds = row[j] * (da[j] - rowdot) * scale
                    kj = &k[s, j, h * dh]
                    dkj = &dk[s, j, h * dh]
                    for c in range(dh):
                        dqi[c] = dqi[c] + ds * kj[c]
                    for c in range(dh):
                        dkj[c] = dkj[c] + ds * qi[c]
    return dq_arr, dk_arr, dv_arr
