"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
All arrays are C-contiguous float64; row kernels operate on 2-D views
``(rows, width)`` and the callers reshape around them.
"""

import numpy as np


def softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(y, gy):
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layer_norm_rows(x, gain, bias, eps):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * gain + bias, xhat, rstd[:, 0].copy()


def layer_norm_rows_backward(gy, xhat, rstd, gain):
    dgain = (gy * xhat).sum(axis=0)
    dbias = gy.sum(axis=0)
    dxhat = gy * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * rstd[:, None]
    return dx, dgain, dbias


def window_connectivity(values, starts, window_length, assignment, n_communities, rel_tol):
    """Community-averaged Pearson correlation for each window.

    Returns ``(W, degenerate)`` where ``W`` has shape ``(T, N, N)`` and
    ``degenerate`` counts ROI-window series whose variance fell below the
    relative tolerance (their correlations are defined as 0).
    """
    n_rois = values.shape[0]
    n_windows = starts.shape[0]
    onehot = np.zeros((n_rois, n_communities))
    onehot[np.arange(n_rois), assignment] = 1.0
    sizes = onehot.sum(axis=0)
    inv = 1.0 / np.outer(sizes, sizes)
    out = np.empty((n_windows, n_communities, n_communities))
    degenerate = 0
    for t in range(n_windows):
        seg = values[:, starts[t]:starts[t] + window_length]
        xc = seg - seg.mean(axis=1, keepdims=True)
        ss = (xc * xc).sum(axis=1)
        scale = np.abs(seg).max(axis=1)
        bad = ss <= window_length * (rel_tol * scale) ** 2
        degenerate += int(bad.sum())
        norm = np.sqrt(np.where(bad, 1.0, ss))
        r = (xc @ xc.T) / np.outer(norm, norm)
        r[bad, :] = 0.0
        r[:, bad] = 0.0
        np.clip(r, -1.0, 1.0, out=r)
        m = (onehot.T @ r @ onehot) * inv
        out[t] = np.triu(m) + np.triu(m, 1).T
    return out, degenerate


def _split(x, heads):
    s, t, d = x.shape
    return x.reshape(s, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge(x):
    s, h, t, dh = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(s, t, h * dh)


def attention_forward(q, k, v, heads, scale):
    qh, kh, vh = _split(q, heads), _split(k, heads), _split(v, heads)
    scores = np.matmul(qh, kh.transpose(0, 1, 3, 2)) * scale
    s, h, t, _ = scores.shape
    attn = softmax_rows(scores.reshape(-1, t)).reshape(s, h, t, t)
    return _merge(np.matmul(attn, vh)), attn


def attention_backward(q, k, v, attn, gout, heads, scale):
    qh, kh, vh, gh = _split(q, heads), _split(k, heads), _split(v, heads), _split(gout, heads)
    dv = np.matmul(attn.transpose(0, 1, 3, 2), gh)
    da = np.matmul(gh, vh.transpose(0, 1, 3, 2))
    t = attn.shape[-1]
    ds = softmax_rows_backward(attn.reshape(-1, t), da.reshape(-1, t)).reshape(attn.shape) * scale
    dq = np.matmul(ds, kh)
    dk = np.matmul(ds.transpose(0, 1, 3, 2), qh)
    return _merge(dq), _merge(dk), _merge(dv)
