"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is loaded. Setting ``NEUROPATHNET_BACKEND=python`` forces the
fallback even when the extension is available.
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {available_backends()}") from None


def _select():
    requested = os.environ.get("NEUROPATHNET_BACKEND", "").strip().lower()
    if requested:
        return requested, get_backend(requested)
    if _ckernels is not None:
        return "cython", _ckernels
    return "python", _pykernels


BACKEND, _impl = _select()


def use_backend(name):
    """Switch the active backend for this process (used by tests and benchmarks)."""
    global BACKEND, _impl
    _impl = get_backend(name)
    BACKEND = name


def _c2(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def softmax_rows(x):
    return _impl.softmax_rows(_c2(x))


def softmax_rows_backward(y, gy):
    return _impl.softmax_rows_backward(_c2(y), _c2(gy))


def layer_norm_rows(x, gain, bias, eps):
    return _impl.layer_norm_rows(_c2(x), _c2(gain), _c2(bias), float(eps))


def layer_norm_rows_backward(gy, xhat, rstd, gain):
    return _impl.layer_norm_rows_backward(_c2(gy), _c2(xhat), _c2(rstd), _c2(gain))


def window_connectivity(values, starts, window_length, assignment, n_communities, rel_tol=1e-10):
    return _impl.window_connectivity(
        _c2(values),
        np.ascontiguousarray(starts, dtype=np.int64),
        int(window_length),
        np.ascontiguousarray(assignment, dtype=np.int64),
        int(n_communities),
        float(rel_tol),
    )


def attention_forward(q, k, v, heads, scale):
    return _impl.attention_forward(_c2(q), _c2(k), _c2(v), int(heads), float(scale))


def attention_backward(q, k, v, attn, gout, heads, scale):
    return _impl.attention_backward(_c2(q), _c2(k), _c2(v), _c2(attn), _c2(gout), int(heads), float(scale))
