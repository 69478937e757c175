"""Row kernels used by the autodiff core.

The compiled extension is used when it imports; otherwise (or when
``MEMEFUSE_PURE=1`` is set) the numpy fallback is used. ``BACKEND`` names the
active one. Both expose the same array-level API below.
"""
from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("MEMEFUSE_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def get_backend(name: str | None = None):
    """Return a kernel namespace: ``"cython"``, ``"python"`` or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


@contextmanager
def use_backend(name: str):
    """Temporarily make ``name`` the active backend (benchmarks and tests)."""
    global _impl, BACKEND
    saved = _impl, BACKEND
    _impl, BACKEND = get_backend(name), name
    try:
        yield
    finally:
        _impl, BACKEND = saved


def _rows(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return a.reshape(-1, a.shape[-1])


def softmax(x: np.ndarray, impl=None) -> np.ndarray:
    impl = impl or _impl
    x2 = _rows(x)
    out = np.empty_like(x2)
    impl.softmax_fwd(x2, out)
    return out.reshape(x.shape)


def softmax_grad(y: np.ndarray, gy: np.ndarray, impl=None) -> np.ndarray:
    impl = impl or _impl
    y2, g2 = _rows(y), _rows(gy)
    gx = np.empty_like(y2)
    impl.softmax_bwd(y2, g2, gx)
    return gx.reshape(y.shape)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float, impl=None):
    """Returns (out, xhat, rstd); xhat and rstd are kept for the backward pass."""
    impl = impl or _impl
    x2 = _rows(x)
    out = np.empty_like(x2)
    xhat = np.empty_like(x2)
    rstd = np.empty(x2.shape[0])
    impl.layer_norm_fwd(x2, np.ascontiguousarray(gain, dtype=np.float64),
                        np.ascontiguousarray(bias, dtype=np.float64), float(eps), out, xhat, rstd)
    return out.reshape(x.shape), xhat, rstd


def layer_norm_grad(gy: np.ndarray, xhat: np.ndarray, rstd: np.ndarray, gain: np.ndarray, impl=None):
    """Returns (grad_x, grad_gain, grad_bias)."""
    impl = impl or _impl
    g2 = _rows(gy)
    gx = np.empty_like(g2)
    ggain = np.empty(g2.shape[1])
    gbias = np.empty(g2.shape[1])
    impl.layer_norm_bwd(g2, xhat, rstd, np.ascontiguousarray(gain, dtype=np.float64), gx, ggain, gbias)
    return gx.reshape(gy.shape), ggain, gbias


def gelu(x: np.ndarray, impl=None) -> np.ndarray:
    impl = impl or _impl
    flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    out = np.empty_like(flat)
    impl.gelu_fwd(flat, out)
    return out.reshape(x.shape)


def gelu_grad(x: np.ndarray, gy: np.ndarray, impl=None) -> np.ndarray:
    impl = impl or _impl
    flat = np.ascontiguousarray(x, dtype=np.float64).ravel()
    g = np.ascontiguousarray(gy, dtype=np.float64).ravel()
    gx = np.empty_like(flat)
    impl.gelu_bwd(flat, g, gx)
    return gx.reshape(x.shape)
