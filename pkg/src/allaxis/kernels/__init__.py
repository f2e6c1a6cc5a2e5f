"""Convolution kernel dispatch.

Two interchangeable backends compute the hot convolution loops:

* ``numba`` -- @njit parallel gather kernels (default when numba imports)
* ``numpy`` -- tap-loop + BLAS fallback

Selection: the ``ALLAXIS_KERNELS`` env var (``auto`` | ``numba`` | ``numpy``,
default ``auto``) picks the backend at import; :func:`use_backend` overrides
it locally (used by tests and benchmarks/kernel_bench.py).  Both backends
are float64 and deterministic; they may differ in the last few ulps because
summation order differs.

Matrix products elsewhere in the package always go through BLAS; only the
convolution family is backend-switched.

Transposed convolution is not a separate kernel: it is composed from the
conv gradient kernels (forward = conv2d_gx, input grad = conv2d_fwd,
weight grad = conv2d_gw with operands swapped), with weights stored as
[C_in, C_out, kh, kw].
"""

import contextlib
import os

from ..errors import ConfigError
from . import numpy_backend

_names = ("conv2d_fwd", "conv2d_gx", "conv2d_gw",
          "conv3d_fwd", "conv3d_gx", "conv3d_gw")

try:
    from . import numba_backend
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba_backend = None
    _HAVE_NUMBA = False


def _resolve(requested: str):
    if requested == "auto":
        requested = "numba" if _HAVE_NUMBA else "numpy"
    if requested == "numpy":
        return numpy_backend
    if requested == "numba":
        if not _HAVE_NUMBA:
            raise ConfigError("ALLAXIS_KERNELS=numba requested but numba is not importable")
        return numba_backend
    raise ConfigError(f"unknown kernel backend {requested!r} (use auto|numba|numpy)")


_active = _resolve(os.environ.get("ALLAXIS_KERNELS", "auto"))


def active_backend() -> str:
    """Name of the backend currently answering conv calls."""
    return "numba" if _active is numba_backend else "numpy"


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily switch the conv backend (tests, benchmarks)."""
    global _active
    previous = _active
    _active = _resolve(name)
    try:
        yield
    finally:
        _active = previous


def conv2d_fwd(x, w, stride, pad, groups=1):
    return _active.conv2d_fwd(x, w, stride, pad, groups)


def conv2d_gx(gy, w, stride, pad, groups, H, W):
    return _active.conv2d_gx(gy, w, stride, pad, groups, H, W)


def conv2d_gw(x, gy, stride, pad, groups, kh, kw):
    return _active.conv2d_gw(x, gy, stride, pad, groups, kh, kw)


def conv3d_fwd(x, w, stride, pad, groups=1):
    return _active.conv3d_fwd(x, w, stride, pad, groups)


def conv3d_gx(gy, w, stride, pad, groups, D, H, W):
    return _active.conv3d_gx(gy, w, stride, pad, groups, D, H, W)


def conv3d_gw(x, gy, stride, pad, groups, kd, kh, kw):
    return _active.conv3d_gw(x, gy, stride, pad, groups, kd, kh, kw)


def convt2d_fwd(x, w, stride, pad):
    """Transposed 2D conv; w is [C_in, C_out, kh, kw]."""
    _, _, kh, kw = w.shape
    Ht = (x.shape[2] - 1) * stride - 2 * pad + kh
    Wt = (x.shape[3] - 1) * stride - 2 * pad + kw
    return _active.conv2d_gx(x, w, stride, pad, 1, Ht, Wt)


def convt2d_gx(gy, w, stride, pad):
    return _active.conv2d_fwd(gy, w, stride, pad, 1)


def convt2d_gw(x, gy, stride, pad, kh, kw):
    return _active.conv2d_gw(gy, x, stride, pad, 1, kh, kw)


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def convt_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size - 1) * stride - 2 * pad + k
