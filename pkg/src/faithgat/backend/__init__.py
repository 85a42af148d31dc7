"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the numpy
fallback is used.  Override with FAITHGAT_KERNELS=compiled|numpy (`compiled`
raises if the extension was never built).
"""

import os

from . import numpy_ops

_choice = os.environ.get("FAITHGAT_KERNELS", "auto").strip().lower()

if _choice in ("numpy", "python", "py"):
    _impl = numpy_ops
    KERNEL_BACKEND = "numpy"
elif _choice in ("compiled", "c", "cython"):
    from . import _ckernels as _impl  # noqa: F401

    KERNEL_BACKEND = "compiled"
elif _choice in ("auto", ""):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        KERNEL_BACKEND = "compiled"
    except ImportError:
        _impl = numpy_ops
        KERNEL_BACKEND = "numpy"
else:
    raise ImportError(f"unknown FAITHGAT_KERNELS value {_choice!r}")

import numpy as _np


def _c(arr):
    return _np.ascontiguousarray(arr)


def seg_softmax(scores, offsets, dst):
    return _impl.seg_softmax(_c(scores), offsets, dst)


def seg_sum(values, offsets):
    return _impl.seg_sum(_c(values), offsets)


def aggregate(weights, z, col, offsets):
    return _impl.aggregate(_c(weights), _c(z), col, offsets)


def aggregate_backward(d_out, weights, z, col, dst):
    return _impl.aggregate_backward(_c(d_out), _c(weights), _c(z), col, dst)
