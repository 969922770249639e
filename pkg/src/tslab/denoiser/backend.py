"""Convolution backend selection.

The compiled Cython kernels are preferred when the extension built; the
numpy fallback is always available.  Set TSLAB_BACKEND=cython|numpy to
force one (useful for benchmarking; see benchmarks/conv_backends.py).
"""

from __future__ import annotations

import os

from . import _conv_numpy

try:
    from . import _convcore
except ImportError:
    _convcore = None


def _select():
    choice = os.environ.get("TSLAB_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return _convcore if _convcore is not None else _conv_numpy
    if choice in ("cython", "compiled"):
        if _convcore is None:
            raise ImportError(
                "TSLAB_BACKEND=cython requested but the compiled extension "
                "is not built; reinstall or use TSLAB_BACKEND=numpy"
            )
        return _convcore
    if choice in ("numpy", "python"):
        return _conv_numpy
    raise ValueError(f"unknown TSLAB_BACKEND value: {choice!r}")


_active = _select()

conv3x3 = _active.conv3x3
conv3x3_wgrad = _active.conv3x3_wgrad


def backend_name() -> str:
    return "cython" if _active is _convcore else "numpy"


def compiled_available() -> bool:
    return _convcore is not None
