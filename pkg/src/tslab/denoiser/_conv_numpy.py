"""Pure-numpy 3x3 convolution kernels (im2col views + BLAS contractions).

Input layout: xpad is the zero-padded activation (B, C, H+2, W+2), weights
are (O, C, 3, 3), outputs (B, O, H, W).  Same contract as the compiled
backend in _convcore.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3x3(xpad: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    windows = sliding_window_view(xpad, (3, 3), axis=(2, 3))  # (B,C,H,W,3,3)
    out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3]))  # (B,H,W,O)
    out = np.ascontiguousarray(np.moveaxis(out, 3, 1))
    out += bias[None, :, None, None]
    return out


def conv3x3_wgrad(xpad: np.ndarray, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    windows = sliding_window_view(xpad, (3, 3), axis=(2, 3))  # (B,C,H,W,3,3)
    dweight = np.tensordot(dy, windows, axes=([0, 2, 3], [0, 2, 3]))  # (O,C,3,3)
    dbias = dy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(dweight), dbias
