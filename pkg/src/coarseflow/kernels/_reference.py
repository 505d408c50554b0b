"""Pure-numpy reference implementations of the hot convolution kernels."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B, H*W, C*9) patch matrix for a 3x3/pad-1 window."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b, h * w, c * 9)


def conv3x3_forward(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    b, c, h, width = x.shape
    o = w.shape[0]
    cols = _im2col(x)
    out = cols @ w.reshape(o, c * 9).T
    return np.ascontiguousarray(out.transpose(0, 2, 1)).reshape(b, o, h, width)


def conv3x3_grad_weight(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    b, c, h, width = x.shape
    o = gy.shape[1]
    cols = _im2col(x)
    gy_mat = gy.reshape(b, o, h * width)
    gw = np.tensordot(gy_mat, cols, axes=([0, 2], [0, 1]))  # (O, C*9)
    return np.ascontiguousarray(gw.reshape(o, c, 3, 3))
