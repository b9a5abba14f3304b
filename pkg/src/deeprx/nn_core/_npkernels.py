"""Pure-NumPy convolution kernels (im2col + BLAS matmul).

Fallback backend for :mod:`deeprx.nn_core.backend`; the compiled extension
implements the same contracts with direct C loops.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x_pad: np.ndarray, kernel: int) -> np.ndarray:
    # (B, H, C) padded along axis 1 -> (B, H_out, P, C)
    return sliding_window_view(x_pad, kernel, axis=1).transpose(0, 1, 3, 2)


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-length 1-D convolution.

    x: (B, H, C_in), w: (P, C_in, K), b: (K,) -> (B, H, K).
    """

    batch, length, c_in = x.shape
    p, _, k = w.shape
    off = (p - 1) // 2
    x_pad = np.pad(x, ((0, 0), (off, off), (0, 0)))
    cols = _windows(x_pad, p).reshape(batch * length, p * c_in)
    out = cols @ w.reshape(p * c_in, k)
    out += b
    return out.reshape(batch, length, k)


def conv1d_backward(
    x: np.ndarray, w: np.ndarray, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adjoints of conv1d_forward: returns (grad_x, grad_w, grad_b)."""

    batch, length, c_in = x.shape
    p, _, k = w.shape
    off = (p - 1) // 2
    # grad wrt input: correlate gy with the kernel flipped along taps
    w_flip = w[::-1].transpose(0, 2, 1).copy()  # (P, K, C_in)
    gy_pad = np.pad(gy, ((0, 0), (off, off), (0, 0)))
    cols = _windows(gy_pad, p).reshape(batch * length, p * k)
    gx = (cols @ w_flip.reshape(p * k, c_in)).reshape(batch, length, c_in)
    # grad wrt kernel: correlation of input windows with gy
    x_pad = np.pad(x, ((0, 0), (off, off), (0, 0)))
    xw = _windows(x_pad, p)  # (B, H, P, C)
    gw = np.tensordot(xw, gy, axes=([0, 1], [0, 1]))  # (P, C, K)
    gb = gy.sum(axis=(0, 1))
    return gx, gw, gb
