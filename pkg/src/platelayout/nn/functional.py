"""Forward and backward numpy kernels for the layers of the surrogate.

All arrays are float64 in ``(batch, channels, height, width)`` layout.
Convolution weights follow the usual conventions: ``(out, in, k, k)`` for
convolutions and ``(in, out, k, k)`` for transposed convolutions.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_output_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def conv_transpose_output_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n - 1) * stride - 2 * padding + k


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _windows(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Strided view ``(B, C, ho, wo, k, k)`` of the k x k patches of ``xp``."""
    view = sliding_window_view(xp, (k, k), axis=(2, 3))
    return view[:, :, ::stride, ::stride][:, :, :ho, :wo]


def _scatter(cols: np.ndarray, shape: tuple, stride: int) -> np.ndarray:
    """Adjoint of :func:`_windows`: sum patches ``(B, C, h, w, k, k)`` into ``shape``."""
    out = np.zeros(shape)
    _, _, h, w, k, _ = cols.shape
    for di in range(k):
        for dj in range(k):
            out[:, :, di:di + stride * h:stride, dj:dj + stride * w:stride] += cols[:, :, :, :, di, dj]
    return out


def _check_conv(x: np.ndarray, weight: np.ndarray, in_axis: int) -> None:
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"expected 4-D input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[in_axis]:
        raise ValueError(f"input has {x.shape[1]} channels, weight expects {weight.shape[in_axis]}")


def conv2d_forward(x, weight, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    _check_conv(x, weight, 1)
    k = weight.shape[2]
    ho = conv_output_size(x.shape[2], k, stride, padding)
    wo = conv_output_size(x.shape[3], k, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"input {x.shape[2:]} too small for kernel {k} with padding {padding}")
    win = _windows(_pad(x, padding), k, stride, ho, wo)
    y = np.tensordot(win, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        y = y + bias[None, :, None, None]
    return np.ascontiguousarray(y)


def conv2d_backward(grad_out, x, weight, stride: int = 1, padding: int = 0):
    """Return ``(grad_input, grad_weight, grad_bias)`` for :func:`conv2d_forward`."""
    k = weight.shape[2]
    b, _, ho, wo = grad_out.shape
    if grad_out.shape[1] != weight.shape[0]:
        raise ValueError(f"grad_out has {grad_out.shape[1]} channels, weight has {weight.shape[0]} outputs")
    xp = _pad(x, padding)
    win = _windows(xp, k, stride, ho, wo)
    grad_weight = np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    cols = np.tensordot(grad_out, weight, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
    gxp = _scatter(cols, xp.shape, stride)
    if padding:
        gxp = gxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(gxp), grad_weight, grad_bias


def conv_transpose2d_forward(x, weight, bias=None, stride: int = 2, padding: int = 1) -> np.ndarray:
    _check_conv(x, weight, 0)
    k = weight.shape[2]
    b, _, h, w = x.shape
    ho = conv_transpose_output_size(h, k, stride, padding)
    wo = conv_transpose_output_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"transposed convolution output would be empty for input {x.shape[2:]}")
    cols = np.tensordot(x, weight, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
    yp = _scatter(cols, (b, weight.shape[1], ho + 2 * padding, wo + 2 * padding), stride)
    if padding:
        yp = yp[:, :, padding:-padding, padding:-padding]
    if bias is not None:
        yp = yp + bias[None, :, None, None]
    return np.ascontiguousarray(yp)


def conv_transpose2d_backward(grad_out, x, weight, stride: int = 2, padding: int = 1):
    """Return ``(grad_input, grad_weight, grad_bias)`` for :func:`conv_transpose2d_forward`."""
    k = weight.shape[2]
    _, _, h, w = x.shape
    win = _windows(_pad(grad_out, padding), k, stride, h, w)
    grad_input = np.tensordot(win, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    grad_weight = np.tensordot(x, win, axes=([0, 2, 3], [0, 2, 3]))
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(grad_input), grad_weight, grad_bias


def batch_norm_forward(x, scale, shift, eps: float = 1e-5):
    """Training-mode batch normalization; returns ``(y, cache, mean, var)``."""
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    y = scale[None, :, None, None] * xhat + shift[None, :, None, None]
    return y, (xhat, inv_std), mean, var


def batch_norm_backward(grad_out, cache, scale):
    xhat, inv_std = cache
    n = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    grad_scale = np.sum(grad_out * xhat, axis=(0, 2, 3))
    grad_shift = grad_out.sum(axis=(0, 2, 3))
    dxhat = grad_out * scale[None, :, None, None]
    grad_input = (inv_std[None, :, None, None] / n) * (
        n * dxhat
        - dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        - xhat * np.sum(dxhat * xhat, axis=(0, 2, 3))[None, :, None, None]
    )
    return grad_input, grad_scale, grad_shift
