"""Forward and backward kernels for the layer types.

Public functions take batch-first float64 arrays: images ``(B, C, H, W)``,
vectors ``(B, n)``; a single unbatched sample is accepted too. Layers keep
image activations channel-major, ``(C, B, H, W)``, so that a convolution is
one im2col copy plus one GEMM whose result needs no transpose; the ``*_cm``
functions work in that layout.
"""
from __future__ import annotations

import numpy as np
from .. import kernels
from ..errors import ValidationError

# cap on im2col buffer elements; larger batches are processed in chunks
COL_LIMIT = 1 << 19


def conv_out_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def conv_transpose_out_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n - 1) * stride - 2 * padding + k


def _batched(x, ndim: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ValidationError(f"expected a {ndim - 1}-d sample or {ndim}-d batch, got shape {x.shape}")
    return x, False


def to_cm(x: np.ndarray) -> np.ndarray:
    return x.transpose(1, 0, 2, 3)


def from_cm(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.transpose(1, 0, 2, 3))


def _rows_view(a: np.ndarray, sl: slice) -> np.ndarray:
    """``a[:, sl]`` of a channel-major array as a ``(C, n*H*W)`` matrix.

    The samples in a batch slice are adjacent, so for a C-contiguous ``a`` this
    is a strided view that BLAS reads directly without a copy. Only pass
    C-contiguous arrays when the result is used as an output buffer.
    """
    v = a[:, sl]
    return v.reshape(v.shape[0], -1)


def _chunks(b: int, per_sample: int):
    step = max(1, COL_LIMIT // max(per_sample, 1))
    for start in range(0, b, step):
        yield slice(start, min(b, start + step))


# ------------------------------------------------------------------ conv2d

def conv2d_cm(x, weight, bias, stride, padding, keep_cols: bool = False):
    """Channel-major conv2d. With ``keep_cols`` also returns the per-chunk patch
    matrices, which :func:`conv2d_backward_cm` can reuse."""
    c, b, h, w = x.shape
    o, _, k, _ = weight.shape
    ho, wo = conv_out_size(h, k, stride, padding), conv_out_size(w, k, stride, padding)
    wm = weight.reshape(o, -1)
    out = np.empty((o, b, ho, wo))
    kept = []
    for sl in _chunks(b, c * k * k * ho * wo):
        cols = kernels.im2col(x[:, sl], k, stride, padding, ho, wo)
        np.matmul(wm, cols, out=_rows_view(out, sl))
        if keep_cols:
            kept.append(cols)
    out += bias[:, None, None, None]
    return (out, kept) if keep_cols else out


def conv2d_backward_cm(grad, x, weight, stride, padding, cols=None, input_grad: bool = True):
    """``(d_input, d_weight, d_bias)``; d_input is None when ``input_grad`` is false."""
    c, b, h, w = x.shape
    o, _, k, _ = weight.shape
    ho, wo = grad.shape[2:]
    wm = weight.reshape(o, -1)
    gx = np.empty((c, b, h, w)) if input_grad else None
    gw = np.zeros_like(wm)
    for n, sl in enumerate(_chunks(b, c * k * k * ho * wo)):
        gm = _rows_view(grad, sl)
        patch = cols[n] if cols is not None else kernels.im2col(x[:, sl], k, stride, padding, ho, wo)
        gw += gm @ patch.T
        if input_grad:
            gx[:, sl] = kernels.col2im(wm.T @ gm, (c, sl.stop - sl.start, h, w), k, stride, padding, ho, wo)
    return gx, gw.reshape(weight.shape), grad.sum(axis=(1, 2, 3))


def _check_conv(x, weight, bias, name):
    if weight.ndim != 4 or weight.shape[1 if name == "conv2d" else 0] != x.shape[1]:
        raise ValidationError(f"{name} shape mismatch: input {x.shape}, weight {weight.shape}")
    n_out = weight.shape[0] if name == "conv2d" else weight.shape[1]
    if bias.shape != (n_out,):
        raise ValidationError(f"{name} bias must have shape ({n_out},), got {bias.shape}")
    if weight.shape[2] != weight.shape[3]:
        raise ValidationError(f"{name} needs square kernels")


def conv2d(x, weight, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation; ``weight`` is ``(C_out, C_in, k, k)``."""
    xb, single = _batched(x, 4)
    _check_conv(xb, weight, bias, "conv2d")
    k = weight.shape[2]
    if conv_out_size(xb.shape[2], k, stride, padding) < 1 or conv_out_size(xb.shape[3], k, stride, padding) < 1:
        raise ValidationError(f"conv2d output would be empty for input {xb.shape}")
    out = from_cm(conv2d_cm(to_cm(xb), weight, bias, stride, padding))
    return out[0] if single else out


def conv2d_backward(grad, x, weight, stride: int, padding: int):
    """Gradients ``(d_input, d_weight, d_bias)`` of :func:`conv2d`."""
    xb, single = _batched(x, 4)
    gb, _ = _batched(grad, 4)
    gx, gw, gbias = conv2d_backward_cm(to_cm(gb), to_cm(xb), weight, stride, padding)
    gx = from_cm(gx)
    return (gx[0] if single else gx), gw, gbias


# -------------------------------------------------------- conv_transpose2d

def conv_transpose2d_cm(x, weight, bias, stride, padding):
    c, b, h, w = x.shape
    _, co, k, _ = weight.shape
    ho, wo = conv_transpose_out_size(h, k, stride, padding), conv_transpose_out_size(w, k, stride, padding)
    wm = weight.reshape(c, -1)
    out = np.empty((co, b, ho, wo))
    for sl in _chunks(b, co * k * k * h * w):
        xm = _rows_view(x, sl)
        out[:, sl] = kernels.col2im(wm.T @ xm, (co, sl.stop - sl.start, ho, wo), k, stride, padding, h, w)
    out += bias[:, None, None, None]
    return out


def conv_transpose2d_backward_cm(grad, x, weight, stride, padding):
    c, b, h, w = x.shape
    _, co, k, _ = weight.shape
    wm = weight.reshape(c, -1)
    # x may be a transposed batch-first view; gx must be contiguous
    gx = np.empty((c, b, h, w))
    gw = np.zeros_like(wm)
    for sl in _chunks(b, co * k * k * h * w):
        cols = kernels.im2col(grad[:, sl], k, stride, padding, h, w)
        xm = _rows_view(x, sl)
        np.matmul(wm, cols, out=_rows_view(gx, sl))
        gw += xm @ cols.T
    return gx, gw.reshape(weight.shape), grad.sum(axis=(1, 2, 3))


def conv_transpose2d(x, weight, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Adjoint of :func:`conv2d` with respect to its input.

    ``weight`` is ``(C_in, C_out, k, k)``, i.e. the same array a conv2d
    mapping ``C_out -> C_in`` channels would use.
    """
    xb, single = _batched(x, 4)
    _check_conv(xb, weight, bias, "conv_transpose2d")
    k = weight.shape[2]
    if conv_transpose_out_size(xb.shape[2], k, stride, padding) < 1:
        raise ValidationError(f"conv_transpose2d output would be empty for input {xb.shape}")
    out = from_cm(conv_transpose2d_cm(to_cm(xb), weight, bias, stride, padding))
    return out[0] if single else out


def conv_transpose2d_backward(grad, x, weight, stride: int, padding: int):
    xb, single = _batched(x, 4)
    gb, _ = _batched(grad, 4)
    gx, gw, gbias = conv_transpose2d_backward_cm(to_cm(gb), to_cm(xb), weight, stride, padding)
    gx = from_cm(gx)
    return (gx[0] if single else gx), gw, gbias


# ----------------------------------------------------------------- pooling

def maxpool2(x) -> tuple[np.ndarray, np.ndarray]:
    """2x2 non-overlapping max over the last two axes.

    Returns the pooled array and, per window, the winning slot 0..3 (row-major,
    first maximum on ties) for routing gradients back.
    """
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ValidationError(f"maxpool2 needs even extents, got {h}x{w}")
    lead = x.shape[:-2]
    win = x.reshape(lead + (h // 2, 2, w // 2, 2)).swapaxes(-3, -2).reshape(lead + (h // 2, w // 2, 4))
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(grad, arg) -> np.ndarray:
    grad = np.asarray(grad, dtype=np.float64)
    lead, (h2, w2) = grad.shape[:-2], grad.shape[-2:]
    win = np.zeros(grad.shape + (4,))
    np.put_along_axis(win, arg[..., None], grad[..., None], axis=-1)
    return win.reshape(lead + (h2, w2, 2, 2)).swapaxes(-3, -2).reshape(lead + (2 * h2, 2 * w2))


# ------------------------------------------------------------------- dense

def dense(x, weight, bias) -> np.ndarray:
    xb, single = _batched(x, 2)
    if weight.shape[1] != xb.shape[1] or bias.shape != (weight.shape[0],):
        raise ValidationError(f"dense shape mismatch: input {xb.shape}, weight {weight.shape}, bias {bias.shape}")
    out = xb @ weight.T + bias
    return out[0] if single else out


def dense_backward(grad, x, weight):
    xb, single = _batched(x, 2)
    gb, _ = _batched(grad, 2)
    gx = gb @ weight
    return (gx[0] if single else gx), gb.T @ xb, gb.sum(axis=0)


# ------------------------------------------------------------- activations

def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(grad, x):
    return grad * (x > 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # exp(-x) overflowing to inf still gives the correct limit 0
    with np.errstate(over="ignore"):
        e = np.exp(-x)
    e += 1.0
    return np.divide(1.0, e, out=e)


def sigmoid_backward(grad, y):
    """``y`` is the forward output."""
    return grad * y * (1.0 - y)
