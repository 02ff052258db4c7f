"""MSSIM, the reconstruction loss and cross-entropy, each with an analytic gradient."""
from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ValidationError

WINDOW = 11
WINDOW_SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def gaussian_taps(size: int = WINDOW, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


_TAPS = gaussian_taps()


def _check_images(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValidationError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[-1] < WINDOW or x.shape[-2] < WINDOW:
        raise ValidationError(f"images must be at least {WINDOW}x{WINDOW}, got {x.shape[-2:]}")


def ssim_map(x, y) -> np.ndarray:
    """Local SSIM over every valid 11x11 window of the last two axes."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _check_images(x, y)
    return kernels.ssim_terms(x, y, _TAPS, C1, C2, False)[0]


def mssim(x, y) -> float:
    """Mean SSIM of two single-channel images, ``(H, W)`` or ``(1, H, W)``, values in [0, 1]."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.ndim == 3:
        if x.shape[0] != 1:
            raise ValidationError("mssim takes one channel; use channel_mssim for stacks")
        x, y = x[0], y if y.ndim == 2 else y[0]
    return float(ssim_map(x, y).mean())


def channel_mssim(x, y) -> np.ndarray:
    """MSSIM for every image plane of ``(..., H, W)`` arrays."""
    return ssim_map(x, y).mean(axis=(-2, -1))


def channel_mssim_grad(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Per-plane MSSIM and its gradient with respect to ``y``."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    _check_images(x, y)
    s, grad = kernels.ssim_terms(x, y, _TAPS, C1, C2, True)
    return s.mean(axis=(-2, -1)), grad


def ae_loss(x, x_rec) -> float:
    """Mean absolute error plus (1 - mean per-channel MSSIM).

    Accepts ``(C, H, W)`` samples or ``(B, C, H, W)`` batches; a batch gives the
    mean of the per-sample losses.
    """
    x, x_rec = np.asarray(x, dtype=np.float64), np.asarray(x_rec, dtype=np.float64)
    _check_images(x, x_rec)
    return float(np.abs(x - x_rec).mean() + (1.0 - channel_mssim(x, x_rec).mean()))


def ae_loss_grad(x, x_rec) -> tuple[float, np.ndarray]:
    """Loss value and its gradient with respect to ``x_rec``."""
    x, x_rec = np.asarray(x, dtype=np.float64), np.asarray(x_rec, dtype=np.float64)
    _check_images(x, x_rec)
    diff = x_rec - x
    s, g_ssim = channel_mssim_grad(x, x_rec)
    n_planes = s.size
    loss = float(np.abs(diff).mean() + (1.0 - s.mean()))
    grad = np.sign(diff) / diff.size - g_ssim / n_planes
    return loss, grad


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _labels(logits: np.ndarray, label) -> tuple[np.ndarray, np.ndarray]:
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(label))
    if y.shape != (z.shape[0],) or not np.issubdtype(y.dtype, np.integer):
        raise ValidationError("one integer label per row of logits required")
    if ((y < 0) | (y >= z.shape[1])).any():
        raise ValidationError(f"label out of range for {z.shape[1]} classes")
    return z, y


def cross_entropy(logits, label) -> float:
    """``-log softmax(logits)[label]``; batches give the mean over rows."""
    z, y = _labels(logits, label)
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(y.size), y].mean())


def cross_entropy_grad(logits, label) -> tuple[float, np.ndarray]:
    z, y = _labels(logits, label)
    p = softmax(z)
    loss = cross_entropy(z, y)
    p[np.arange(y.size), y] -= 1.0
    g = p / y.size
    return loss, g.reshape(np.shape(logits))
