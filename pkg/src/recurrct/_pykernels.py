"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``RECURRCT_PURE_PYTHON=1`` is set. Results are identical to the compiled
versions (same arithmetic order for the floating-point kernels).
"""
from __future__ import annotations

import numpy as np

_CHUNK = 256


def nn_maxnorm(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest neighbour of every row under the max norm, self excluded, ties to the lowest index."""
    y = np.ascontiguousarray(points, dtype=np.float64)
    n = y.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        d = np.abs(y[start:stop, None, :] - y[None, :, :]).max(axis=2)
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        j = d.argmin(axis=1)
        idx[start:stop] = j
        dist[start:stop] = d[np.arange(stop - start), j]
    return idx, dist


def _run_hist(flat: np.ndarray, size: int) -> np.ndarray:
    padded = np.concatenate(([0], flat.astype(np.int8), [0]))
    edges = np.diff(padded)
    lengths = np.flatnonzero(edges == -1) - np.flatnonzero(edges == 1)
    return np.bincount(lengths, minlength=size + 1)[: size + 1].astype(np.int64)


def line_histograms(binary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Histograms of maximal diagonal runs (main diagonal excluded) and vertical runs.

    Entry ``l`` of each array counts lines of length exactly ``l``.
    """
    r = np.asarray(binary, dtype=np.uint8)
    k = r.shape[0]
    pieces = []
    for off in range(1, k):
        pieces += [np.diagonal(r, off), [0], np.diagonal(r, -off), [0]]
    diag = _run_hist(np.concatenate(pieces) if pieces else np.zeros(0), k)
    cols = np.vstack([r, np.zeros((1, k), dtype=np.uint8)]).T.ravel()
    vert = _run_hist(cols, k)
    return diag, vert


def bilinear_resize(img: np.ndarray, target: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of a square matrix to ``target x target``."""
    a = np.ascontiguousarray(img, dtype=np.float64)
    k = a.shape[0]
    i0, f = _axis_weights(k, target)
    i1 = np.minimum(i0 + 1, k - 1)
    fy, fx = f[:, None], f[None, :]
    y0, y1, x0, x1 = i0[:, None], i1[:, None], i0[None, :], i1[None, :]
    top = a[y0, x0] * (1.0 - fx) + a[y0, x1] * fx
    bot = a[y1, x0] * (1.0 - fx) + a[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _axis_weights(k: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    src = np.arange(target, dtype=np.float64) * (k - 1) / (target - 1)
    i0 = np.minimum(np.floor(src).astype(np.int64), max(k - 2, 0))
    return i0, src - i0


def im2col(x: np.ndarray, k: int, s: int, p: int, ho: int, wo: int) -> np.ndarray:
    """``(C*k*k, B*ho*wo)`` patch matrix of a channel-major ``(C, B, H, W)`` array
    zero-padded by ``p`` on every side."""
    x = np.asarray(x, dtype=np.float64)
    c, b, h, w = x.shape
    xp = np.zeros((c, b, h + 2 * p, w + 2 * p))
    xp[:, :, p: p + h, p: p + w] = x
    sc, sb, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(xp, (c, k, k, b, ho, wo), (sc, sh, sw, sb, s * sh, s * sw),
                                           writeable=False)
    return view.reshape(c * k * k, b * ho * wo)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], k: int, s: int, p: int,
           ho: int, wo: int) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patches into a fresh ``shape`` array,
    dropping whatever lands in the padding."""
    c, b, h, w = shape
    cols6 = np.ascontiguousarray(cols, dtype=np.float64).reshape(c, k, k, b, ho, wo)
    hp, wp = max(h + 2 * p, k + s * (ho - 1)), max(w + 2 * p, k + s * (wo - 1))
    out = np.zeros((c, b, hp, wp))
    for i in range(k):
        for j in range(k):
            out[:, :, i: i + s * (ho - 1) + 1: s, j: j + s * (wo - 1) + 1: s] += cols6[:, i, j]
    return np.ascontiguousarray(out[:, :, p: p + h, p: p + w])


def sep_filter(a: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation over the last two axes: along rows first, then columns."""
    n = taps.size
    h, w = a.shape[-2:]
    rows = 0.0
    for k in range(n):
        rows = rows + taps[k] * a[..., :, k: k + w - n + 1]
    out = 0.0
    for k in range(n):
        out = out + taps[k] * rows[..., k: k + h - n + 1, :]
    return out


def sep_filter_adjoint(m: np.ndarray, taps: np.ndarray) -> np.ndarray:
    n = taps.size
    hv, wv = m.shape[-2:]
    cols = np.zeros(m.shape[:-2] + (hv + n - 1, wv))
    for k in range(n):
        cols[..., k: k + hv, :] += taps[k] * m
    out = np.zeros(m.shape[:-2] + (hv + n - 1, wv + n - 1))
    for k in range(n):
        out[..., :, k: k + wv] += taps[k] * cols
    return out


def ssim_terms(x: np.ndarray, y: np.ndarray, taps: np.ndarray, c1: float, c2: float,
               grad: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Local SSIM map over the valid windows of every plane and, optionally, the
    gradient of each plane's mean SSIM with respect to ``y``."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    mx, my = sep_filter(x, taps), sep_filter(y, taps)
    exx, eyy, exy = sep_filter(x * x, taps), sep_filter(y * y, taps), sep_filter(x * y, taps)
    a1 = 2.0 * mx * my + c1
    a2 = 2.0 * (exy - mx * my) + c2
    b1 = mx * mx + my * my + c1
    b2 = (exx - mx * mx) + (eyy - my * my) + c2
    s = (a1 * a2) / (b1 * b2)
    if not grad:
        return s, None
    nv = float(s.shape[-1] * s.shape[-2])
    # partials of the local SSIM w.r.t. the filtered moments of y
    d_my = s * (2.0 * mx / a1 - 2.0 * mx / a2 - 2.0 * my / b1 + 2.0 * my / b2) / nv
    d_eyy = -s / b2 / nv
    d_exy = s * (2.0 / a2) / nv
    g = (sep_filter_adjoint(d_my, taps) + 2.0 * y * sep_filter_adjoint(d_eyy, taps)
         + x * sep_filter_adjoint(d_exy, taps))
    return s, g
