"""Recurrence matrices, grayscale recurrence-plot images and RQA measures."""
from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import kernels
from .embedding import DataMatrix, EmbeddingParams, delay_embed
from .errors import ValidationError

log = logging.getLogger(__name__)

DEFAULT_TARGET = 224
DEFAULT_TARGET_RR = 0.10
_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")
RQA_COLUMNS = ("subject_id", "roi_id", "rr", "det", "lam", "mean_diag_len", "epsilon")


@dataclass(frozen=True, eq=False)
class RecurrenceMatrix:
    values: np.ndarray
    params: EmbeddingParams | None = None
    source_roi: int = -1

    @property
    def K(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class RecurrencePlotImage:
    pixels: np.ndarray
    source_roi: int = -1

    def to_bytes(self) -> bytes:
        """8-bit pixels, ``round-half-up(255 * value)``."""
        return np.floor(self.pixels * 255.0 + 0.5).astype(np.uint8).tobytes()


@dataclass(frozen=True)
class RqaFeatures:
    rr: float
    det: float
    lam: float
    mean_diag_len: float
    epsilon: float | None = None


def distance_matrix(dm: DataMatrix | np.ndarray, params: EmbeddingParams | None = None) -> RecurrenceMatrix:
    """Pairwise Euclidean distances between state vectors."""
    rows = dm.rows if isinstance(dm, DataMatrix) else np.asarray(dm, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValidationError("distance_matrix needs K >= 2 state vectors")
    diff = rows[:, None, :] - rows[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(d, 0.0)
    return RecurrenceMatrix(d, params, getattr(dm, "source_roi", -1))


def normalize(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values, dtype=np.float64)
    return (values - lo) / (hi - lo)


def render_plot(rm: RecurrenceMatrix, target: int = DEFAULT_TARGET) -> RecurrencePlotImage:
    """Min-max normalize, then resample to ``target x target`` (bilinear, corner aligned)."""
    if target < 2:
        raise ValidationError("target must be >= 2")
    img = kernels.bilinear_resize(normalize(rm.values), target)
    np.clip(img, 0.0, 1.0, out=img)
    return RecurrencePlotImage(img, rm.source_roi)


def binarize(rm: RecurrenceMatrix | np.ndarray,
             target_rr: float = DEFAULT_TARGET_RR) -> tuple[np.ndarray, float]:
    """Threshold at the nearest-rank ``target_rr`` quantile of off-diagonal distances.

    Returns the 0/1 matrix (diagonal forced to 1) and epsilon. When every
    off-diagonal distance is equal the result is all ones and a warning is
    logged.
    """
    d = rm.values if isinstance(rm, RecurrenceMatrix) else np.asarray(rm, dtype=np.float64)
    if not 0.0 < target_rr < 1.0:
        raise ValidationError("target_rr must lie in (0, 1)")
    k = d.shape[0]
    off = np.sort(d[~np.eye(k, dtype=bool)])
    if off[0] == off[-1]:
        log.warning("degenerate recurrence matrix: all off-diagonal distances equal")
        return np.ones((k, k), dtype=np.uint8), float(off[0])
    rank = max(1, math.ceil(target_rr * off.size))
    eps = float(off[rank - 1])
    r = (d <= eps).astype(np.uint8)
    np.fill_diagonal(r, 1)
    return r, eps


def compute_rqa(binary: np.ndarray, l_min: int = 2, v_min: int = 2,
                epsilon: float | None = None) -> RqaFeatures:
    """RR, DET, LAM and mean diagonal line length of a binary recurrence matrix.

    Diagonal lines exclude the main diagonal; vertical lines run over whole
    columns. Undefined ratios (no lines at all) are reported as 0.
    """
    r = np.asarray(binary)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValidationError("recurrence matrix must be square")
    if not np.isin(r, (0, 1)).all():
        raise ValidationError("recurrence matrix must be binary")
    if l_min < 2 or v_min < 2:
        raise ValidationError("l_min and v_min must be >= 2")
    k = r.shape[0]
    diag, vert = kernels.line_histograms(r.astype(np.uint8))
    lengths = np.arange(k + 1)
    dl, vl = lengths * diag, lengths * vert
    rr = float(r.sum()) / (k * k)
    det = _ratio(dl[l_min:].sum(), dl.sum())
    lam = _ratio(vl[v_min:].sum(), vl.sum())
    mean_l = _ratio(dl[l_min:].sum(), diag[l_min:].sum())
    return RqaFeatures(rr, det, lam, mean_l, epsilon)


def _ratio(num, den) -> float:
    return float(num) / float(den) if den else 0.0


# ------------------------------------------------------------------ export

def write_pgm(image: RecurrencePlotImage | np.ndarray, path) -> None:
    """Binary PGM (P5), maxval 255."""
    img = image if isinstance(image, RecurrencePlotImage) else RecurrencePlotImage(np.asarray(image))
    h, w = img.pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.to_bytes())


def read_pgm(path) -> np.ndarray:
    """Pixels of a P5 PGM scaled to [0, 1]."""
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if m is None:
        raise ValidationError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    raw = np.frombuffer(data[m.end(): m.end() + w * h], dtype=np.uint8)
    if raw.size != w * h:
        raise ValidationError(f"{path}: truncated PGM")
    return raw.reshape(h, w).astype(np.float64) / maxval


def write_rqa_csv(path, rows: Iterable[tuple[str, int, RqaFeatures]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RQA_COLUMNS)
        for subject_id, roi_id, f in rows:
            w.writerow([subject_id, roi_id, repr(f.rr), repr(f.det), repr(f.lam),
                        repr(f.mean_diag_len), "" if f.epsilon is None else repr(f.epsilon)])


def series_plot(values: np.ndarray, params: EmbeddingParams, target: int = DEFAULT_TARGET,
                roi_id: int = -1) -> RecurrencePlotImage:
    dm = delay_embed(values, params)
    rm = distance_matrix(dm, params)
    return render_plot(RecurrenceMatrix(rm.values, params, roi_id), target)
