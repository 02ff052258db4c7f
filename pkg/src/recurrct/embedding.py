"""Phase-space reconstruction: lag selection, Cao's embedding dimension, delay embedding."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .data import RoiTimeSeries
from .errors import DegenerateSeriesError, ValidationError

log = logging.getLogger(__name__)

AMI_BINS = 16
E1_TOLERANCE = 0.05
DEFAULT_DMAX = 12
DEFAULT_MAXLAG = 20


@dataclass(frozen=True)
class EmbeddingParams:
    M: int
    tau: int
    K: int

    def __post_init__(self):
        if self.M < 1 or self.tau < 1:
            raise ValidationError(f"need M >= 1 and tau >= 1, got M={self.M}, tau={self.tau}")
        if self.K < 2:
            raise ValidationError(f"K must be >= 2, got {self.K}")

    @classmethod
    def for_length(cls, n: int, M: int, tau: int) -> "EmbeddingParams":
        return cls(M, tau, n - (M - 1) * tau)


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """K state vectors of dimension M, one per row."""

    rows: np.ndarray
    source_roi: int = -1

    @property
    def K(self) -> int:
        return self.rows.shape[0]

    @property
    def M(self) -> int:
        return self.rows.shape[1]


def _values(series) -> np.ndarray:
    if isinstance(series, RoiTimeSeries):
        return series.values
    return np.asarray(series, dtype=np.float64).ravel()


def _roi(series) -> int:
    return series.roi_id if isinstance(series, RoiTimeSeries) else -1


def _check_spread(v: np.ndarray) -> None:
    if v.size < 2 or np.ptp(v) == 0.0:
        raise DegenerateSeriesError()


def _embed(v: np.ndarray, M: int, tau: int) -> np.ndarray:
    K = v.size - (M - 1) * tau
    idx = np.arange(K)[:, None] + tau * np.arange(M)[None, :]
    return v[idx]


def delay_embed(series, params: EmbeddingParams | None = None, *, M: int | None = None,
                tau: int | None = None) -> DataMatrix:
    """Stack delay vectors ``(v_i, v_{i+tau}, ..., v_{i+(M-1)tau})`` into a K x M matrix.

    Either pass ``params`` or ``M`` and ``tau``; ``params.K`` is not consulted,
    the row count always follows from the series length.
    """
    v = _values(series)
    if params is not None:
        M, tau = params.M, params.tau
    if M is None or tau is None or M < 1 or tau < 1:
        raise ValidationError("delay_embed needs M >= 1 and tau >= 1")
    if v.size < (M - 1) * tau + 2:
        raise ValidationError(f"series too short: N={v.size} for M={M}, tau={tau}")
    return DataMatrix(_embed(v, M, tau), _roi(series))


# ----------------------------------------------------------------- lag choice

def ami_curve(series, max_lag: int, bins: int = AMI_BINS) -> np.ndarray:
    """Average mutual information I(tau) for tau = 0..max_lag, in nats.

    Bins are equal-width over the full range of the series and shared by
    both coordinates.
    """
    v = _values(series)
    _check_spread(v)
    lo, hi = v.min(), v.max()
    b = np.minimum(((v - lo) / (hi - lo) * bins).astype(np.int64), bins - 1)
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        x, y = b[: v.size - lag], b[lag:]
        joint = np.bincount(x * bins + y, minlength=bins * bins).reshape(bins, bins) / x.size
        px, py = joint.sum(axis=1), joint.sum(axis=0)
        nz = joint > 0
        out[lag] = np.sum(joint[nz] * np.log(joint[nz] / np.outer(px, py)[nz]))
    return out


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation for lags 0..max_lag (biased estimator, r(0) = 1)."""
    v = _values(series)
    _check_spread(v)
    c = v - v.mean()
    denom = np.dot(c, c)
    return np.array([np.dot(c[: c.size - k], c[k:]) / denom for k in range(max_lag + 1)])


def select_lag(series, max_lag: int = DEFAULT_MAXLAG) -> int:
    """First local minimum of the AMI curve over [1, max_lag].

    Falls back to the first lag whose autocorrelation drops below 1/e, then to 1.
    """
    v = _values(series)
    _check_spread(v)
    if max_lag < 1 or max_lag >= v.size / 2:
        raise ValidationError(f"max_lag must satisfy 1 <= max_lag < N/2 (N={v.size}), got {max_lag}")
    ami = ami_curve(v, max_lag + 1)
    for lag in range(1, max_lag + 1):
        if ami[lag] < ami[lag - 1] and ami[lag] < ami[lag + 1]:
            return lag
    acf = autocorrelation(v, max_lag)
    below = np.flatnonzero(acf[1:] < 1.0 / math.e)
    return int(below[0]) + 1 if below.size else 1


# ------------------------------------------------------------- Cao's method

class CaoResult(NamedTuple):
    M: int
    E1: np.ndarray
    E2: np.ndarray


def _cao_terms(v: np.ndarray, tau: int, d: int) -> tuple[float, float, np.ndarray]:
    """E(d), E*(d) and the nearest-neighbour indices in dimension d."""
    n_pts = v.size - d * tau
    ext = _embed(v, d + 1, tau)[:n_pts]
    nbr, dist_d = kernels.nn_maxnorm(ext[:, :d])
    extra = np.abs(ext[:, d] - ext[nbr, d])
    ok = dist_d > 0.0
    if not ok.any():
        raise DegenerateSeriesError("all neighbour distances are zero")
    a = np.maximum(dist_d[ok], extra[ok]) / dist_d[ok]
    return float(a.mean()), float(extra.mean()), nbr


def cao_embedding_dimension(series, tau: int, d_max: int = DEFAULT_DMAX) -> CaoResult:
    """Minimum embedding dimension by Cao's averaged false-neighbour ratios.

    Neighbours use the maximum norm, self excluded, ties to the lowest index;
    points whose neighbour sits at distance zero are skipped. ``E1[k]`` and
    ``E2[k]`` hold the ratios for dimension ``d = k + 1`` (d = 1 .. d_max-1).

    M is the smallest d from which E1 stops changing: both E1(d+1) - E1(d)
    and E1(d+2) - E1(d+1) are below 0.05 in magnitude. If E1 never settles,
    M = d_max and a warning is logged.
    """
    v = _values(series)
    _check_spread(v)
    if d_max < 2:
        raise ValidationError("d_max must be >= 2")
    if tau < 1:
        raise ValidationError("tau must be >= 1")
    if v.size - d_max * tau < 2:
        raise ValidationError(f"series too short for d_max={d_max}, tau={tau} (N={v.size})")
    E, Estar = np.empty(d_max), np.empty(d_max)
    for d in range(1, d_max + 1):
        E[d - 1], Estar[d - 1], _ = _cao_terms(v, tau, d)
    E1 = E[1:] / E[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        E2 = Estar[1:] / Estar[:-1]
    return CaoResult(saturation_dimension(E1, d_max), E1, E2)


def saturation_dimension(E1: np.ndarray, d_max: int, tol: float = E1_TOLERANCE) -> int:
    steady = np.abs(np.diff(E1)) < tol
    for k in range(steady.size - 1):
        if steady[k] and steady[k + 1]:
            return k + 1
    log.warning("Cao E1 did not saturate up to d_max=%d; using M=d_max", d_max)
    return d_max


def estimate_params(series, d_max: int = DEFAULT_DMAX, max_lag: int = DEFAULT_MAXLAG,
                    tau: int | None = None) -> EmbeddingParams:
    """Estimate (M, tau, K); both search ranges are capped to what the series length allows.

    A given ``tau`` skips lag selection.
    """
    v = _values(series)
    _check_spread(v)
    n = v.size
    if tau is None:
        tau = select_lag(v, max(1, min(max_lag, math.ceil(n / 2) - 1)))
    elif tau < 1 or n - tau < 2:
        raise ValidationError(f"tau={tau} unusable for N={n}")
    d_cap = min(d_max, (n - 2) // tau)
    M = cao_embedding_dimension(v, tau, d_cap).M if d_cap >= 2 else 1
    M = min(M, (n - 2) // tau + 1)
    return EmbeddingParams.for_length(n, M, tau)
