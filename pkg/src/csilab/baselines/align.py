"""Classical pre-alignment: linear timestamp regression, cross-correlation, DTW."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks


class AlignmentError(ValueError):
    """Input that no alignment can be computed for."""


@dataclass(frozen=True)
class AlignmentResult:
    """``offset_s``/``slope`` map IMU time to video time (t_v = slope * t_i + offset_s);
    ``path`` is set for DTW. ``confident`` is false when the input carried no signal."""

    method: str
    offset_s: float = 0.0
    slope: float = 1.0
    path: tuple | None = None
    cost: float = 0.0
    confident: bool = True


def linear_time_fit(t_imu, t_video) -> tuple:
    """Least-squares ``t_video = slope * t_imu + offset``; returns ``(offset, slope)``."""
    x = np.asarray(t_imu, dtype=float)
    y = np.asarray(t_video, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise AlignmentError("pairs must be two equal-length 1-D sequences")
    if len(x) < 2:
        raise AlignmentError("need at least 2 pairs")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-12 * max(1.0, float(x @ x)):
        raise AlignmentError("degenerate pairs: all IMU timestamps equal")
    slope = float(xc @ (y - y.mean())) / sxx
    return float(y.mean() - slope * x.mean()), slope


def _pearson(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / den) if den > 1e-12 else 0.0


def xcorr_lags(a, b, max_lag: int) -> dict:
    """Pearson correlation of ``a[t]`` with ``b[t + lag]`` over the overlap, per lag."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = min(len(a), len(b))
    out = {}
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            x, y = a[: n - lag], b[lag:n]
        else:
            x, y = a[-lag:n], b[: n + lag]
        if len(x) >= 2:
            out[lag] = _pearson(x, y)
    return out


def xcorr_align(a, b, max_lag_frames: int) -> tuple:
    """Lag (frames) by which ``b`` trails ``a``, maximising normalised cross-correlation.

    Ties go to the smallest ``|lag|`` (then the negative one). Returns
    ``(lag, confident)``; constant input gives ``(0, False)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise AlignmentError("empty series")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0, False
    corr = xcorr_lags(a, b, max_lag_frames)
    best = max(corr.values())
    lag = min((l for l, c in corr.items() if c == best), key=lambda l: (abs(l), l))
    return lag, True


def dtw_align(a, b, band_frames: int | None = None) -> tuple:
    """Sakoe-Chiba banded DTW, absolute-difference cost, unit-weight symmetric steps.

    Returns ``(path, cost)`` with ``path`` a tuple of (i, j) pairs from (0, 0)
    to (n-1, m-1). A band narrower than ``|n - m|`` is widened with a warning.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise AlignmentError("DTW needs non-empty sequences")
    band = max(n, m) if band_frames is None else int(band_frames)
    if band < abs(n - m):
        warnings.warn(f"DTW band {band} cannot connect the corners; widened to {abs(n - m)}", stacklevel=2)
        band = abs(n - m)
    cost = np.abs(a[:, None] - b[None, :])
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        lo, hi = max(1, i - band), min(m, i + band)
        for j in range(lo, hi + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    path = [(n - 1, m - 1)]
    i, j = n, m
    while (i, j) != (1, 1):
        steps = ((acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j), (acc[i, j - 1], i, j - 1))
        _, i, j = min(steps, key=lambda s: s[0])  # first minimum: diagonal preferred
        path.append((i - 1, j - 1))
    return tuple(reversed(path)), float(acc[n, m])


def event_pairs(a, b, fps: float, max_lag_s: float, prominence: float = 0.5) -> tuple:
    """Pair prominent peaks of two z-scored activity series.

    Each peak of ``a`` is matched to the nearest peak of ``b`` within
    ``max_lag_s``; returns ``(t_a, t_b)`` arrays in seconds.
    """
    za = _zscore(a)
    zb = _zscore(b)
    pa, _ = find_peaks(za, prominence=prominence)
    pb, _ = find_peaks(zb, prominence=prominence)
    ta, tb = [], []
    for p in pa:
        if len(pb) == 0:
            break
        q = pb[np.argmin(np.abs(pb - p))]
        if abs(q - p) <= max_lag_s * fps:
            ta.append(p / fps)
            tb.append(q / fps)
    return np.array(ta), np.array(tb)


def _zscore(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sd = x.std()
    return (x - x.mean()) / sd if sd > 1e-12 else np.zeros_like(x)


def estimate_alignment(method: str, imu_activity, flow_activity, fps: float, max_lag_s: float) -> AlignmentResult:
    """Map IMU time onto video time from two per-frame activity series."""
    lag_frames = int(round(max_lag_s * fps))
    if method == "xcorr":
        lag, ok = xcorr_align(imu_activity, flow_activity, lag_frames)
        return AlignmentResult("xcorr", offset_s=lag / fps, confident=ok)
    if method == "linear":
        ta, tb = event_pairs(imu_activity, flow_activity, fps, max_lag_s)
        if len(ta) >= 2 and np.ptp(ta) > 0:
            offset, slope = linear_time_fit(ta, tb)
            if 0.9 < slope < 1.1:
                return AlignmentResult("linear", offset_s=offset, slope=slope)
        if len(ta):
            return AlignmentResult("linear", offset_s=float(np.mean(tb - ta)))
        return AlignmentResult("linear", confident=False)
    if method == "dtw":
        path, cost = dtw_align(_zscore(imu_activity), _zscore(flow_activity), lag_frames)
        return AlignmentResult("dtw", path=path, cost=cost)
    raise AlignmentError(f"unknown alignment method {method!r}")


def warp_by_path(values, path, n_out: int) -> np.ndarray:
    """Re-express ``values`` (indexed by the path's first coordinate) on the second
    coordinate's frames, averaging every source frame matched to a target frame."""
    values = np.asarray(values, dtype=float)
    out = np.zeros((n_out,) + values.shape[1:])
    count = np.zeros(n_out)
    for i, j in path:
        out[j] += values[i]
        count[j] += 1
    filled = count > 0
    out[filled] /= count[filled].reshape((-1,) + (1,) * (values.ndim - 1))
    return out
