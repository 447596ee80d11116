from __future__ import annotations

import numpy as np

from .types import FlowStream, ScalarSeries, SignalError


def frame_grid(t0: float, fps: float, n: int) -> np.ndarray:
    return t0 + np.arange(n) / fps


def resample_to_frame_clock(t, values, fps: float, t0: float | None = None, n: int | None = None):
    """Linearly interpolate timestamped samples onto a uniform ``fps`` grid.

    Without ``t0``/``n`` the grid starts at the first sample and stops inside
    the source support. With an explicit grid, points outside the support hold
    the edge value.

    Returns a ``ScalarSeries`` for 1-D values, else ``(grid, array)``.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(t) < 2:
        raise SignalError("need at least two samples to resample")
    if not fps > 0:
        raise SignalError(f"fps must be positive, got {fps}")
    if t0 is None:
        t0 = float(t[0])
    if n is None:
        n = int(np.floor((t[-1] - t0) * fps + 1e-9)) + 1
    grid = frame_grid(t0, fps, n)
    if values.ndim == 1:
        return ScalarSeries(float(t0), float(fps), np.interp(grid, t, values))
    out = np.column_stack([np.interp(grid, t, values[:, k]) for k in range(values.shape[1])])
    return grid, out


def magnitude(values) -> np.ndarray:
    """Per-sample Euclidean norm of an (N, k) vector series."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.abs(values)
    return np.sqrt(np.sum(values * values, axis=-1))


def compensate_background(flow: FlowStream) -> FlowStream:
    """Subtract global background flow from the hand velocity where present."""
    if flow.bg is None:
        return flow
    return FlowStream(flow.t, flow.v - flow.bg, flow.bw, None)


def apply_time_map(t, offset_s: float = 0.0, drift: float = 1.0, jitter=None):
    """Map timestamps ``t' = drift * t + offset + jitter``.

    Returns ``(t_mapped_sorted, order)``; ``order`` re-sorts any payload that
    travels with the timestamps.
    """
    if not drift > 0:
        raise SignalError(f"drift must be positive, got {drift}")
    t = np.asarray(t, dtype=float)
    mapped = drift * t + offset_s
    if jitter is not None:
        mapped = mapped + np.asarray(jitter, dtype=float)
    order = np.argsort(mapped, kind="stable")
    return mapped[order], order
