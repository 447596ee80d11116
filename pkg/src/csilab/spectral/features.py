from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..signal.types import ScalarSeries
from .psd import SpectralError, WindowSpec, feature_rows, normalize_acc_rows, psd_rows, descriptor_rows

DEFAULT_WINDOWS = tuple(range(5, 21))


def sliding_windows(values, w: int, hop: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if len(values) < w:
        return np.zeros((0, w))
    return sliding_window_view(values, w)[::hop]


@dataclass(frozen=True)
class MultiWindowFeatures:
    """Per-window-size feature sequences for one scalar channel.

    ``features[w]`` has shape (positions, feature_dim(w)).
    """

    features: dict = field(repr=False)
    channel: str = "imu"
    scale_proxy: float = 0.0
    mode: str = "spectral"

    @property
    def windows(self) -> tuple:
        return tuple(sorted(self.features))

    def __getitem__(self, w: int) -> np.ndarray:
        return self.features[w]


def window_features(values, spec: WindowSpec, mode: str = "spectral", acc_normalized: bool = False) -> np.ndarray:
    """Feature rows for every window position.

    ``values`` of shape (N, k) is a vector channel: its PSD is the sum of the
    per-axis PSDs (rotation invariant); raw mode concatenates the per-axis
    windows, giving rows of length k * w.
    """
    values = np.asarray(values, dtype=float)
    if mode not in ("raw", "spectral"):
        raise SpectralError(f"unknown feature mode {mode!r}")
    if values.ndim == 2:
        if mode == "raw":
            return np.hstack([sliding_windows(values[:, j], spec.w_frames, spec.hop_frames)
                              for j in range(values.shape[1])])
        bins = sum(psd_rows(sliding_windows(values[:, j], spec.w_frames, spec.hop_frames), spec.taper)
                   for j in range(values.shape[1]))
    else:
        wins = sliding_windows(values, spec.w_frames, spec.hop_frames)
        if mode == "raw":
            return wins.copy()
        if not acc_normalized:
            return feature_rows(wins, spec)
        bins = psd_rows(wins, spec.taper)
    if acc_normalized:
        bins = normalize_acc_rows(bins, spec.freq_resolution_hz)
    return np.hstack([bins, descriptor_rows(bins, spec.freq_resolution_hz)])


def multi_window_features(
    series,
    scale_proxy: float = 0.0,
    windows=DEFAULT_WINDOWS,
    taper: str = "hann",
    channel: str = "imu",
    mode: str = "spectral",
    fps: float | None = None,
    acc_normalized: bool = False,
) -> MultiWindowFeatures:
    """Sliding-window features at every window size, hop = max(1, w // 2)."""
    if isinstance(series, ScalarSeries):
        values = series.values
        fps = series.rate if fps is None else fps
    else:
        values = np.asarray(series, dtype=float)
        fps = 30.0 if fps is None else fps
    if values.ndim not in (1, 2):
        raise SpectralError(f"expected a (N,) or (N, k) channel, got shape {values.shape}")
    longest = max(windows)
    if len(values) < longest:
        raise SpectralError(f"series of {len(values)} frames is shorter than the largest window {longest}")
    feats = {}
    for w in windows:
        spec = WindowSpec(w, taper=taper, fps=fps)
        feats[w] = window_features(values, spec, mode, acc_normalized)
    return MultiWindowFeatures(feats, channel, float(scale_proxy), mode)


def feature_dim(w: int, mode: str = "spectral", axes: int = 1) -> int:
    return axes * w if mode == "raw" else WindowSpec(w).feature_dim


def n_positions(length: int, w: int) -> int:
    return WindowSpec(w).n_positions(length)
