"""Segment -> per-frame channels -> multi-window features.

IMU: AHRS at the nominal device rate in device order, world-frame linear
acceleration, 15 Hz zero-phase low-pass, then resampling onto the video frame
clock using a clock reconstructed from the receive timestamps.
Flow: background-compensated hand velocity per frame.
Both stay vector-valued by default; spectral features then sum per-axis PSDs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signal import compensate_background, estimate_linear_acceleration, lowpass_array, magnitude
from .spectral.features import DEFAULT_WINDOWS, multi_window_features

IMU_RATE = 150.0
LOWPASS_HZ = 15.0


def reconstruct_clock(t_receive) -> np.ndarray:
    """Least-squares line through receive stamps against device sample index.

    Sample order from the device is reliable while per-sample receive stamps are
    not; the fit keeps any offset and clock-rate error and removes jitter.
    """
    t_receive = np.asarray(t_receive, dtype=float)
    n = len(t_receive)
    if n < 2:
        return t_receive.copy()
    idx = np.arange(n, dtype=float)
    slope, intercept = np.polyfit(idx, t_receive, 1)
    return intercept + slope * idx


def imu_linear_acceleration(imu, rate: float = IMU_RATE, cutoff_hz: float = LOWPASS_HZ):
    """Low-passed world linear acceleration in device order -> ``(t_clock, a_lin)``."""
    _, a = estimate_linear_acceleration(imu, dt=1.0 / rate)
    a = lowpass_array(a, rate, cutoff_hz)
    return reconstruct_clock(imu.t), a


def imu_channel(segment, channel: str = "axes", rate: float = IMU_RATE, cutoff_hz: float = LOWPASS_HZ) -> np.ndarray:
    """World linear acceleration on the segment's frame grid: (n, 3) or its magnitude."""
    t, a = imu_linear_acceleration(segment.imu, rate, cutoff_hz)
    return _channel(_on_frames(t, a, segment), channel)


def _on_frames(t, a, segment) -> np.ndarray:
    return np.column_stack([resample_sorted(t, a[:, j], segment.n_frames, segment.fps) for j in range(a.shape[1])])


def _channel(values: np.ndarray, channel: str) -> np.ndarray:
    if channel == "axes":
        return values
    if channel == "magnitude":
        return magnitude(values)
    raise ValueError(f"unknown channel construction {channel!r}")


def resample_sorted(t, values, n_frames: int, fps: float, t0: float = 0.0) -> np.ndarray:
    order = np.argsort(t, kind="stable")
    grid = t0 + np.arange(n_frames) / fps
    return np.interp(grid, np.asarray(t)[order], np.asarray(values)[order])


def flow_channel(flow, channel: str = "axes") -> np.ndarray:
    return _channel(compensate_background(flow).v, channel)


@dataclass
class SegmentChannels:
    """Per-frame channels of one segment; vector-valued unless built with ``channel="magnitude"``."""

    imu: np.ndarray
    flows: list
    scale_proxy: float
    target: int
    distance_m: float
    gesture: str
    key: int


@dataclass
class SegmentFeatures:
    """Feature sequences for one segment: ``imu[w]`` is (T_w, F_w), ``flows[k][w]`` likewise."""

    imu: dict = field(repr=False)
    flows: list = field(repr=False)
    scale_proxy: float
    target: int
    distance_m: float = 0.0
    gesture: str = ""
    key: int = 0

    @property
    def n_candidates(self) -> int:
        return len(self.flows)


def segment_channels(segment, channel: str = "axes") -> SegmentChannels:
    return SegmentChannels(
        imu=imu_channel(segment, channel),
        flows=[flow_channel(f, channel) for f in segment.flows],
        scale_proxy=float(np.mean([f.scale_proxy for f in segment.flows])),
        target=segment.target_index,
        distance_m=segment.distance_m,
        gesture=segment.gesture.value,
        key=segment.seed,
    )


def variant_channels(variants: dict, channel: str = "axes") -> dict:
    """Channels for several timestamp variants of one segment.

    Variants (e.g. desync tiers) must share the device-order IMU samples and
    the flow streams, so the attitude filter and flow channels run once.
    """
    first = next(iter(variants.values()))
    _, a = imu_linear_acceleration(first.imu)
    flows = [flow_channel(f, channel) for f in first.flows]
    proxy = float(np.mean([f.scale_proxy for f in first.flows]))
    out = {}
    for key, seg in variants.items():
        if len(seg.imu) != len(first.imu):
            raise ValueError("variants must share the IMU sample sequence")
        imu = _channel(_on_frames(reconstruct_clock(seg.imu.t), a, seg), channel)
        out[key] = SegmentChannels(imu, flows, proxy, seg.target_index, seg.distance_m, seg.gesture.value, seg.seed)
    return out


def channel_features(ch: SegmentChannels, windows=DEFAULT_WINDOWS, mode: str = "spectral",
                     taper: str = "rectangular", fps: float = 30.0, flows=None) -> SegmentFeatures:
    """``flows`` may carry precomputed flow feature dicts shared between variants."""
    imu = multi_window_features(ch.imu, windows=windows, taper=taper, mode=mode, fps=fps,
                                acc_normalized=(mode == "spectral")).features
    if flows is None:
        flows = [multi_window_features(v, windows=windows, taper=taper, mode=mode, fps=fps, channel="flow").features
                 for v in ch.flows]
    return SegmentFeatures(imu, flows, ch.scale_proxy, ch.target, ch.distance_m, ch.gesture, ch.key)


def segment_features(segment, windows=DEFAULT_WINDOWS, mode: str = "spectral", taper: str = "rectangular",
                     channel: str = "axes") -> SegmentFeatures:
    return channel_features(segment_channels(segment, channel), windows, mode, taper, segment.fps)
