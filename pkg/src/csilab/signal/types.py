"""Sensor record and series containers shared by the whole pipeline.

Streams are stored column-wise (one numpy array per field) because every
consumer downstream is vectorised; the per-record dataclasses exist for the
sequential AHRS step and for JSONL round-tripping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

GRAVITY = 9.81
WORLD_GRAVITY = np.array([0.0, 0.0, -GRAVITY])


class SignalError(ValueError):
    """Rejected input to a signal-processing operation."""


@dataclass(frozen=True)
class ImuSample:
    t: float
    accel: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray


@dataclass(frozen=True)
class FlowSample:
    t: float
    v: np.ndarray
    bbox_width_ratio: float
    background_flow: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ImuStream:
    """Column-wise 9-DoF IMU stream (accel m/s^2, gyro rad/s, mag uT)."""

    t: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    mag: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        for name in ("accel", "gyro", "mag"):
            arr = getattr(self, name)
            if arr.shape != (n, 3):
                raise SignalError(f"{name} must have shape ({n}, 3), got {arr.shape}")

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[ImuSample]:
        for i in range(len(self.t)):
            yield ImuSample(float(self.t[i]), self.accel[i], self.gyro[i], self.mag[i])

    @classmethod
    def from_samples(cls, samples) -> "ImuStream":
        samples = list(samples)
        if not samples:
            return cls(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))
        return cls(
            np.array([s.t for s in samples], dtype=float),
            np.array([s.accel for s in samples], dtype=float),
            np.array([s.gyro for s in samples], dtype=float),
            np.array([s.mag for s in samples], dtype=float),
        )

    def with_times(self, t: np.ndarray, order: Optional[np.ndarray] = None) -> "ImuStream":
        if order is None:
            return ImuStream(np.asarray(t, dtype=float), self.accel, self.gyro, self.mag)
        return ImuStream(
            np.asarray(t, dtype=float)[order],
            self.accel[order],
            self.gyro[order],
            self.mag[order],
        )


@dataclass(frozen=True)
class FlowStream:
    """Per-candidate image-plane hand velocity (pixels/frame) on the frame clock."""

    t: np.ndarray
    v: np.ndarray
    bw: np.ndarray
    bg: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.t)
        if self.v.shape != (n, 2):
            raise SignalError(f"v must have shape ({n}, 2), got {self.v.shape}")
        if self.bw.shape != (n,):
            raise SignalError(f"bw must have shape ({n},), got {self.bw.shape}")
        if self.bg is not None and self.bg.shape != (n, 2):
            raise SignalError(f"bg must have shape ({n}, 2), got {self.bg.shape}")

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[FlowSample]:
        for i in range(len(self.t)):
            bg = None if self.bg is None else self.bg[i]
            yield FlowSample(float(self.t[i]), self.v[i], float(self.bw[i]), bg)

    @classmethod
    def from_samples(cls, samples) -> "FlowStream":
        samples = list(samples)
        t = np.array([s.t for s in samples], dtype=float)
        v = np.array([s.v for s in samples], dtype=float).reshape(len(samples), 2)
        bw = np.array([s.bbox_width_ratio for s in samples], dtype=float)
        if samples and all(s.background_flow is not None for s in samples):
            bg = np.array([s.background_flow for s in samples], dtype=float)
        elif any(s.background_flow is not None for s in samples):
            # mixed presence: absent entries compensate by zero
            bg = np.array(
                [np.zeros(2) if s.background_flow is None else s.background_flow for s in samples],
                dtype=float,
            )
        else:
            bg = None
        return cls(t, v, bw, bg)

    @property
    def scale_proxy(self) -> float:
        return float(np.mean(self.bw)) if len(self.bw) else 0.0


@dataclass(frozen=True)
class ScalarSeries:
    t0: float
    rate: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.rate > 0:
            raise SignalError(f"rate must be positive, got {self.rate}")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.values)) / self.rate
