"""Madgwick MARG attitude filter with a quality-adaptive accelerometer gain.

The corrective gradient step is scaled by ``w_a = clip(1 - | |a| - g | / 3, 0, 1)``
so that samples dominated by hand acceleration barely pull the attitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import quaternion as quat
from .types import GRAVITY, WORLD_GRAVITY, ImuSample, ImuStream, SignalError

DEFAULT_BETA = 0.035


@dataclass(frozen=True)
class MadgwickState:
    q: np.ndarray
    beta: float = DEFAULT_BETA
    last_t: float = -math.inf

    def __post_init__(self):
        if not self.beta > 0:
            raise SignalError(f"beta must be positive, got {self.beta}")


def accel_weight(accel, g: float = GRAVITY) -> float:
    """Quality weight of an accelerometer sample in [0, 1]."""
    n = math.sqrt(float(np.dot(accel, accel)))
    if n == 0.0:
        return 0.0
    return min(1.0, max(0.0, 1.0 - abs(n - g) / 3.0))


def initial_attitude(accel, mag=None) -> np.ndarray:
    """Tilt from one accelerometer sample, heading from one magnetometer sample."""
    a = np.asarray(accel, dtype=float)
    na = np.linalg.norm(a)
    if na == 0.0:
        return quat.IDENTITY.copy()
    up = a / na
    north = None
    if mag is not None:
        m = np.asarray(mag, dtype=float)
        h = m - (m @ up) * up
        if np.linalg.norm(h) > 1e-12:
            north = h / np.linalg.norm(h)
    if north is None:
        ref = np.array([1.0, 0.0, 0.0]) if abs(up[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        north = ref - (ref @ up) * up
        north /= np.linalg.norm(north)
    east_west = np.cross(up, north)
    # rows are the world axes expressed in sensor coordinates
    return quat.from_matrix(np.vstack([north, east_west, up]))


def _marg_gradient(q, a, m):
    w, x, y, z = q
    ax, ay, az = a
    # gravity objective
    f1 = 2 * (x * z - w * y) - ax
    f2 = 2 * (w * x + y * z) - ay
    f3 = 2 * (0.5 - x * x - y * y) - az
    s0 = -2 * y * f1 + 2 * x * f2
    s1 = 2 * z * f1 + 2 * w * f2 - 4 * x * f3
    s2 = -2 * w * f1 + 2 * z * f2 - 4 * y * f3
    s3 = 2 * x * f1 + 2 * y * f2
    if m is not None:
        mx, my, mz = m
        # earth-frame flux reference from the current estimate
        hx, hy, hz = quat.rotate(q, m)
        bx = math.sqrt(hx * hx + hy * hy)
        bz = hz
        g1 = 2 * bx * (0.5 - y * y - z * z) + 2 * bz * (x * z - w * y) - mx
        g2 = 2 * bx * (x * y - w * z) + 2 * bz * (w * x + y * z) - my
        g3 = 2 * bx * (w * y + x * z) + 2 * bz * (0.5 - x * x - y * y) - mz
        s0 += -2 * bz * y * g1 + (-2 * bx * z + 2 * bz * x) * g2 + 2 * bx * y * g3
        s1 += 2 * bz * z * g1 + (2 * bx * y + 2 * bz * w) * g2 + (2 * bx * z - 4 * bz * x) * g3
        s2 += (-4 * bx * y - 2 * bz * w) * g1 + (2 * bx * x + 2 * bz * z) * g2 + (2 * bx * w - 4 * bz * y) * g3
        s3 += (-4 * bx * z + 2 * bz * x) * g1 + (-2 * bx * w + 2 * bz * y) * g2 + 2 * bx * x * g3
    return s0, s1, s2, s3


def madgwick_step(
    state: MadgwickState,
    sample: ImuSample,
    dt: Optional[float] = None,
    gyro_bias=None,
) -> MadgwickState:
    """Advance the attitude estimate by one IMU sample.

    ``dt`` overrides the timestamp difference (device-clock stepping); when it
    is omitted the sample must be strictly later than ``state.last_t``.
    """
    if dt is None:
        if not sample.t > state.last_t:
            raise SignalError(f"non-monotonic timestamp {sample.t} after {state.last_t}")
        if math.isinf(state.last_t):
            raise SignalError("first step needs an explicit dt or a previous timestamp")
        dt = sample.t - state.last_t
    gyro = np.asarray(sample.gyro, dtype=float)
    accel = np.asarray(sample.accel, dtype=float)
    if not (np.all(np.isfinite(gyro)) and np.all(np.isfinite(accel))):
        raise SignalError("non-finite gyro or accelerometer sample")
    if gyro_bias is not None:
        gyro = gyro - gyro_bias

    w, x, y, z = state.q
    gx, gy, gz = gyro
    qd0 = 0.5 * (-x * gx - y * gy - z * gz)
    qd1 = 0.5 * (w * gx + y * gz - z * gy)
    qd2 = 0.5 * (w * gy - x * gz + z * gx)
    qd3 = 0.5 * (w * gz + x * gy - y * gx)

    wa = accel_weight(accel)
    if wa > 0.0:
        a = accel / np.linalg.norm(accel)
        mag = np.asarray(sample.mag, dtype=float)
        nm = np.linalg.norm(mag)
        m = mag / nm if nm > 0 and np.all(np.isfinite(mag)) else None
        s = _marg_gradient(state.q, a, m)
        ns = math.sqrt(s[0] ** 2 + s[1] ** 2 + s[2] ** 2 + s[3] ** 2)
        if ns > 0.0:
            gain = state.beta * wa / ns
            qd0 -= gain * s[0]
            qd1 -= gain * s[1]
            qd2 -= gain * s[2]
            qd3 -= gain * s[3]

    q = quat.normalize(np.array([w + qd0 * dt, x + qd1 * dt, y + qd2 * dt, z + qd3 * dt]))
    return replace(state, q=q, last_t=sample.t)


def estimate_attitudes(
    stream: ImuStream,
    beta: float = DEFAULT_BETA,
    dt: Optional[float] = None,
    gyro_bias=None,
) -> np.ndarray:
    """Run the filter over a stream; returns (N, 4) quaternions."""
    n = len(stream)
    out = np.empty((n, 4))
    if n == 0:
        return out
    state = MadgwickState(initial_attitude(stream.accel[0], stream.mag[0]), beta, float(stream.t[0]))
    out[0] = state.q
    for i in range(1, n):
        sample = ImuSample(float(stream.t[i]), stream.accel[i], stream.gyro[i], stream.mag[i])
        if dt is None:
            state = madgwick_step(state, sample, gyro_bias=gyro_bias)
        else:
            state = madgwick_step(state, sample, dt=dt, gyro_bias=gyro_bias)
        out[i] = state.q
    return out


def estimate_linear_acceleration(
    stream: ImuStream,
    bias=None,
    gravity=WORLD_GRAVITY,
    beta: float = DEFAULT_BETA,
    dt: Optional[float] = None,
    gyro_bias=None,
):
    """World-frame linear acceleration ``R(q)(a_meas - b_a) + g_world``.

    ``gravity`` is the world gravity vector (pointing down), so adding it removes
    the specific-force reaction an accelerometer reads at rest.

    Returns ``(t, a_lin)`` with ``a_lin`` of shape (N, 3).
    """
    n = len(stream)
    if n == 0:
        return np.zeros(0), np.zeros((0, 3))
    if dt is None and n > 1 and np.any(np.diff(stream.t) <= 0):
        raise SignalError("IMU timestamps must be strictly increasing")
    bias = np.zeros(3) if bias is None else np.asarray(bias, dtype=float)
    qs = estimate_attitudes(stream, beta=beta, dt=dt, gyro_bias=gyro_bias)
    rot = quat.to_matrices(qs)
    a_world = np.einsum("nij,nj->ni", rot, stream.accel - bias)
    return stream.t.copy(), a_world + np.asarray(gravity, dtype=float)
