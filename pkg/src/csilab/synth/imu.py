"""Simulated wrist IMU: specific force, angular rate and magnetic field in the sensor frame.

World frame is x north, y west, z up. The camera looks north, so a camera-frame
point (X right, Y down, Z forward) maps to world (Z, -X, -Y).
"""

from __future__ import annotations

import numpy as np

from ..signal import quaternion as quat
from ..signal.types import GRAVITY, ImuStream

CAM_TO_WORLD = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
WORLD_MAG_UT = np.array([20.0, 0.0, -40.0])
MAX_TILT_RAD = np.deg2rad(15.0)


def _rodrigues(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    k = np.array([[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]])
    s = np.sin(angles)[:, None, None]
    c = np.cos(angles)[:, None, None]
    return np.eye(3)[None] + s * k[None] + (1 - c) * (k @ k)[None]


def wrist_orientation(t, rng: np.random.Generator):
    """Slow wrist rocking about a fixed horizontal-ish axis, at most 15 degrees.

    Returns ``(R, omega_body)``: sensor-to-world rotations (N, 3, 3) and body
    angular rates (N, 3).
    """
    yaw = rng.uniform(-np.pi, np.pi)
    r0 = quat.to_matrix(quat.from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw))
    axis = rng.normal(0.0, 1.0, 3) * np.array([1.0, 1.0, 0.3])
    axis /= np.linalg.norm(axis)
    tilt = rng.uniform(0.3, 1.0) * MAX_TILT_RAD
    f = rng.uniform(0.2, 0.6)
    ph = rng.uniform(0, 2 * np.pi)
    theta = tilt * np.sin(2 * np.pi * f * t + ph)
    dtheta = tilt * 2 * np.pi * f * np.cos(2 * np.pi * f * t + ph)
    rot = np.einsum("ij,njk->nik", r0, _rodrigues(axis, theta))
    return rot, dtheta[:, None] * axis[None, :]


def derive_imu(
    traj,
    profile=None,
    bias=(0.0, 0.0, 0.0),
    noise_sigma: float = 0.0,
    seed: int = 0,
    gyro_noise: float | None = None,
    mag_noise: float | None = None,
) -> ImuStream:
    """Inertial and magnetic readings along ``traj``.

    ``a_meas = R^T (a_world + g_up) + bias + noise``. Trajectories without an
    analytic ``acc`` are differentiated numerically.
    """
    t = np.asarray(traj.t, dtype=float)
    if len(t) < 3:
        raise ValueError("need at least 3 trajectory samples")
    acc_cam = getattr(traj, "acc", None)
    if acc_cam is None:
        dt = np.diff(t).mean()
        acc_cam = np.gradient(np.gradient(traj.pos, dt, axis=0), dt, axis=0)
    subject = 0 if profile is None else int(getattr(profile, "subject_id", 0))
    rng = np.random.default_rng([seed, subject])
    rot, omega = wrist_orientation(t, rng)
    a_world = acc_cam @ CAM_TO_WORLD.T + np.array([0.0, 0.0, GRAVITY])
    accel = np.einsum("nji,nj->ni", rot, a_world) + np.asarray(bias, dtype=float)
    mag = np.einsum("nji,j->ni", rot, WORLD_MAG_UT)
    gyro = omega.copy()
    if noise_sigma > 0:
        accel = accel + rng.normal(0.0, noise_sigma, accel.shape)
        gn = 0.1 * noise_sigma if gyro_noise is None else gyro_noise
        mn = 4.0 * noise_sigma if mag_noise is None else mag_noise
        gyro = gyro + rng.normal(0.0, gn, gyro.shape)
        mag = mag + rng.normal(0.0, mn, mag.shape)
    return ImuStream(t.copy(), accel, gyro, mag)
