"""Weak-perspective projection of hand trajectories into per-frame pixel velocity."""

from __future__ import annotations

import numpy as np

from ..signal.types import FlowStream

DEFAULT_FOCAL_PX = 1251.0  # 1920 px sensor, 75 degree horizontal field of view
BW_AT_3M = 0.12
BW_K = BW_AT_3M * 3.0


def bbox_width_ratio(distance_m: float) -> float:
    return float(np.clip(BW_K / distance_m, 0.0, 1.0))


def tri_frame_velocity(pos_px: np.ndarray) -> np.ndarray:
    """Hand velocity from forward/backward flow around each frame, px/frame.

    Frame t sees u+ = x[t+1] - x[t] and u- = x[t-1] - x[t]; the velocity is
    (u+ - u-) / 2. Input must carry one extra frame on each side.
    """
    pos_px = np.asarray(pos_px, dtype=float)
    return 0.5 * (pos_px[2:] - pos_px[:-2])


def project_to_image(
    traj,
    distance_m: float,
    focal_px: float = DEFAULT_FOCAL_PX,
    noise_sigma: float = 0.0,
    seed: int = 0,
    frames: int | None = None,
    fps: float = 30.0,
    pan_px=None,
) -> FlowStream:
    """Per-frame 2-D hand velocity of a trajectory viewed at ``distance_m``.

    The whole body sits at one depth, so image displacement is
    ``focal_px * (X, Y) / distance_m``; depth excursions of the hand are small
    next to the range and are ignored. Frames start at t = 0. ``pan_px`` is an
    optional (frames, 2) global camera motion added to the hand and reported as
    background flow.
    """
    if not distance_m > 0:
        raise ValueError("distance_m must be positive")
    t_src = np.asarray(traj.t, dtype=float)
    if frames is None:
        frames = int(np.floor((t_src[-1] - 1.0 / fps) * fps)) + 1
    tf = np.arange(-1, frames + 1) / fps
    xy = np.column_stack([np.interp(tf, t_src, traj.pos[:, k]) for k in (0, 1)])
    v = tri_frame_velocity(focal_px * xy / distance_m)
    rng = np.random.default_rng(seed)
    sigma = noise_sigma * (distance_m / 3.0)
    if sigma > 0:
        v = v + rng.normal(0.0, sigma, v.shape)
    bg = None
    if pan_px is not None:
        bg = np.asarray(pan_px, dtype=float).reshape(frames, 2)
        v = v + bg
    t = tf[1:-1]
    return FlowStream(t, v, np.full(frames, bbox_width_ratio(distance_m)), bg)
