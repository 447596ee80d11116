"""Harmonic hand-gesture kinematics with per-subject idiosyncrasy.

Positions are expressed in the camera frame: X right, Y down, Z away from the
camera. Trajectories carry analytic velocity and acceleration alongside the
sampled positions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

IMU_RATE = 150.0
DEFAULT_MARGIN_S = 1.0


class GestureClass(str, enum.Enum):
    APPROACH = "Approach"
    RETREAT = "Retreat"
    LEFT = "Left"
    RIGHT = "Right"
    ASCEND = "Ascend"
    DESCEND = "Descend"
    SUMMON = "Summon"
    NO_GESTURE = "NoGesture"


GESTURES = tuple(GestureClass)

# nominal motion axis per class; people rarely move purely along the line of sight
CLASS_AXES = {
    GestureClass.APPROACH: (0.0, -0.6, 0.8),
    GestureClass.RETREAT: (0.0, 0.55, -0.8),
    GestureClass.LEFT: (-1.0, 0.1, 0.25),
    GestureClass.RIGHT: (1.0, 0.1, 0.25),
    GestureClass.ASCEND: (0.1, -1.0, 0.25),
    GestureClass.DESCEND: (0.1, 1.0, 0.25),
    GestureClass.SUMMON: (0.7, -0.7, 0.2),
    GestureClass.NO_GESTURE: (0.6, 0.6, 0.2),
}


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class SubjectProfile:
    amplitude_m: float
    base_freq_hz: float
    harmonic_weights: tuple
    phase: float = 0.0
    axis_mix: dict = field(default_factory=dict, repr=False)
    tremor_m: float = 0.004
    subject_id: int = 0

    def __post_init__(self):
        if self.amplitude_m < 0:
            raise ValueError("amplitude_m must be non-negative")
        if not 0 < self.base_freq_hz < 15:
            raise ValueError("base_freq_hz must lie in (0, 15) Hz")
        if not 1 <= len(self.harmonic_weights) <= 3:
            raise ValueError("1-3 harmonic weights expected")

    def axis(self, gesture: GestureClass) -> np.ndarray:
        if gesture in self.axis_mix:
            return _unit(self.axis_mix[gesture])
        return _unit(CLASS_AXES[gesture])


def random_profile(rng: np.random.Generator, subject_id: int = 0, amplitude_range=(0.16, 0.70),
                   freq_range=(0.5, 3.0)) -> SubjectProfile:
    n_harm = int(rng.integers(2, 4))
    weights = rng.dirichlet(np.full(n_harm, 1.5))
    weights = np.sort(weights)[::-1]  # fundamental dominates
    axes = {}
    for g in GESTURES:
        axes[g] = tuple(_unit(np.asarray(CLASS_AXES[g]) + rng.normal(0.0, 0.2, 3)))
    return SubjectProfile(
        amplitude_m=float(rng.uniform(*amplitude_range)),
        base_freq_hz=float(rng.uniform(*freq_range)),
        harmonic_weights=tuple(float(w) for w in weights),
        phase=float(rng.uniform(0, 2 * np.pi)),
        axis_mix=axes,
        tremor_m=float(rng.uniform(0.002, 0.006)),
        subject_id=subject_id,
    )


@dataclass(frozen=True)
class Trajectory:
    """Hand position/velocity/acceleration in the camera frame at ``rate`` Hz."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    rate: float = IMU_RATE

    def __len__(self) -> int:
        return len(self.t)


class _SineSum:
    """Sum of 3-D sinusoids: sum_j amp_j * axis_j * sin(2 pi f_j t + phi_j)."""

    def __init__(self):
        self.terms = []

    def add(self, amp, freq, phase, axis):
        self.terms.append((float(amp), float(freq), float(phase), np.asarray(axis, dtype=float)))

    def evaluate(self, t):
        pos = np.zeros((len(t), 3))
        vel = np.zeros((len(t), 3))
        acc = np.zeros((len(t), 3))
        for amp, f, ph, ax in self.terms:
            w = 2 * np.pi * f
            arg = w * t + ph
            s, c = np.sin(arg), np.cos(arg)
            pos += np.outer(amp * s, ax)
            vel += np.outer(amp * w * c, ax)
            acc += np.outer(-amp * w * w * s, ax)
        return pos, vel, acc


def generate_trajectory(
    profile: SubjectProfile,
    gesture: GestureClass,
    frames: int,
    seed: int,
    fps: float = 30.0,
    rate: float = IMU_RATE,
    margin_s: float = DEFAULT_MARGIN_S,
    vary: bool = True,
) -> Trajectory:
    """Sample one gesture repetition covering ``frames`` video frames plus margins.

    With ``vary`` the segment gets its own phase and a few percent of tempo and
    amplitude variation around the subject's habits; tremor is always seeded.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    rng = np.random.default_rng(seed)
    duration = frames / fps
    n = int(round((duration + 2 * margin_s) * rate)) + 1
    t = -margin_s + np.arange(n) / rate

    sines = _SineSum()
    if gesture == GestureClass.NO_GESTURE:
        # low-amplitude pink-ish drift, mostly in the image plane
        freqs = rng.uniform(0.2, 6.0, 10)
        amps = 0.02 / freqs
        for a, f in zip(amps, freqs):
            d = _unit(rng.normal(0.0, 1.0, 3) * np.array([1.0, 1.0, 0.3]))
            sines.add(a * profile.amplitude_m / 0.4, f, rng.uniform(0, 2 * np.pi), d)
    else:
        tempo = rng.uniform(0.95, 1.05) if vary else 1.0
        gain = rng.uniform(0.9, 1.1) if vary else 1.0
        phase = rng.uniform(0, 2 * np.pi) if vary else profile.phase
        f0 = profile.base_freq_hz * tempo
        axis = profile.axis(gesture)
        half = 0.5 * profile.amplitude_m * gain
        for h, wgt in enumerate(profile.harmonic_weights, start=1):
            if wgt == 0.0:
                continue
            sines.add(half * wgt, h * f0, h * phase, axis)
    if profile.tremor_m > 0 and profile.amplitude_m > 0:
        # small broadband tremor; shared by both modalities
        for _ in range(6):
            d = _unit(rng.normal(0.0, 1.0, 3))
            sines.add(profile.tremor_m / np.sqrt(6), rng.uniform(4.0, 11.0), rng.uniform(0, 2 * np.pi), d)
    pos, vel, acc = sines.evaluate(t)
    return Trajectory(t, pos, vel, acc, rate)


def constant_trajectory(frames: int, fps: float = 30.0, rate: float = IMU_RATE,
                        margin_s: float = DEFAULT_MARGIN_S) -> Trajectory:
    duration = frames / fps
    n = int(round((duration + 2 * margin_s) * rate)) + 1
    t = -margin_s + np.arange(n) / rate
    z = np.zeros((n, 3))
    return Trajectory(t, z, z.copy(), z.copy(), rate)
