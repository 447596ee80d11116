"""Deterministic inertial and kinematic signal processing."""

from .filters import butterworth_lowpass, lowpass_array
from .madgwick import (
    DEFAULT_BETA,
    MadgwickState,
    accel_weight,
    estimate_attitudes,
    estimate_linear_acceleration,
    initial_attitude,
    madgwick_step,
)
from .series import apply_time_map, compensate_background, frame_grid, magnitude, resample_to_frame_clock
from .types import (
    GRAVITY,
    WORLD_GRAVITY,
    FlowSample,
    FlowStream,
    ImuSample,
    ImuStream,
    ScalarSeries,
    SignalError,
)
