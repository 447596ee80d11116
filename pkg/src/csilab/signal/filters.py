from __future__ import annotations

import numpy as np
from scipy import signal as sp_signal

from .types import ScalarSeries, SignalError

DEFAULT_ORDER = 4


def butter_sos(cutoff_hz: float, rate: float, order: int = DEFAULT_ORDER):
    nyquist = rate / 2.0
    if not 0 < cutoff_hz < nyquist:
        raise SignalError(f"cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz")
    return sp_signal.butter(order, cutoff_hz, btype="low", fs=rate, output="sos")


def lowpass_array(x, rate: float, cutoff_hz: float, order: int = DEFAULT_ORDER, zero_phase: bool = True):
    """Butterworth low-pass along axis 0 of ``x``.

    Zero-phase (forward-backward) by default; ``zero_phase=False`` is the causal
    single pass.
    """
    x = np.asarray(x, dtype=float)
    sos = butter_sos(cutoff_hz, rate, order)
    if len(x) == 0:
        return x.copy()
    if zero_phase:
        padlen = min(len(x) - 1, 3 * (2 * len(sos) + 1))
        return sp_signal.sosfiltfilt(sos, x, axis=0, padlen=padlen)
    # start from the steady state of the first sample so constants pass unchanged
    zi = sp_signal.sosfilt_zi(sos)
    zi = zi.reshape(zi.shape + (1,) * (x.ndim - 1)) * x[:1]
    y, _ = sp_signal.sosfilt(sos, x, axis=0, zi=zi)
    return y


def butterworth_lowpass(series, cutoff_hz: float, rate: float | None = None, order: int = DEFAULT_ORDER,
                        zero_phase: bool = True):
    """Low-pass a ``ScalarSeries`` or an (N, k) array sampled at ``rate``."""
    if isinstance(series, ScalarSeries):
        vals = lowpass_array(series.values, series.rate, cutoff_hz, order, zero_phase)
        return ScalarSeries(series.t0, series.rate, vals)
    if rate is None:
        raise SignalError("rate is required for array input")
    return lowpass_array(series, rate, cutoff_hz, order, zero_phase)
