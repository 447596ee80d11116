"""Windowed DFT power spectra and the seven spectral descriptors.

Every function has a single-window form (dataclass in, dataclass out) and a
row-vectorised ``*_rows`` form used by the feature pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DESCRIPTOR_NAMES = ("peak_height", "peak_freq_hz", "clarity", "entropy", "spacing_hz", "snr", "avg_power")
N_DESCRIPTORS = len(DESCRIPTOR_NAMES)
SNR_EPS = 1e-12
TAPERS = ("rectangular", "hann")


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSpec:
    w_frames: int
    hop_frames: int | None = None
    taper: str = "hann"
    fps: float = 30.0

    def __post_init__(self):
        if self.w_frames < 2:
            raise SpectralError(f"window must span at least 2 frames, got {self.w_frames}")
        if self.hop_frames is None:
            object.__setattr__(self, "hop_frames", max(1, self.w_frames // 2))
        if not 1 <= self.hop_frames <= self.w_frames:
            raise SpectralError(f"hop {self.hop_frames} must lie in [1, {self.w_frames}]")
        if self.taper not in TAPERS:
            raise SpectralError(f"unknown taper {self.taper!r}")

    @property
    def n_bins(self) -> int:
        return self.w_frames // 2

    @property
    def freq_resolution_hz(self) -> float:
        return self.fps / self.w_frames

    @property
    def feature_dim(self) -> int:
        return self.n_bins + N_DESCRIPTORS

    def bin_freqs(self) -> np.ndarray:
        return np.arange(1, self.n_bins + 1) * self.freq_resolution_hz

    def n_positions(self, length: int) -> int:
        if length < self.w_frames:
            return 0
        return (length - self.w_frames) // self.hop_frames + 1


@dataclass(frozen=True)
class Psd:
    bins: np.ndarray
    freq_resolution_hz: float

    def __len__(self) -> int:
        return len(self.bins)


@dataclass(frozen=True)
class SpectralDescriptors:
    peak_height: float
    peak_freq_hz: float
    clarity: float
    entropy: float
    spacing_hz: float
    snr: float
    avg_power: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in DESCRIPTOR_NAMES])


@dataclass(frozen=True)
class SpectralFeature:
    psd: Psd
    desc: SpectralDescriptors

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.psd.bins, self.desc.as_array()])


def taper_window(w: int, taper: str) -> np.ndarray:
    if taper == "rectangular":
        return np.ones(w)
    # periodic (DFT-even) Hann
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(w) / w)


def _canonical_rotation(rows: np.ndarray) -> np.ndarray:
    """Rotate each row to its lexicographically smallest circular rotation.

    Power spectra are rotation invariant in exact arithmetic; computing them on
    a canonical rotation makes the invariance exact in floating point too.
    """
    n, w = rows.shape
    if n == 0:
        return rows
    start = np.argmin(rows, axis=1)
    mins = rows[np.arange(n), start]
    tied = np.count_nonzero(rows == mins[:, None], axis=1) > 1
    idx = (start[:, None] + np.arange(w)[None, :]) % w
    out = np.take_along_axis(rows, idx, axis=1)
    for r in np.flatnonzero(tied):
        row = rows[r]
        best = min((tuple(np.roll(row, -s)) for s in range(w)))
        out[r] = best
    return out


def psd_rows(windows, taper: str = "hann") -> np.ndarray:
    """Mean-removed, tapered power spectra of each row, bins k = 1..w//2."""
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    w = windows.shape[1]
    if taper == "rectangular":
        windows = _canonical_rotation(windows)
    centered = windows - windows.mean(axis=1, keepdims=True)
    spec = np.fft.rfft(centered * taper_window(w, taper), axis=1)
    return (spec.real ** 2 + spec.imag ** 2)[:, 1 : w // 2 + 1]


def descriptor_rows(bins: np.ndarray, freq_resolution_hz: float) -> np.ndarray:
    """Descriptors for each PSD row -> (n, 7) in ``DESCRIPTOR_NAMES`` order."""
    bins = np.atleast_2d(np.asarray(bins, dtype=float))
    n, nb = bins.shape
    if nb == 0:
        raise SpectralError("PSD has no bins")
    rows = np.arange(n)
    order = np.argsort(-bins, axis=1, kind="stable")
    k1 = order[:, 0]
    p = bins[rows, k1]
    total = bins.sum(axis=1)
    mean = total / nb
    f = (k1 + 1) * freq_resolution_hz

    with np.errstate(divide="ignore", invalid="ignore"):
        clarity = np.where(mean > 0, p / mean, 0.0)
        probs = np.where(total[:, None] > 0, bins / total[:, None], 0.0)
        plogp = np.where(probs > 0, probs * np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    if nb > 1:
        entropy = np.where(total > 0, -plogp.sum(axis=1) / np.log(nb), 1.0)
    else:
        entropy = np.where(total > 0, 0.0, 1.0)
    entropy = np.clip(entropy, 0.0, 1.0)

    if nb > 1:
        k2 = order[:, 1]
        second = bins[rows, k2]
        significant = second > 1e-12 * np.maximum(p, 1.0)
        spacing = np.where(significant, np.abs(k1 - k2) * freq_resolution_hz, 0.0)
        rest = np.sort(bins, axis=1)[:, :-1]
        floor = np.median(rest, axis=1)
    else:
        spacing = np.zeros(n)
        floor = np.zeros(n)
    snr = p / (floor + SNR_EPS)
    return np.column_stack([p, f, clarity, entropy, spacing, snr, mean])


def feature_rows(windows, spec: WindowSpec) -> np.ndarray:
    bins = psd_rows(windows, spec.taper)
    return np.hstack([bins, descriptor_rows(bins, spec.freq_resolution_hz)])


def dft_psd(window, spec: WindowSpec) -> Psd:
    window = np.asarray(window, dtype=float)
    if window.shape != (spec.w_frames,):
        raise SpectralError(f"window length {window.shape} does not match w={spec.w_frames}")
    return Psd(psd_rows(window[None, :], spec.taper)[0], spec.freq_resolution_hz)


def descriptors(psd: Psd) -> SpectralDescriptors:
    if len(psd) == 0:
        raise SpectralError("PSD has no bins")
    vals = descriptor_rows(psd.bins[None, :], psd.freq_resolution_hz)[0]
    return SpectralDescriptors(*(float(v) for v in vals))


def build_feature(window, spec: WindowSpec) -> SpectralFeature:
    psd = dft_psd(window, spec)
    return SpectralFeature(psd, descriptors(psd))


def normalize_acc_spectrum(psd: Psd) -> Psd:
    """Divide acceleration power by omega_k^2, giving a velocity-equivalent PSD."""
    k = np.arange(1, len(psd) + 1)
    omega = 2 * np.pi * k * psd.freq_resolution_hz
    return Psd(psd.bins / omega ** 2, psd.freq_resolution_hz)


def normalize_acc_rows(bins: np.ndarray, freq_resolution_hz: float) -> np.ndarray:
    k = np.arange(1, bins.shape[-1] + 1)
    omega = 2 * np.pi * k * freq_resolution_hz
    return bins / omega ** 2
