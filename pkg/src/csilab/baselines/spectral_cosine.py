"""Non-learned matcher: cosine between mean PSDs, averaged over window sizes."""

from __future__ import annotations

import numpy as np

from ..pipeline import SegmentFeatures, segment_features
from ..spectral.features import DEFAULT_WINDOWS

EPS = 1e-12


def _mean_psd(rows: np.ndarray, w: int) -> np.ndarray:
    v = rows[:, : w // 2].mean(axis=0)
    n = np.linalg.norm(v)
    return v / n if n > EPS else v


def spectral_cosine_scores(feat: SegmentFeatures, windows=None) -> np.ndarray:
    """Per-candidate score: mean over windows of cos(IMU normalised-acceleration PSD, flow PSD)."""
    windows = tuple(sorted(feat.imu)) if windows is None else tuple(windows)
    scores = np.zeros(feat.n_candidates)
    for w in windows:
        a = _mean_psd(feat.imu[w], w)
        for k, fl in enumerate(feat.flows):
            scores[k] += float(a @ _mean_psd(fl[w], w))
    return scores / len(windows)


def spectral_cosine_match(segment_or_features, windows=DEFAULT_WINDOWS, taper: str = "rectangular",
                          channel: str = "axes") -> int:
    """Arg-max candidate, lowest index on ties."""
    feat = segment_or_features
    if not isinstance(feat, SegmentFeatures):
        feat = segment_features(feat, windows, "spectral", taper, channel)
    return int(np.argmax(spectral_cosine_scores(feat, windows)))
