"""Comparison methods: pre-alignment plus time-domain matching, and a spectral-cosine oracle."""

from .align import (
    AlignmentError,
    AlignmentResult,
    dtw_align,
    estimate_alignment,
    event_pairs,
    linear_time_fit,
    warp_by_path,
    xcorr_align,
    xcorr_lags,
)
from .spectral_cosine import spectral_cosine_match, spectral_cosine_scores
from .time_domain import (
    MAX_LAG_S,
    PREALIGN_METHODS,
    aligned_imu,
    argmax_lowest,
    flow_activity,
    prealigned_bank,
    prealigned_features,
    score_prealigned,
    time_domain_match,
)
