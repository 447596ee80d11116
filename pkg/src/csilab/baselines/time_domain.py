"""Time-domain matching: the CSINet architecture fed raw per-frame windows,
optionally after classical pre-alignment of the IMU stream to each candidate."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..csinet.batch import make_batch
from ..csinet.config import ModelConfig
from ..csinet.model import forward
from ..pipeline import SegmentFeatures, flow_channel, imu_linear_acceleration, reconstruct_clock
from ..spectral.features import multi_window_features
from ..synth.scene import NoiseTier, inject_desync
from .align import estimate_alignment, warp_by_path

PREALIGN_METHODS = ("linear", "xcorr", "dtw")
MAX_LAG_S = 0.6  # covers the largest global offset plus drift over a segment


def _sample(t_clock, a, times) -> np.ndarray:
    return np.column_stack([np.interp(times, t_clock, a[:, j]) for j in range(a.shape[1])])


def flow_activity(v) -> np.ndarray:
    """Image-plane acceleration magnitude, comparable in shape to IMU |a|."""
    return np.linalg.norm(np.gradient(np.asarray(v, dtype=float), axis=0), axis=1)


def aligned_imu(t_clock, a, flow_v, n_frames: int, fps: float, method: str) -> np.ndarray:
    """IMU channel re-expressed on the candidate's frame grid after pre-alignment."""
    grid = np.arange(n_frames) / fps
    base = _sample(t_clock, a, grid)
    if method == "none":
        return base
    res = estimate_alignment(method, np.linalg.norm(base, axis=1), flow_activity(flow_v), fps, MAX_LAG_S)
    if method == "dtw":
        return warp_by_path(base, res.path, n_frames)
    return _sample(t_clock, a, (grid - res.offset_s) / res.slope)


def prealigned_features(segment, method: str, cfg: ModelConfig, a=None) -> list:
    """One single-candidate SegmentFeatures per candidate, IMU aligned to that candidate.

    ``a`` may carry a precomputed device-order linear acceleration (it does not
    depend on the receive timestamps).
    """
    if a is None:
        _, a = imu_linear_acceleration(segment.imu)
    t_clock = reconstruct_clock(segment.imu.t)
    out = []
    for k, flow in enumerate(segment.flows):
        v = flow_channel(flow, "axes")
        imu = aligned_imu(t_clock, a, v, segment.n_frames, segment.fps, method)
        if cfg.channel == "magnitude":
            imu, v = np.linalg.norm(imu, axis=1), np.linalg.norm(v, axis=1)
        fi = multi_window_features(imu, windows=cfg.windows, taper=cfg.taper, mode=cfg.mode, fps=segment.fps,
                                   acc_normalized=(cfg.mode == "spectral")).features
        ff = multi_window_features(v, windows=cfg.windows, taper=cfg.taper, mode=cfg.mode, fps=segment.fps,
                                   channel="flow").features
        out.append(SegmentFeatures(fi, [ff], flow.scale_proxy, 0, segment.distance_m, segment.gesture.value,
                                   segment.seed))
    return out


def prealigned_bank(segments, tiers, methods, cfg: ModelConfig, tier_seed) -> dict:
    """``{(tier, method): [[per-candidate features], ...]}``, attitude filter run once per segment."""
    tiers = [NoiseTier(t).value for t in tiers]
    out = {(t, m): [] for t in tiers for m in methods}
    for seg in segments:
        _, a = imu_linear_acceleration(seg.imu)
        for t in tiers:
            variant = inject_desync(seg, t, tier_seed(seg.seed, t))
            for m in methods:
                out[(t, m)].append(prealigned_features(variant, m, cfg, a=a))
    return out


def score_prealigned(per_segment, params: dict, cfg: ModelConfig, normalizer, batch_size: int = 64) -> list:
    """Final scores per segment (one array of candidate scores each)."""
    consts = {k: Tensor(v) for k, v in params.items()}
    flat = [normalizer.normalize(f) for feats in per_segment for f in feats]
    finals = []
    for i in range(0, len(flat), batch_size):
        chunk = flat[i : i + batch_size]
        _, sc = forward(make_batch(chunk, cfg.windows), consts, cfg, train=False)
        finals += [float(sc.final[j, 0]) if sc.valid[j, 0] else -np.inf for j in range(len(chunk))]
    out, pos = [], 0
    for feats in per_segment:
        out.append(np.array(finals[pos : pos + len(feats)]))
        pos += len(feats)
    return out


def argmax_lowest(scores) -> int | None:
    scores = np.asarray(scores, dtype=float)
    if not np.any(np.isfinite(scores)):
        return None
    return int(np.argmax(np.where(np.isfinite(scores), scores, -np.inf)))


def time_domain_match(segment, params: dict, cfg: ModelConfig, normalizer, method: str = "none") -> int | None:
    """Candidate picked by the time-domain network, after optional pre-alignment."""
    feats = prealigned_features(segment, method, cfg)
    return argmax_lowest(score_prealigned([feats], params, cfg, normalizer)[0])
