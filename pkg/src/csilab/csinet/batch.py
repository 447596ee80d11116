"""Feature normalisation, align-and-pad batching and external negatives."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

# descriptor columns that scale with signal power: peak_height, clarity, snr, avg_power
_POWER_DESCRIPTORS = np.array([True, False, True, False, False, True, True])
QUALITY_COLUMNS = (-2, -1)  # snr, avg_power


def power_columns(w: int, mode: str, dim: int | None = None) -> np.ndarray:
    if mode == "raw":
        return np.zeros(w if dim is None else dim, dtype=bool)
    return np.concatenate([np.ones(w // 2, dtype=bool), _POWER_DESCRIPTORS])


@dataclass
class Normalizer:
    """Per-window, per-modality column transform: log1p(x / ref) on power-like
    columns, then z-score with training statistics."""

    stats: dict = field(default_factory=dict)  # (w, modality) -> (ref, mean, std, power_mask)

    @classmethod
    def fit(cls, feats, windows, mode: str = "spectral") -> "Normalizer":
        stats = {}
        for w in windows:
            imu = np.concatenate([f.imu[w] for f in feats], axis=0)
            flow = np.concatenate([fl[w] for f in feats for fl in f.flows], axis=0)
            for name, x in (("imu", imu), ("flow", flow)):
                pmask = power_columns(w, mode, x.shape[1])
                ref = np.ones(x.shape[1])
                for j in np.flatnonzero(pmask):
                    pos = x[:, j][x[:, j] > 0]
                    if len(pos):
                        ref[j] = np.median(pos)
                y = _transform(x, ref, pmask)
                std = y.std(axis=0)
                stats[(w, name)] = (ref, y.mean(axis=0), np.where(std > 1e-12, std, 1.0), pmask)
        return cls(stats)

    def apply(self, x: np.ndarray, w: int, modality: str) -> np.ndarray:
        ref, mean, std, pmask = self.stats[(w, modality)]
        return (_transform(x, ref, pmask) - mean) / std

    def normalize(self, feat):
        """New SegmentFeatures with every sequence transformed."""
        imu = {w: self.apply(x, w, "imu") for w, x in feat.imu.items()}
        flows = [{w: self.apply(x, w, "flow") for w, x in fl.items()} for fl in feat.flows]
        return replace(feat, imu=imu, flows=flows)

    def to_arrays(self) -> dict:
        out = {}
        for (w, name), (ref, mean, std, _) in self.stats.items():
            out[f"norm.w{w:02d}.{name}.ref"] = ref
            out[f"norm.w{w:02d}.{name}.mean"] = mean
            out[f"norm.w{w:02d}.{name}.std"] = std
        return out

    @classmethod
    def from_arrays(cls, arrays: dict, mode: str) -> "Normalizer":
        stats = {}
        for key in arrays:
            if not key.startswith("norm.") or not key.endswith(".ref"):
                continue
            _, wtag, name, _ = key.split(".")
            w = int(wtag[1:])
            base = f"norm.{wtag}.{name}"
            stats[(w, name)] = (arrays[base + ".ref"], arrays[base + ".mean"], arrays[base + ".std"],
                                power_columns(w, mode, len(arrays[base + ".ref"])))
        return cls(stats)


def _transform(x, ref, pmask):
    y = np.array(x, dtype=float, copy=True)
    if pmask.any():
        y[:, pmask] = np.log1p(np.maximum(y[:, pmask], 0.0) / ref[pmask])
    return y


@dataclass
class SegmentBatch:
    """Padded batch. Per window ``w``: imu[w] (B, T, F), imu_mask[w] (B, T),
    flow[w] (B, C, T, F), flow_mask[w] (B, C, T). ``cand_mask`` (B, C)."""

    imu: dict
    imu_mask: dict
    flow: dict
    flow_mask: dict
    cand_mask: np.ndarray
    s: np.ndarray
    y: np.ndarray
    quality: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.y)

    @property
    def n_candidates(self) -> np.ndarray:
        return self.cand_mask.sum(axis=1)

    @property
    def windows(self) -> tuple:
        return tuple(sorted(self.imu))


def _quality(feat, windows) -> np.ndarray:
    """Mean normalised IMU SNR and average power across windows and time."""
    vals = [feat.imu[w][:, list(QUALITY_COLUMNS)].mean(axis=0) for w in windows if len(feat.imu[w])]
    return np.mean(vals, axis=0) if vals else np.zeros(2)


def make_batch(feats, windows, n_candidates: int | None = None) -> SegmentBatch:
    """Align-and-pad normalised SegmentFeatures into one batch."""
    feats = list(feats)
    b = len(feats)
    c = max(f.n_candidates for f in feats)
    if n_candidates is not None:
        c = max(c, n_candidates)
    imu, imu_mask, flow, flow_mask = {}, {}, {}, {}
    for w in windows:
        t = max(max(len(f.imu[w]) for f in feats), max(len(fl[w]) for f in feats for fl in f.flows))
        xi = np.zeros((b, t, feats[0].imu[w].shape[1]))
        mi = np.zeros((b, t), dtype=bool)
        xf = np.zeros((b, c, t, feats[0].flows[0][w].shape[1]))
        mf = np.zeros((b, c, t), dtype=bool)
        for i, f in enumerate(feats):
            n = len(f.imu[w])
            xi[i, :n] = f.imu[w]
            mi[i, :n] = True
            for k, fl in enumerate(f.flows):
                n = len(fl[w])
                xf[i, k, :n] = fl[w]
                mf[i, k, :n] = True
        imu[w], imu_mask[w], flow[w], flow_mask[w] = xi, mi, xf, mf
    cand = np.zeros((b, c), dtype=bool)
    for i, f in enumerate(feats):
        cand[i, : f.n_candidates] = True
    y = np.array([f.target for f in feats], dtype=np.int64)
    s = np.array([f.scale_proxy for f in feats], dtype=float)
    q = np.array([_quality(f, windows) for f in feats])
    return SegmentBatch(imu, imu_mask, flow, flow_mask, cand, s, y, q)


def augment_negatives(batch: SegmentBatch, pool, k: int = 5, seed: int = 0) -> SegmentBatch:
    """Append ``k`` flow tracks from ``pool`` (dicts w -> (T, F)) to every segment.

    Real candidates keep their slots, so each positive index is unchanged; the
    new tracks are placed right after each segment's last real candidate.
    Sampling is with replacement only when the pool holds fewer than ``k`` tracks.
    """
    if k <= 0:
        return batch
    pool = list(pool)
    if not pool:
        raise ValueError("empty negative pool")
    rng = np.random.default_rng(seed)
    b, c = batch.cand_mask.shape
    counts = batch.n_candidates
    new_c = max(c, int(counts.max()) + k)
    imu, imu_mask = dict(batch.imu), dict(batch.imu_mask)
    flow, flow_mask = {}, {}
    picks = [rng.choice(len(pool), size=k, replace=len(pool) < k) for _ in range(b)]
    for w in batch.windows:
        t = batch.flow[w].shape[2]
        t_new = max(t, max(len(pool[j][w]) for p in picks for j in p))
        xf = np.zeros((b, new_c, t_new, batch.flow[w].shape[3]))
        mf = np.zeros((b, new_c, t_new), dtype=bool)
        xf[:, :c, :t] = batch.flow[w]
        mf[:, :c, :t] = batch.flow_mask[w]
        for i in range(b):
            for slot, j in enumerate(picks[i]):
                track = pool[int(j)][w]
                xf[i, counts[i] + slot, : len(track)] = track
                mf[i, counts[i] + slot, : len(track)] = True
        flow[w], flow_mask[w] = xf, mf
        if t_new > t:
            xi = np.zeros((b, t_new, batch.imu[w].shape[2]))
            mi = np.zeros((b, t_new), dtype=bool)
            xi[:, :t] = batch.imu[w]
            mi[:, :t] = batch.imu_mask[w]
            imu[w], imu_mask[w] = xi, mi
    cand = np.zeros((b, new_c), dtype=bool)
    for i in range(b):
        cand[i, : counts[i] + k] = True
    return SegmentBatch(imu, imu_mask, flow, flow_mask, cand, batch.s, batch.y, batch.quality)
