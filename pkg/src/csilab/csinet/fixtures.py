"""Tiny deterministic batch and the full-model finite-difference check."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, numeric_grad, rel_error
from .batch import SegmentBatch
from .config import ModelConfig
from .model import as_tensors, forward, infonce_loss, init_params

TINY_WINDOWS = (5, 6)


def tiny_config(**kw) -> ModelConfig:
    d = {"embed_dim": 8, "heads": 4, "attn_layers": 2, "windows": TINY_WINDOWS, "fusion_hidden": 4, "seed": 3}
    d.update(kw)
    return ModelConfig(**d)


def tiny_batch(cfg: ModelConfig, seed: int = 0, n_segments: int = 2, n_candidates: int = 2, t: int = 6) -> SegmentBatch:
    """Random features; the last segment has one padded frame in every sequence."""
    rng = np.random.default_rng(seed)
    imu, imu_mask, flow, flow_mask = {}, {}, {}, {}
    for w in cfg.windows:
        imu[w] = rng.normal(size=(n_segments, t, cfg.feature_dim(w, "imu")))
        flow[w] = rng.normal(size=(n_segments, n_candidates, t, cfg.feature_dim(w, "flow")))
        imu_mask[w] = np.ones((n_segments, t), dtype=bool)
        flow_mask[w] = np.ones((n_segments, n_candidates, t), dtype=bool)
        imu_mask[w][-1, -1] = False
        flow_mask[w][-1, :, -1] = False
    cand = np.ones((n_segments, n_candidates), dtype=bool)
    y = np.arange(n_segments) % n_candidates
    s = rng.uniform(0.02, 0.12, n_segments)
    quality = rng.normal(size=(n_segments, 2))
    return SegmentBatch(imu, imu_mask, flow, flow_mask, cand, s, y, quality)


def model_loss(params: dict, batch: SegmentBatch, cfg: ModelConfig) -> Tensor:
    final, scores = forward(batch, params, cfg, train=False)
    return infonce_loss(final, batch.y, scores.valid, tau=cfg.temperature, lam=cfg.loss_l2, params=params,
                        clip=cfg.logit_clip)


def model_gradcheck(cfg: ModelConfig | None = None, batch: SegmentBatch | None = None, step: float = 1e-6,
                    backward_hook=None) -> dict:
    """Relative error between analytic and central-difference gradients, per parameter array.

    ``backward_hook(name, grad) -> grad`` may alter analytic gradients (used to
    confirm that a corrupted backward pass is caught).
    """
    cfg = tiny_config() if cfg is None else cfg
    batch = tiny_batch(cfg) if batch is None else batch
    arrays = init_params(cfg)
    names = sorted(arrays)
    tensors = as_tensors(arrays)
    model_loss(tensors, batch, cfg).backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tensors.items()}
    if backward_hook is not None:
        analytic = {k: backward_hook(k, g) for k, g in analytic.items()}
    flat = [arrays[k] for k in names]

    def value(*arrs):
        return float(model_loss({k: Tensor(a) for k, a in zip(names, arrs)}, batch, cfg).data)

    return {k: rel_error(analytic[k], numeric_grad(value, flat, i, step)) for i, k in enumerate(names)}
