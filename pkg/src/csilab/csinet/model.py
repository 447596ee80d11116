"""CSINet forward pass.

Per window scale: input projections, FiLM on the IMU stream, IMU-anchored
cross-attention over each candidate's flow sequence, masked pooling and cosine
similarity. Scales are then fused with weights predicted from the scale proxy.

Scales with similar sequence lengths are evaluated together as one stacked
block (parameters stacked along a leading axis); this is purely a speed-up and
each scale keeps its own parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .config import ModelConfig

S_REF = 0.036  # scale proxy of a person at roughly 10 m
GROUP_RATIO = 1.35


class NoDecision(Exception):
    """Every candidate is invalid."""


def _xavier(rng, fan_in, fan_out, shape=None):
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, shape or (fan_in, fan_out))


def _block_names(cfg: ModelConfig) -> list:
    names = ["film.W1", "film.b1", "film.W2", "film.b2"]
    for l in range(cfg.attn_layers):
        names += [f"attn{l}.Wq", f"attn{l}.Wk", f"attn{l}.Wo", f"attn{l}.bo", f"attn{l}.ln_g", f"attn{l}.ln_b"]
        if not cfg.shared_kv_projection:
            names.append(f"attn{l}.Wv")
    return names


def _init_block(rng, cfg: ModelConfig) -> dict:
    d = cfg.embed_dim
    p = {
        "film.W1": _xavier(rng, d, d),
        "film.b1": np.zeros(d),
        "film.W2": rng.normal(0.0, 0.01, (d, 2 * d)),
        "film.b2": np.concatenate([np.ones(d), np.zeros(d)]),
    }
    for l in range(cfg.attn_layers):
        p[f"attn{l}.Wq"] = _xavier(rng, d, d)
        p[f"attn{l}.Wk"] = _xavier(rng, d, d)
        if not cfg.shared_kv_projection:
            p[f"attn{l}.Wv"] = _xavier(rng, d, d)
        p[f"attn{l}.Wo"] = _xavier(rng, d, d)
        p[f"attn{l}.bo"] = np.zeros(d)
        p[f"attn{l}.ln_g"] = np.ones(d)
        p[f"attn{l}.ln_b"] = np.zeros(d)
    return p


def init_params(cfg: ModelConfig) -> dict:
    """Named parameter arrays, deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.embed_dim
    params = {}
    for w in cfg.windows:
        fi, ff = cfg.feature_dim(w, "imu"), cfg.feature_dim(w, "flow")
        tag = f"w{w:02d}"
        params[f"{tag}.in_imu.W"] = _xavier(rng, fi, d)
        params[f"{tag}.in_imu.b"] = np.zeros(d)
        params[f"{tag}.in_flow.W"] = _xavier(rng, ff, d)
        params[f"{tag}.in_flow.b"] = np.zeros(d)
    blocks = [("shared", None)] if cfg.share_scales else [(f"w{w:02d}", w) for w in cfg.windows]
    for tag, _ in blocks:
        for name, arr in _init_block(rng, cfg).items():
            params[f"{tag}.{name}"] = arr
    n_in = 3 if cfg.fusion_uses_quality else 1
    params["fusion.W1"] = _xavier(rng, n_in, cfg.fusion_hidden)
    params["fusion.b1"] = np.zeros(cfg.fusion_hidden)
    params["fusion.W2"] = rng.normal(0.0, 0.01, (cfg.fusion_hidden, len(cfg.windows)))
    params["fusion.b2"] = np.zeros(len(cfg.windows))
    return dict(sorted(params.items()))


def expected_shapes(cfg: ModelConfig) -> dict:
    return {k: v.shape for k, v in init_params(cfg).items()}


def as_tensors(params: dict) -> dict:
    return {k: (v if isinstance(v, Tensor) else Tensor(v, requires_grad=True, name=k)) for k, v in params.items()}


@dataclass
class Scores:
    """``sims`` (B, C, S) per-window similarities, ``final`` (B, C), ``alpha`` (B, S),
    ``valid`` (B, C). Invalid candidates score -1."""

    sims: np.ndarray
    final: np.ndarray
    alpha: np.ndarray
    valid: np.ndarray


def group_windows(lengths: dict, ratio: float = GROUP_RATIO) -> list:
    """Group scales whose sequence lengths are within ``ratio`` of each other."""
    order = sorted(lengths, key=lambda w: (-lengths[w], w))
    groups, cur = [], []
    for w in order:
        if cur and lengths[cur[0]] > ratio * max(lengths[w], 1):
            groups.append(tuple(cur))
            cur = []
        cur.append(w)
    if cur:
        groups.append(tuple(cur))
    return groups


# -- building blocks ------------------------------------------------------------------

def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """x (G, ..., Din) @ W (G|1, Din, Dout) + b (G|1, Dout)."""
    shape = x.shape
    g = shape[0]
    y = ad.matmul(x.reshape(g, -1, shape[-1]), W)
    if b is not None:
        y = y + b.reshape(b.shape[0], 1, b.shape[-1])
    return y.reshape(shape[:-1] + (W.shape[-1],))


def film_modulate(x: Tensor, W1, b1, W2, b2) -> Tensor:
    """(gamma, beta) = MLP(x); returns gamma * x + beta. Works on (G, ..., D)."""
    d = x.shape[-1]
    h = ad.leaky_relu(linear(x, W1, b1))
    gb = linear(h, W2, b2)
    gamma = gb[..., :d]
    beta = gb[..., d:]
    return ad.scale_shift(x, gamma, beta)


def attention_weights(q_in: Tensor, flow: Tensor, key_mask: np.ndarray, p: dict, cfg: ModelConfig):
    """Per-head weights (G, B, C, H, Tq, T) over unmasked flow positions, and the values."""
    g, b, c, t, _ = flow.shape
    tq = q_in.shape[3]
    h, dh = cfg.heads, cfg.head_dim
    q = linear(q_in, p["Wq"]).reshape(g, b, q_in.shape[2], tq, h, dh).transpose(0, 1, 2, 4, 3, 5)
    k = linear(flow, p["Wk"]).reshape(g, b, c, t, h, dh).transpose(0, 1, 2, 4, 3, 5)
    v = k if "Wv" not in p else linear(flow, p["Wv"]).reshape(g, b, c, t, h, dh).transpose(0, 1, 2, 4, 3, 5)
    logits = ad.matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    return ad.masked_softmax(logits, key_mask[:, :, :, None, None, :]), v


def cross_modal_attend(q_in: Tensor, flow: Tensor, key_mask: np.ndarray, p: dict, cfg: ModelConfig,
                       train: bool, seed: int, layer: int, step: int) -> Tensor:
    """One attention block. q_in (G, B, Cq, T, D), flow (G, B, C, T, D), key_mask (G, B, C, T)."""
    g, b, c, t, d = flow.shape
    tq = q_in.shape[3]
    attn, v = attention_weights(q_in, flow, key_mask, p, cfg)
    attn = ad.dropout(attn, cfg.dropout, train, seed=seed, layer=layer, step=step)
    out = ad.matmul(attn, v).transpose(0, 1, 2, 4, 3, 5).reshape(g, b, c, tq, d)
    out = linear(out, p["Wo"], p["bo"])
    return ad.layer_norm(q_in + out, p["ln_g"].reshape(p["ln_g"].shape[0], 1, 1, 1, d),
                         p["ln_b"].reshape(p["ln_b"].shape[0], 1, 1, 1, d))


def similarity(imu_seq: Tensor, flow_seq: Tensor, mask: np.ndarray) -> Tensor:
    """Masked mean over time, l2-normalise, dot. imu (..., T, D), flow (..., C, T, D),
    mask (..., T) on the IMU time base -> (..., C)."""
    a = ad.l2_normalize(ad.masked_mean(imu_seq, mask[..., :, None], axis=-2), axis=-1)
    f = ad.l2_normalize(ad.masked_mean(flow_seq, mask[..., None, :, None], axis=-2), axis=-1)
    return (f * a.reshape(a.shape[:-1] + (1, a.shape[-1]))).sum(axis=-1)


def fuse_windows(sims: Tensor, logits: Tensor | None):
    """sims (B, C, S); logits (B, S) or None for uniform weights -> (final (B, C), alpha (B, S))."""
    bsz, _, s = sims.shape
    if logits is None:
        alpha = Tensor(np.full((bsz, s), 1.0 / s))
    else:
        alpha = ad.softmax(logits, axis=-1)
    final = (sims * alpha.reshape(bsz, 1, s)).sum(axis=-1)
    return final, alpha


def fusion_logits(params: dict, cfg: ModelConfig, s: np.ndarray, quality: np.ndarray | None) -> Tensor:
    u = np.log(np.maximum(np.asarray(s, dtype=float), 1e-6) / S_REF)[:, None]
    if cfg.fusion_uses_quality:
        q = np.zeros((len(u), 2)) if quality is None else np.asarray(quality, dtype=float)
        u = np.concatenate([u, q], axis=1)
    h = ad.leaky_relu(Tensor(u) @ params["fusion.W1"] + params["fusion.b1"])
    return h @ params["fusion.W2"] + params["fusion.b2"]


# -- forward ----------------------------------------------------------------------

def _stacked(params: dict, cfg: ModelConfig, group: tuple, name: str) -> Tensor:
    if cfg.share_scales:
        t = params[f"shared.{name}"]
        return t.reshape((1,) + t.shape)
    tensors = [params[f"w{w:02d}.{name}"] for w in group]
    if len(tensors) == 1:
        t = tensors[0]
        return t.reshape((1,) + t.shape)
    return ad.stack(tensors, axis=0)


def _pad_time(x: Tensor, t: int, axis: int) -> Tensor:
    n = x.shape[axis]
    if n == t:
        return x
    shape = list(x.shape)
    shape[axis] = t - n
    return ad.concat([x, Tensor(np.zeros(shape))], axis=axis)


def forward(batch, params: dict, cfg: ModelConfig, train: bool = False, step: int = 0, seed: int | None = None):
    """Returns ``(final_scores_tensor, Scores)``; padded candidates score -1."""
    seed = cfg.seed if seed is None else seed
    windows = cfg.windows
    bsz, c = batch.cand_mask.shape
    lengths = {w: batch.imu[w].shape[1] for w in windows}
    frame_any = np.zeros((bsz, c), dtype=bool)
    for w in windows:
        frame_any |= batch.flow_mask[w].any(axis=2)
    valid = batch.cand_mask & frame_any

    per_window = {}
    for gi, group in enumerate(group_windows(lengths)):
        t = max(lengths[w] for w in group)
        imu_parts, flow_parts, imu_masks, flow_masks = [], [], [], []
        for w in group:
            tag = f"w{w:02d}"
            im = batch.imu_mask[w]
            fm = batch.flow_mask[w] & batch.cand_mask[:, :, None]
            # masked entries are replaced, never combined arithmetically
            xi = np.where(im[..., None], batch.imu[w], 0.0)
            xf = np.where(fm[..., None], batch.flow[w], 0.0)
            ei = Tensor(xi) @ params[f"{tag}.in_imu.W"] + params[f"{tag}.in_imu.b"]
            ef = Tensor(xf) @ params[f"{tag}.in_flow.W"] + params[f"{tag}.in_flow.b"]
            imu_parts.append(_pad_time(ei, t, 1))
            flow_parts.append(_pad_time(ef, t, 2))
            imu_masks.append(np.pad(im, ((0, 0), (0, t - im.shape[1]))))
            flow_masks.append(np.pad(fm, ((0, 0), (0, 0), (0, t - fm.shape[2]))))
        imu_e = ad.stack(imu_parts, 0) if len(group) > 1 else imu_parts[0].reshape((1,) + imu_parts[0].shape)
        flow_e = ad.stack(flow_parts, 0) if len(group) > 1 else flow_parts[0].reshape((1,) + flow_parts[0].shape)
        imu_m = np.stack(imu_masks, 0)
        flow_m = np.stack(flow_masks, 0)

        if cfg.film:
            imu_e = film_modulate(imu_e, *(_stacked(params, cfg, group, n) for n in ("film.W1", "film.b1", "film.W2", "film.b2")))
        x = imu_e.reshape(imu_e.shape[:2] + (1,) + imu_e.shape[2:])
        for l in range(cfg.attn_layers):
            names = ["Wq", "Wk", "Wo", "bo", "ln_g", "ln_b"] + ([] if cfg.shared_kv_projection else ["Wv"])
            p = {n: _stacked(params, cfg, group, f"attn{l}.{n}") for n in names}
            x = cross_modal_attend(x, flow_e, flow_m, p, cfg, train, seed, layer=gi * 16 + l, step=step)
        sims = similarity(imu_e, x, imu_m)  # (G, B, C)
        for j, w in enumerate(group):
            per_window[w] = sims[j]

    sims = ad.stack([per_window[w] for w in windows], axis=-1)  # (B, C, S)
    sims = ad.where(valid[:, :, None], sims, -1.0)
    logits = fusion_logits(params, cfg, batch.s, batch.quality) if cfg.fusion else None
    final, alpha = fuse_windows(sims, logits)
    final = ad.where(valid, final, -1.0)
    return final, Scores(sims.data.copy(), final.data.copy(), alpha.data.copy(), valid)


def infonce_loss(scores: Tensor, y, valid=None, tau: float = 0.07, lam: float = 0.0, params=None,
                 clip: float = 30.0) -> Tensor:
    """Mean over segments of -log softmax(s / tau)[y] over valid candidates, plus lam * ||theta||^2."""
    scores = scores if isinstance(scores, Tensor) else Tensor(scores)
    y = np.asarray(y, dtype=np.int64)
    bsz, c = scores.shape
    if valid is None:
        valid = np.ones((bsz, c), dtype=bool)
    if np.any(y < 0) or np.any(y >= c) or not np.all(valid[np.arange(bsz), y]):
        raise ValueError("positive index out of range of the valid candidates")
    logits = ad.clip(ad.sanitize(scores * (1.0 / tau)), -clip, clip)
    logp = ad.log_softmax(logits, axis=-1, mask=valid)
    loss = ad.gather_last(logp, y).mean() * -1.0
    if lam and params:
        reg = None
        for t in params.values():
            term = (t * t).sum()
            reg = term if reg is None else reg + term
        loss = loss + reg * lam
    return loss


def predict_from_scores(scores: Scores):
    """Arg-max over valid candidates, lowest index on ties; None when nothing is valid."""
    out = []
    for i in range(len(scores.final)):
        v = scores.valid[i]
        if not v.any():
            out.append(None)
            continue
        vals = np.where(v, scores.final[i], -np.inf)
        out.append(int(np.argmax(vals)))
    return out
