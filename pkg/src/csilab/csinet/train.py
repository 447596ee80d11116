"""InfoNCE training loop: AdamW with a per-epoch cosine schedule, external
negatives, desync-tier augmentation, early stopping on validation accuracy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..pipeline import channel_features, variant_channels
from ..spectral.features import multi_window_features
from ..synth.scene import NoiseTier, inject_desync
from .batch import Normalizer, augment_negatives, make_batch
from .config import ModelConfig, TrainConfig
from .model import NoDecision, as_tensors, forward, infonce_loss, init_params, predict_from_scores

log = logging.getLogger(__name__)
MAX_BAD_STEPS = 3
EVAL_BATCH = 32


class DivergenceError(RuntimeError):
    """Loss stayed non-finite for too many consecutive steps."""


@dataclass
class TrainResult:
    params: dict
    normalizer: Normalizer
    curves: list = field(default_factory=list)  # dicts: epoch, lr, loss, train_acc, val_acc
    best_epoch: int = -1
    best_val_acc: float = 0.0
    stopped_early: bool = False

    def arrays(self) -> dict:
        """Model parameters and normaliser statistics, ready for the checkpoint writer."""
        out = dict(self.params)
        out.update(self.normalizer.to_arrays())
        return dict(sorted(out.items()))


def tier_seed(segment_seed: int, tier) -> int:
    return (int(segment_seed) * 7919 + 1 + list(NoiseTier).index(NoiseTier(tier))) & 0x7FFFFFFF


def features_for(segments, cfg: ModelConfig, tier="Clean") -> list:
    """Raw (un-normalised) features of each segment after injecting ``tier`` desync."""
    return build_features(segments, (tier,), (cfg.mode,), cfg.windows, cfg.taper, cfg.channel)[(NoiseTier(tier).value, cfg.mode)]


def build_features(segments, tiers, modes, windows, taper: str = "rectangular", channel: str = "axes") -> dict:
    """``{(tier, mode): [SegmentFeatures]}`` with shared work done once per segment."""
    tiers = [NoiseTier(t).value for t in tiers]
    out = {(t, m): [] for t in tiers for m in modes}
    for seg in segments:
        variants = {t: inject_desync(seg, t, tier_seed(seg.seed, t)) for t in tiers}
        chans = variant_channels(variants, channel)
        first = chans[tiers[0]]
        for m in modes:
            flows = [multi_window_features(v, windows=windows, taper=taper, mode=m, fps=seg.fps,
                                           channel="flow").features for v in first.flows]
            for t in tiers:
                out[(t, m)].append(channel_features(chans[t], windows, m, taper, seg.fps, flows=flows))
    return out


def evaluate_features(feats, params: dict, cfg: ModelConfig, batch_size: int = EVAL_BATCH):
    """Predictions (None for no decision) and per-segment Scores for normalised features."""
    consts = {k: Tensor(v) for k, v in params.items()}
    preds, scores = [], []
    for i in range(0, len(feats), batch_size):
        chunk = feats[i : i + batch_size]
        _, sc = forward(make_batch(chunk, cfg.windows), consts, cfg, train=False)
        preds += predict_from_scores(sc)
        for j in range(len(chunk)):
            c = chunk[j].n_candidates
            scores.append(type(sc)(sc.sims[j, :c], sc.final[j, :c], sc.alpha[j], sc.valid[j, :c]))
    return preds, scores


def accuracy(preds, feats) -> float:
    if not feats:
        return 0.0
    return float(np.mean([p is not None and p == f.target for p, f in zip(preds, feats)]))


def _negative_pool(feats, exclude, rng, size):
    n = len(feats)
    others = np.setdiff1d(np.arange(n), np.asarray(list(exclude)))
    if len(others) == 0:
        others = np.arange(n)
    segs = rng.choice(others, size=size, replace=True)
    return [feats[s].flows[int(rng.integers(feats[s].n_candidates))] for s in segs]


def train_on_features(train_sets, val_feats, mcfg: ModelConfig, tcfg: TrainConfig, params: dict | None = None,
                      normalizer: Normalizer | None = None, callback=None) -> TrainResult:
    """Train from precomputed raw features.

    ``train_sets`` is a list of feature lists, one per augmentation tier, all
    indexed by the same segments; each epoch draws one tier per segment.
    """
    train_sets = [list(s) for s in train_sets]
    n = len(train_sets[0])
    if n == 0 or any(len(s) != n for s in train_sets):
        raise ValueError("training feature sets must be non-empty and of equal length")
    if normalizer is None:
        normalizer = Normalizer.fit(train_sets[0], mcfg.windows, mcfg.mode)
    train_sets = [[normalizer.normalize(f) for f in s] for s in train_sets]
    val = [normalizer.normalize(f) for f in val_feats]

    params = {k: np.array(v, dtype=float, copy=True) for k, v in (params or init_params(mcfg)).items()}
    opt = ad.AdamW(lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    sched = ad.CosineSchedule(tcfg.lr, t_max=tcfg.t_max, eta_min=tcfg.lr * tcfg.eta_min_ratio)
    rng = np.random.default_rng(np.random.SeedSequence([tcfg.seed, 0xC51]))
    result = TrainResult(params={k: v.copy() for k, v in params.items()}, normalizer=normalizer)
    best, since, step, bad = -1.0, 0, 0, 0

    for epoch in range(tcfg.epochs):
        lr = sched.lr(epoch)
        order = rng.permutation(n)
        tiers = rng.integers(len(train_sets), size=n)
        losses, hits = [], []
        batches = [order[i : i + tcfg.batch_size] for i in range(0, n, tcfg.batch_size)]
        if tcfg.max_steps_per_epoch:
            batches = batches[: tcfg.max_steps_per_epoch]
        for idx in batches:
            chunk = [train_sets[tiers[i]][i] for i in idx]
            batch = make_batch(chunk, mcfg.windows)
            if mcfg.n_negatives > 0 and n > 1:
                pool = _negative_pool(train_sets[0], idx, rng, 4 * mcfg.n_negatives)
                batch = augment_negatives(batch, pool, mcfg.n_negatives, seed=int(rng.integers(2**31)))
            tparams = as_tensors(params)
            final, sc = forward(batch, tparams, mcfg, train=True, step=step)
            loss = infonce_loss(final, batch.y, sc.valid, tau=mcfg.temperature, lam=mcfg.loss_l2,
                                params=tparams, clip=mcfg.logit_clip)
            step += 1
            if not np.isfinite(loss.item()):
                bad += 1
                log.warning("non-finite loss at step %d (%d consecutive)", step, bad)
                if bad >= MAX_BAD_STEPS:
                    raise DivergenceError(f"loss non-finite for {bad} consecutive steps (epoch {epoch}, step {step})")
                continue
            bad = 0
            loss.backward()
            grads = {k: np.nan_to_num(t.grad, nan=0.0, posinf=0.0, neginf=0.0) if t.grad is not None else None
                     for k, t in tparams.items()}
            opt.step(params, grads, lr)
            losses.append(loss.item())
            hits += [p == y for p, y in zip(predict_from_scores(sc), batch.y)]

        val_preds, _ = evaluate_features(val, params, mcfg) if val else ([], [])
        val_acc = accuracy(val_preds, val)
        row = {"epoch": epoch, "lr": lr, "loss": float(np.mean(losses)) if losses else float("nan"),
               "train_acc": float(np.mean(hits)) if hits else 0.0, "val_acc": val_acc}
        result.curves.append(row)
        log.info("epoch %d lr %.3g loss %.4f train %.3f val %.3f", epoch, lr, row["loss"], row["train_acc"], val_acc)
        if callback is not None:
            callback(row)
        if val_acc > best:
            best, since = val_acc, 0
            result.params = {k: v.copy() for k, v in params.items()}
            result.best_epoch, result.best_val_acc = epoch, val_acc
        else:
            since += 1
            if since >= tcfg.patience:
                result.stopped_early = True
                break
    return result


def train(dataset, mcfg: ModelConfig, tcfg: TrainConfig, callback=None) -> TrainResult:
    """Train on ``dataset.train`` (augmented with ``tcfg.train_tiers``), select on clean ``dataset.val``."""
    if not dataset.train:
        raise ValueError("empty training split")
    sets = [features_for(dataset.train, mcfg, tier) for tier in tcfg.train_tiers]
    val = features_for(dataset.val, mcfg)
    return train_on_features(sets, val, mcfg, tcfg, callback=callback)


def predict(segment, params: dict, cfg: ModelConfig, normalizer: Normalizer):
    """``(target index, Scores)`` for one segment; raises NoDecision when no candidate is valid."""
    feat = normalizer.normalize(features_for([segment], cfg)[0])
    preds, scores = evaluate_features([feat], params, cfg)
    if preds[0] is None:
        raise NoDecision("every candidate is invalid")
    return preds[0], scores[0]
