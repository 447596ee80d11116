"""Multi-seed benchmark: desync tiers x methods, ablations, single-window sweep."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ..baselines import prealigned_bank, score_prealigned, argmax_lowest, spectral_cosine_scores
from ..csinet import (
    ModelConfig,
    TrainConfig,
    build_features,
    config_digest,
    evaluate_features,
    tier_seed,
    train_on_features,
)
from ..synth import DISTANCE_BANDS, SceneSpec, distance_band, generate_dataset

log = logging.getLogger(__name__)

TIER_NAMES = ("Clean", "T1", "T2", "T3")
BENCH_WINDOWS = (5, 8, 11, 14, 17, 20)
METHODS = ("csinet", "wo_spectral", "linear", "xcorr", "dtw", "spectral_cosine")
PREALIGNED = {"linear": "linear", "xcorr": "xcorr", "dtw": "dtw"}
ABLATIONS = {"no_film": {"film": False}, "no_fusion": {"fusion": False}}


def bench_model_defaults() -> dict:
    """Reduced model for desk-scale runtime; every field can be overridden."""
    return {"embed_dim": 32, "windows": BENCH_WINDOWS}


def bench_train_defaults() -> dict:
    return {"epochs": 8, "batch_size": 8, "lr": 1e-3, "t_max": 8}


@dataclass
class BenchConfig:
    n_subjects: int = 38
    segments_per_subject: int = 53
    n_test_subjects: int = 8
    n_candidates: int = 3
    data_seed: int = 0
    seeds: tuple = (0, 1, 2, 3, 4)
    tiers: tuple = TIER_NAMES
    methods: tuple = METHODS
    ablations: tuple = ("no_film",)
    single_windows: tuple = ()
    single_window_seeds: tuple | None = None  # None: same as seeds
    bands: tuple = DISTANCE_BANDS
    model: dict = field(default_factory=bench_model_defaults)
    train: dict = field(default_factory=bench_train_defaults)
    raw_train: dict = field(default_factory=dict)

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ValueError("at least one seed is required")
        self.tiers = tuple(self.tiers)
        self.methods = tuple(self.methods)
        self.ablations = tuple(self.ablations)
        self.single_windows = tuple(int(w) for w in self.single_windows)
        if self.single_window_seeds is None:
            self.single_window_seeds = self.seeds
        self.single_window_seeds = tuple(int(s) for s in self.single_window_seeds)
        self.bands = tuple((float(lo), float(hi)) for lo, hi in self.bands)
        edges = [lo for lo, _ in self.bands] + [self.bands[-1][1]] if self.bands else []
        if not self.bands or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("distance bands must be non-empty and strictly increasing")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        unknown = set(self.ablations) - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablations {sorted(unknown)}")

    def model_config(self, seed: int = 0, **kw) -> ModelConfig:
        d = dict(self.model)
        d.update(kw)
        d["seed"] = seed
        return ModelConfig(**{k: tuple(v) if k == "windows" else v for k, v in d.items()})

    def train_config(self, seed: int = 0, raw: bool = False) -> TrainConfig:
        d = dict(self.train)
        if raw:
            d.update(self.raw_train)
        d["seed"] = seed
        return TrainConfig(**d)

    def digest(self) -> str:
        return config_digest(asdict(self))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class BenchResult:
    """``preds[(method, tier, seed)]`` lists predicted indices per test segment."""

    config: BenchConfig
    targets: list
    distances: list
    gestures: list
    preds: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def accuracy(self, method: str, tier: str, seed: int, mask=None) -> float:
        p = self.preds[(method, tier, seed)]
        hits = np.array([q is not None and q == t for q, t in zip(p, self.targets)], dtype=float)
        if mask is not None:
            hits = hits[np.asarray(mask, dtype=bool)]
        return float(hits.mean()) if len(hits) else float("nan")

    def seeds_for(self, method: str, tier: str) -> list:
        return sorted(s for (m, t, s) in self.preds if m == method and t == tier)

    def summary(self, method: str, tier: str) -> tuple:
        """Mean and SD (ddof 0) of accuracy over seeds."""
        accs = [self.accuracy(method, tier, s) for s in self.seeds_for(method, tier)]
        return float(np.mean(accs)), float(np.std(accs))

    def band_index(self) -> np.ndarray:
        return np.array([distance_band(d, self.config.bands) for d in self.distances], dtype=int)

    def band_accuracy(self, method: str, tier: str) -> np.ndarray:
        """Per distance band, averaged over seeds (NaN for empty bands)."""
        bands = self.band_index()
        out = []
        for b in range(len(self.config.bands)):
            m = bands == b
            out.append(np.mean([self.accuracy(method, tier, s, m) for s in self.seeds_for(method, tier)])
                       if m.any() else float("nan"))
        return np.array(out)

    def gesture_accuracy(self, method: str, tier: str) -> dict:
        g = np.array(self.gestures)
        return {name: float(np.mean([self.accuracy(method, tier, s, g == name) for s in self.seeds_for(method, tier)]))
                for name in sorted(set(self.gestures))}

    def confusion(self, method: str, tier: str) -> np.ndarray:
        """Counts of (true index, predicted index) summed over seeds; the last column is 'no decision'."""
        c = max(self.targets) + 1 if self.targets else 0
        c = max(c, self.config.n_candidates)
        out = np.zeros((c, c + 1), dtype=int)
        for s in self.seeds_for(method, tier):
            for p, t in zip(self.preds[(method, tier, s)], self.targets):
                out[t, c if p is None else p] += 1
        return out

    def methods(self) -> list:
        seen = []
        for m, _, _ in self.preds:
            if m not in seen:
                seen.append(m)
        return seen


def make_dataset(cfg: BenchConfig):
    base = SceneSpec(n_candidates=cfg.n_candidates)
    return generate_dataset(cfg.n_subjects, cfg.segments_per_subject, base=base, seed=cfg.data_seed,
                            n_test_subjects=cfg.n_test_subjects)


def _predict(result, feats, cfg):
    norm = result.normalizer
    preds, _ = evaluate_features([norm.normalize(f) for f in feats], result.params, cfg)
    return preds


def _train(name, sets, val, mcfg, tcfg, res: BenchResult, seed):
    t0 = time.time()
    out = train_on_features(sets, val, mcfg, tcfg)
    res.curves[(name, seed)] = out.curves
    res.timings[(name, seed)] = time.time() - t0
    log.info("trained %s seed %d in %.1fs (best epoch %d, val %.3f)", name, seed, time.time() - t0,
             out.best_epoch, out.best_val_acc)
    return out


def run_bench(cfg: BenchConfig, dataset=None) -> BenchResult:
    t0 = time.time()
    ds = make_dataset(cfg) if dataset is None else dataset
    test = ds.test
    res = BenchResult(cfg, [s.target_index for s in test], [s.distance_m for s in test],
                      [s.gesture.value for s in test])
    base = cfg.model_config()
    windows = base.windows
    modes = ["spectral"]
    raw_needed = any(m in cfg.methods for m in ("wo_spectral", "linear", "xcorr", "dtw"))
    if raw_needed:
        modes.append("raw")
    all_windows = tuple(sorted(set(windows) | set(cfg.single_windows)))
    train_bank = build_features(ds.train, ["Clean"], modes, all_windows, base.taper, base.channel)
    val_bank = build_features(ds.val, ["Clean"], modes, all_windows, base.taper, base.channel)
    test_bank = build_features(test, cfg.tiers, modes, all_windows, base.taper, base.channel)
    res.timings["features"] = time.time() - t0
    log.info("features ready in %.1fs", res.timings["features"])

    def select(feats, ws):
        return [replace(f, imu={w: f.imu[w] for w in ws}, flows=[{w: fl[w] for w in ws} for fl in f.flows])
                for f in feats]

    if "spectral_cosine" in cfg.methods:
        t1 = time.time()
        for tier in cfg.tiers:
            preds = [int(np.argmax(spectral_cosine_scores(f, windows))) for f in test_bank[(tier, "spectral")]]
            for seed in cfg.seeds:
                res.preds[("spectral_cosine", tier, seed)] = preds
        res.timings["spectral_cosine"] = time.time() - t1

    spectral_train = select(train_bank[("Clean", "spectral")], windows)
    spectral_val = select(val_bank[("Clean", "spectral")], windows)
    variants = []
    if "csinet" in cfg.methods:
        variants.append(("csinet", {}))
    variants += [(name, ABLATIONS[name]) for name in cfg.ablations]
    pre = [m for m in cfg.methods if m in PREALIGNED]
    bank = {}
    if raw_needed and pre:
        t1 = time.time()
        bank = prealigned_bank(test, cfg.tiers, [PREALIGNED[m] for m in pre], cfg.model_config(0, mode="raw"), tier_seed)
        res.timings["prealign"] = time.time() - t1
        log.info("pre-aligned bank ready in %.1fs", res.timings["prealign"])

    for seed in cfg.seeds:
        for name, over in variants:
            mcfg = cfg.model_config(seed, **over)
            out = _train(name, [spectral_train], spectral_val, mcfg, cfg.train_config(seed), res, seed)
            t1 = time.time()
            for tier in cfg.tiers:
                res.preds[(name, tier, seed)] = _predict(out, select(test_bank[(tier, "spectral")], windows), mcfg)
            res.timings[(f"eval_{name}", seed)] = time.time() - t1
        if not raw_needed:
            continue
        rcfg = cfg.model_config(seed, mode="raw")
        out = _train("wo_spectral", [select(train_bank[("Clean", "raw")], windows)],
                     select(val_bank[("Clean", "raw")], windows), rcfg, cfg.train_config(seed, raw=True), res, seed)
        t1 = time.time()
        for tier in cfg.tiers:
            if "wo_spectral" in cfg.methods:
                res.preds[("wo_spectral", tier, seed)] = _predict(out, select(test_bank[(tier, "raw")], windows), rcfg)
            for m in pre:
                scores = score_prealigned(bank[(tier, PREALIGNED[m])], out.params, rcfg, out.normalizer)
                res.preds[(m, tier, seed)] = [argmax_lowest(s) for s in scores]
        res.timings[("eval_raw", seed)] = time.time() - t1
        log.info("raw-network evaluation for seed %d in %.1fs", seed, time.time() - t1)

    for seed in cfg.single_window_seeds:
        for w in cfg.single_windows:
            mcfg = cfg.model_config(seed, windows=(w,))
            name = f"single_w{w:02d}"
            out = _train(name, [select(train_bank[("Clean", "spectral")], (w,))],
                         select(val_bank[("Clean", "spectral")], (w,)), mcfg, cfg.train_config(seed), res, seed)
            res.preds[(name, "Clean", seed)] = _predict(out, select(test_bank[("Clean", "spectral")], (w,)), mcfg)
    res.timings["total"] = time.time() - t0
    return res


def table_runtime(res: BenchResult) -> float:
    """Seconds spent on the tier-by-method table: features, baselines, the full
    model and the raw network (ablations and single-window sweeps excluded)."""
    keep = {"csinet", "wo_spectral", "eval_csinet", "eval_raw"}
    total = sum(v for k, v in res.timings.items() if k in ("features", "prealign", "spectral_cosine"))
    return total + sum(v for k, v in res.timings.items() if isinstance(k, tuple) and k[0] in keep)
