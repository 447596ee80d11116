"""Command-line entry point: ``csilab synth|train|eval|bench|gradcheck``.

Exit codes: 0 ok, 1 usage or bad configuration, 2 data error, 3 training
divergence, 4 gradient check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..baselines import spectral_cosine_scores
from ..csinet import (
    CheckpointError,
    DivergenceError,
    ModelConfig,
    Normalizer,
    build_features,
    evaluate_features,
    load,
    model_config_from_dict,
    save,
    train_on_features,
)
from ..csinet.fixtures import model_gradcheck, tiny_config
from ..signal import SignalError
from ..synth import generator_fidelity, read_dataset, write_dataset
from .bench import ABLATIONS, METHODS, TIER_NAMES, BenchConfig, BenchResult, make_dataset, run_bench
from .report import write_report

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED, EXIT_CHECK = 0, 1, 2, 3, 4
GRADCHECK_TOL = 1e-5
CHECKPOINT_NAME = "checkpoint.bin"

log = logging.getLogger("csilab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_windows(text: str) -> tuple:
    """``5:20`` (inclusive), ``5:20:3`` or ``5,8,11``."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            lo, hi = parts[0], parts[1]
            step = parts[2] if len(parts) == 3 else 1
            out = tuple(range(lo, hi + 1, step))
        else:
            out = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window spec {text!r}") from None
    if not out or min(out) < 2:
        raise argparse.ArgumentTypeError(f"bad window spec {text!r}")
    return out


def parse_ablation(text: str) -> str:
    if text in ABLATIONS or text == "time_domain":
        return text
    if text.startswith("single_window="):
        try:
            if int(text.split("=", 1)[1]) >= 2:
                return text
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"unknown ablation {text!r}")


def _tier(text: str) -> str:
    names = {t.lower(): t for t in TIER_NAMES}
    if text.lower() not in names:
        raise argparse.ArgumentTypeError(f"unknown tier {text!r}")
    return names[text.lower()]


def directory_digest(path) -> str:
    """sha256 over relative paths and contents of every file below ``path``."""
    h = hashlib.sha256()
    root = Path(path)
    for f in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(f.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(f.read_bytes())
    return h.hexdigest()


# -- configuration -----------------------------------------------------------------------

def load_run_config(args) -> BenchConfig:
    d = {}
    if getattr(args, "config", None):
        try:
            d = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise UsageError("config must be a JSON object")
    try:
        cfg = BenchConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    over = {}
    seed = getattr(args, "seed", None)
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise UsageError("--seeds must be >= 1")
        start = 0 if seed is None else seed
        over["seeds"] = tuple(range(start, start + args.seeds))
    elif seed is not None:
        over["seeds"] = (seed,)
    if "seeds" in over and "single_window_seeds" not in d:
        over["single_window_seeds"] = None
    if getattr(args, "windows", None):
        over["model"] = dict(cfg.model, windows=args.windows)
    if getattr(args, "tier", None):
        over["tiers"] = tuple(t for t in TIER_NAMES if t in set(args.tier))
    if over:
        try:
            cfg = BenchConfig.from_dict({**cfg.to_dict(), **over})
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    return cfg


def ablated_model(cfg: BenchConfig, seed: int, ablation: str | None) -> ModelConfig:
    if ablation is None:
        return cfg.model_config(seed)
    if ablation in ABLATIONS:
        return cfg.model_config(seed, **ABLATIONS[ablation])
    if ablation == "time_domain":
        return cfg.model_config(seed, mode="raw")
    return cfg.model_config(seed, windows=(int(ablation.split("=", 1)[1]),))


def _dataset(args, cfg: BenchConfig):
    if getattr(args, "data", None):
        return read_dataset(args.data)
    return make_dataset(cfg)


# -- commands ----------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = load_run_config(args)
    if args.seed is not None:
        cfg = BenchConfig.from_dict({**cfg.to_dict(), "data_seed": args.seed})
    ds = make_dataset(cfg)
    out = Path(args.out)
    try:
        write_dataset(out, ds)
    except OSError as exc:
        raise SignalError(f"cannot write dataset to {out}: {exc}") from exc
    print(f"wrote {len(ds.train)} train / {len(ds.val)} val / {len(ds.test)} test segments to {out}")
    print(f"subjects: {len(ds.train_subjects)} train, {len(ds.test_subjects)} test")
    print("generator self-check (Pearson, 3D speed vs projected 2D speed):")
    for g, r in generator_fidelity(n_segments=args.fidelity_segments, seed=cfg.data_seed).items():
        print(f"  {g.value:<10} {r:.4f}")
    print(f"digest {directory_digest(out)}")
    return EXIT_OK


def write_curves(path, curves) -> None:
    lines = ["epoch\tlr\tloss\ttrain_acc\tval_acc"]
    for r in curves:
        lines.append(f"{r['epoch']}\t{r['lr']:.8g}\t{r['loss']:.8g}\t{r['train_acc']:.6f}\t{r['val_acc']:.6f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    seed = cfg.seeds[0]
    mcfg = ablated_model(cfg, seed, args.ablation)
    tcfg = cfg.train_config(seed, raw=mcfg.mode == "raw")
    ds = _dataset(args, cfg)
    if not ds.train or not ds.val:
        raise SignalError("dataset needs non-empty train and val splits")
    tiers = tcfg.train_tiers
    train_bank = build_features(ds.train, tiers, (mcfg.mode,), mcfg.windows, mcfg.taper, mcfg.channel)
    val = build_features(ds.val, ("Clean",), (mcfg.mode,), mcfg.windows, mcfg.taper, mcfg.channel)
    res = train_on_features([train_bank[(t, mcfg.mode)] for t in tiers], val[("Clean", mcfg.mode)], mcfg, tcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = save(out / CHECKPOINT_NAME, res.arrays())
    write_curves(out / "curves.tsv", res.curves)
    meta = {"run": cfg.to_dict(), "ablation": args.ablation, "model": asdict(mcfg), "train": asdict(tcfg),
            "best_epoch": res.best_epoch, "best_val_acc": res.best_val_acc, "checkpoint_sha256": digest}
    (out / "config.json").write_text(json.dumps(meta, indent=1, sort_keys=True), encoding="utf-8")
    print(f"best epoch {res.best_epoch}, val accuracy {100 * res.best_val_acc:.2f}%")
    print(f"checkpoint {out / CHECKPOINT_NAME} sha256 {digest}")
    return EXIT_OK


def load_model(path):
    """``(params, normalizer, ModelConfig)`` from a checkpoint file or training directory."""
    p = Path(path)
    ckpt = p / CHECKPOINT_NAME if p.is_dir() else p
    try:
        meta = json.loads((ckpt.parent / "config.json").read_text(encoding="utf-8"))
        mcfg = model_config_from_dict(meta["model"])
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"{ckpt.parent}: missing or invalid config.json ({exc})") from exc
    arrays = load(ckpt, mcfg)
    params = {k: v for k, v in arrays.items() if not k.startswith("norm.")}
    return params, Normalizer.from_arrays(arrays, mcfg.mode), mcfg


def evaluate_run(cfg: BenchConfig, segments, checkpoints=(), method: str | None = None) -> BenchResult:
    """Predictions per (method, tier, seed index); one 'seed' per checkpoint."""
    res = BenchResult(cfg, [s.target_index for s in segments], [s.distance_m for s in segments],
                      [s.gesture.value for s in segments])
    if method == "spectral_cosine":
        windows = cfg.model_config().windows
        bank = build_features(segments, cfg.tiers, ("spectral",), windows)
        for tier in cfg.tiers:
            res.preds[("spectral_cosine", tier, 0)] = [int(np.argmax(spectral_cosine_scores(f, windows)))
                                                       for f in bank[(tier, "spectral")]]
        return res
    for i, ck in enumerate(checkpoints):
        params, norm, mcfg = load_model(ck)
        bank = build_features(segments, cfg.tiers, (mcfg.mode,), mcfg.windows, mcfg.taper, mcfg.channel)
        for tier in cfg.tiers:
            feats = [norm.normalize(f) for f in bank[(tier, mcfg.mode)]]
            res.preds[(method or "csinet", tier, i)], _ = evaluate_features(feats, params, mcfg)
    return res


def cmd_eval(args) -> int:
    cfg = load_run_config(args)
    if args.method not in (None, "csinet", "spectral_cosine"):
        raise UsageError("eval supports --method csinet (with --checkpoint) or spectral_cosine")
    if args.method != "spectral_cosine" and not args.checkpoint:
        raise UsageError("--checkpoint is required unless --method spectral_cosine")
    ds = _dataset(args, cfg)
    segments = ds.split(args.split)
    if not segments:
        raise SignalError(f"split {args.split!r} is empty")
    res = evaluate_run(cfg, segments, args.checkpoint or (), args.method)
    name = res.methods()[0]
    lines = ["tier\tband\taccuracy_mean\taccuracy_sd\tn_seeds"]
    for tier in cfg.tiers:
        mean, sd = res.summary(name, tier)
        n = len(res.seeds_for(name, tier))
        print(f"{tier:<6} accuracy {100 * mean:6.2f} +- {100 * sd:.2f}  (n={n}, {len(segments)} segments)")
        lines.append(f"{tier}\tall\t{mean:.6f}\t{sd:.6f}\t{n}")
        bands = res.band_index()
        for b, (lo, hi) in enumerate(cfg.bands):
            accs = [res.accuracy(name, tier, s, bands == b) for s in res.seeds_for(name, tier)]
            if not (bands == b).any():
                continue
            print(f"    {lo:g}-{hi:g} m: {100 * np.mean(accs):6.2f} +- {100 * np.std(accs):.2f}")
            lines.append(f"{tier}\t{lo:g}-{hi:g}\t{np.mean(accs):.6f}\t{np.std(accs):.6f}\t{n}")
        for g, acc in res.gesture_accuracy(name, tier).items():
            lines.append(f"{tier}\tgesture:{g}\t{acc:.6f}\t\t{n}")
        conf = res.confusion(name, tier)
        print("    confusion (rows true index, columns predicted, last = no decision): "
              + "; ".join(" ".join(str(v) for v in row) for row in conf))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_run_config(args)
    over = {}
    if args.method:
        over["methods"] = tuple(m for m in METHODS if m in set(args.method))
    if args.ablation:
        abl = [a for a in args.ablation if a in ABLATIONS]
        singles = [int(a.split("=", 1)[1]) for a in args.ablation if a.startswith("single_window=")]
        over["ablations"] = tuple(abl)
        over["single_windows"] = tuple(singles)
        if "time_domain" in args.ablation and "wo_spectral" not in over.get("methods", cfg.methods):
            over["methods"] = tuple(over.get("methods", cfg.methods)) + ("wo_spectral",)
    if over:
        try:
            cfg = BenchConfig.from_dict({**cfg.to_dict(), **over})
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
    res = run_bench(cfg, dataset=read_dataset(args.data) if args.data else None)
    paths = write_report(res, args.out)
    print(paths["markdown"].read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    over = {}
    if args.ablation in ABLATIONS:
        over = ABLATIONS[args.ablation]
    elif args.ablation == "time_domain":
        over = {"mode": "raw"}
    elif args.ablation:
        over = {"windows": (int(args.ablation.split("=", 1)[1]),)}
    errs = model_gradcheck(tiny_config(**over))
    worst = max(errs.values())
    for name, e in sorted(errs.items()):
        print(f"{'ok  ' if e < GRADCHECK_TOL else 'FAIL'} {name:<32} {e:.3e}")
    failed = [k for k, e in errs.items() if not e < GRADCHECK_TOL]
    print(f"{len(errs) - len(failed)}/{len(errs)} parameter groups pass (worst {worst:.3e}, tolerance {GRADCHECK_TOL:g})")
    return EXIT_CHECK if failed else EXIT_OK


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="csilab", description="Command source identification lab.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=False):
        sp.add_argument("--config", metavar="FILE", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", metavar="DIR", required=out_required)

    sp = sub.add_parser("synth", help="generate a dataset of segment bundles")
    common(sp, out_required=True)
    sp.add_argument("--fidelity-segments", type=int, default=100, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train one model and write a checkpoint")
    common(sp, out_required=True)
    sp.add_argument("--data", metavar="DIR", help="dataset directory (default: generate from the config)")
    sp.add_argument("--windows", type=parse_windows)
    sp.add_argument("--ablation", type=parse_ablation)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="accuracy per tier and distance band")
    common(sp)
    sp.add_argument("--data", metavar="DIR")
    sp.add_argument("--checkpoint", action="append", metavar="PATH", help="repeat for several seeds")
    sp.add_argument("--method", choices=("csinet", "spectral_cosine"))
    sp.add_argument("--split", choices=("train", "val", "test"), default="test")
    sp.add_argument("--tier", type=_tier, action="append")
    sp.add_argument("--windows", type=parse_windows, help="windows for --method spectral_cosine")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="multi-seed benchmark report")
    common(sp, out_required=True)
    sp.add_argument("--data", metavar="DIR")
    sp.add_argument("--seeds", type=int, metavar="N")
    sp.add_argument("--tier", type=_tier, action="append")
    sp.add_argument("--windows", type=parse_windows)
    sp.add_argument("--method", choices=METHODS, action="append")
    sp.add_argument("--ablation", type=parse_ablation, action="append")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    sp.add_argument("--ablation", type=parse_ablation)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"csilab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"csilab: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SignalError, CheckpointError, OSError) as exc:
        print(f"csilab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
