"""Markdown and TSV benchmark reports. Reports carry the config digest and no
wall-clock numbers, so identical (config, seeds) give identical bytes."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bench import METHODS, BenchResult

METHOD_LABELS = {
    "csinet": "CSINet",
    "wo_spectral": "w/o spectral",
    "linear": "Linear",
    "xcorr": "XCorr",
    "dtw": "DTW",
    "spectral_cosine": "Spectral cosine",
    "no_film": "-FiLM",
    "no_fusion": "-fusion",
}


def _pct(x: float) -> str:
    return "nan" if not np.isfinite(x) else f"{100 * x:.2f}"


def _band_label(band) -> str:
    return f"{band[0]:g}-{band[1]:g} m"


def single_window_names(res: BenchResult) -> list:
    return sorted({m for m in res.methods() if m.startswith("single_w")}, key=lambda m: int(m[len("single_w"):]))


def window_band_matrix(res: BenchResult, tier: str = "Clean"):
    """``(windows, matrix)``: accuracy of each single-window model per distance band."""
    names = single_window_names(res)
    windows = [int(m[len("single_w"):]) for m in names]
    mat = np.array([res.band_accuracy(m, tier) for m in names]) if names else np.zeros((0, len(res.config.bands)))
    return windows, mat


def best_window_per_band(windows, mat) -> list:
    """Smallest window attaining the band maximum; None for empty bands."""
    out = []
    for col in mat.T:
        out.append(None if not np.isfinite(col).any() else windows[int(np.nanargmax(col))])
    return out


def summary_rows(res: BenchResult) -> list:
    """``(method, tier, mean, sd, n_seeds)``; methods never run appear with n_seeds 0."""
    cfg = res.config
    present = res.methods()
    order = [m for m in METHODS] + [a for a in cfg.ablations if a not in METHODS]
    order += [m for m in present if m not in order and not m.startswith("single_w")]
    rows = []
    for m in order:
        for t in cfg.tiers:
            if res.seeds_for(m, t):
                mean, sd = res.summary(m, t)
                rows.append((m, t, mean, sd, len(res.seeds_for(m, t))))
            else:
                rows.append((m, t, float("nan"), float("nan"), 0))
    return rows


def render_markdown(res: BenchResult) -> str:
    cfg = res.config
    lines = ["# Benchmark report", "", f"config digest: `{cfg.digest()}`", "",
             f"seeds: {', '.join(map(str, cfg.seeds))}; test segments: {len(res.targets)}; "
             f"candidates per segment: {cfg.n_candidates}", "",
             "## Accuracy (%) +- SD over seeds", "",
             "| method | " + " | ".join(cfg.tiers) + " |",
             "|---|" + "---|" * len(cfg.tiers)]
    by_method = {}
    for m, t, mean, sd, n in summary_rows(res):
        by_method.setdefault(m, []).append("absent" if n == 0 else f"{_pct(mean)} +- {_pct(sd)}")
    for m, cells in by_method.items():
        lines.append(f"| {METHOD_LABELS.get(m, m)} | " + " | ".join(cells) + " |")

    bands = cfg.bands
    lines += ["", "## Accuracy (%) by distance band", "",
              "| method | tier | " + " | ".join(_band_label(b) for b in bands) + " |",
              "|---|---|" + "---|" * len(bands)]
    for m in by_method:
        for t in cfg.tiers:
            if res.seeds_for(m, t):
                lines.append(f"| {METHOD_LABELS.get(m, m)} | {t} | "
                             + " | ".join(_pct(x) for x in res.band_accuracy(m, t)) + " |")

    windows, mat = window_band_matrix(res)
    lines += ["", "## Single-window accuracy (%) by distance band, Clean", ""]
    if windows:
        lines += ["| window | " + " | ".join(_band_label(b) for b in bands) + " | overall |",
                  "|---|" + "---|" * (len(bands) + 1)]
        for w, row in zip(windows, mat):
            overall = np.mean([res.accuracy(f"single_w{w:02d}", "Clean", s)
                               for s in res.seeds_for(f"single_w{w:02d}", "Clean")])
            lines.append(f"| {w} | " + " | ".join(_pct(x) for x in row) + f" | {_pct(overall)} |")
        best = best_window_per_band(windows, mat)
        lines.append("| best | " + " | ".join("-" if b is None else str(b) for b in best) + " | |")
    else:
        lines.append("absent")
    lines += ["", "## Configuration", "", "```json", json.dumps(cfg.to_dict(), indent=1, sort_keys=True), "```", ""]
    return "\n".join(lines)


def render_summary_tsv(res: BenchResult) -> str:
    out = ["method\ttier\tmean\tsd\tn_seeds"]
    for m, t, mean, sd, n in summary_rows(res):
        out.append(f"{m}\t{t}\t{'absent' if n == 0 else f'{mean:.6f}'}\t{'absent' if n == 0 else f'{sd:.6f}'}\t{n}")
    return "\n".join(out) + "\n"


def render_bands_tsv(res: BenchResult) -> str:
    out = ["method\ttier\tband_lo\tband_hi\taccuracy"]
    for m in res.methods():
        for t in res.config.tiers:
            if not res.seeds_for(m, t):
                continue
            for (lo, hi), acc in zip(res.config.bands, res.band_accuracy(m, t)):
                out.append(f"{m}\t{t}\t{lo:g}\t{hi:g}\t{acc:.6f}")
    return "\n".join(out) + "\n"


def render_windows_tsv(res: BenchResult) -> str:
    windows, mat = window_band_matrix(res)
    out = ["window\t" + "\t".join(f"{lo:g}-{hi:g}" for lo, hi in res.config.bands)]
    for w, row in zip(windows, mat):
        out.append(f"{w}\t" + "\t".join(f"{x:.6f}" for x in row))
    return "\n".join(out) + "\n"


def write_report(res: BenchResult, out_dir) -> dict:
    """Write report.md, summary.tsv, bands.tsv and windows.tsv; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "markdown": out / "report.md",
        "summary": out / "summary.tsv",
        "bands": out / "bands.tsv",
        "windows": out / "windows.tsv",
    }
    paths["markdown"].write_text(render_markdown(res), encoding="utf-8")
    paths["summary"].write_text(render_summary_tsv(res), encoding="utf-8")
    paths["bands"].write_text(render_bands_tsv(res), encoding="utf-8")
    paths["windows"].write_text(render_windows_tsv(res), encoding="utf-8")
    return paths
