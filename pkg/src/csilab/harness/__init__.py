"""Benchmark orchestration, report emission and the command-line interface."""

from .bench import (
    ABLATIONS,
    BENCH_WINDOWS,
    METHODS,
    TIER_NAMES,
    BenchConfig,
    BenchResult,
    make_dataset,
    run_bench,
)
from .report import best_window_per_band, render_markdown, summary_rows, window_band_matrix, write_report
