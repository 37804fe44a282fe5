#!/usr/bin/env python3
"""
Run every figure campaign at desk scale and write the CSVs into output/.

Usage (from the repo root): python -m scripts.reproduce_figures [output_dir] [--full-fp16]
"""

import logging
import sys
from pathlib import Path

from rich.console import Console

from probsum import experiments, fpemu
from probsum.config import load_settings, setup_logging
from probsum.errors import ProbsumError
from probsum.experiments import ExperimentConfig, Figure

console = Console()
logger = logging.getLogger(__name__)

FP16_DESK_NMAX = 1_000_000
FP16_DESK_TRIALS = 10

# (figure, format, nmax override, trials override)
CAMPAIGNS = [
    (Figure.ERROR_BOUNDS, fpemu.FP16, FP16_DESK_NMAX, FP16_DESK_TRIALS),
    (Figure.ERROR_BOUNDS, fpemu.BF16, None, None),
    (Figure.PRODUCT_GROWTH, fpemu.BF16, None, None),
]


def campaign_config(figure, fmt, mode, nmax, trials, seed, workers) -> ExperimentConfig:
    grid = experiments.log_grid(experiments.DEFAULT_NMIN,
                                nmax or experiments.default_nmax(fmt),
                                experiments.DEFAULT_POINTS)
    return ExperimentConfig(
        figure=figure,
        format=fmt,
        mode=mode,
        trials=trials or experiments.DEFAULT_TRIALS,
        n_grid=grid,
        master_seed=seed,
        lambda_one=True,
        ratios=figure is Figure.ERROR_BOUNDS,
        workers=workers,
    )


def main():
    args = [a for a in sys.argv[1:] if not a.startswith('--')]
    full_fp16 = '--full-fp16' in sys.argv[1:]
    output_dir = Path(args[0]) if args else Path("output")
    output_dir.mkdir(parents=True, exist_ok=True)

    try:
        settings = load_settings()
    except ProbsumError as e:
        console.print(f"[red]Error: {e}[/red]")
        sys.exit(1)
    setup_logging(settings.log_level)

    summary = []

    for figure, fmt, nmax, trials in CAMPAIGNS:
        if full_fp16 and fmt is fpemu.FP16:
            # the full sweep: 50 trials up to u^-2
            nmax, trials = int(1 / fmt.unit_roundoff ** 2), None
        for mode in fpemu.RoundingMode:
            name = f"{figure.value}_{fmt.label}_{mode.value}"
            cfg = campaign_config(figure, fmt, mode, nmax, trials, settings.seed, settings.workers)
            console.print(f"[blue]Running {name} ({cfg.trials} trials, n up to {cfg.n_grid[-1]:,})...[/blue]")
            try:
                table = experiments.run_experiment(cfg, progress=True)
                out_file = output_dir / f"{name}.csv"
                experiments.emit_csv(table, str(out_file))
            except ProbsumError as e:
                console.print(f"[red]✗ {name} failed: {e}[/red]")
                sys.exit(2)
            failed = int(table.rows['failed_trials'].sum())
            summary.append((name, len(table), table.total_violations, failed))
            console.print(f"[green]✓ Wrote {out_file}[/green]")

    console.print("\n[blue]Campaign summary:[/blue]")
    for name, rows, violations, failed in summary:
        console.print(f"  - {name}: {rows} rows, {violations} violations, {failed} failed trials")


if __name__ == "__main__":
    main()
