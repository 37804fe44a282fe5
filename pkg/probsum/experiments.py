"""
Seeded Monte Carlo campaigns over a grid of problem sizes.

Every (n-index, trial-index) pair owns its own data and rounding streams,
derived from the master seed through numpy SeedSequence spawn keys, so a
campaign's table depends only on its configuration and never on scheduling.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import IO, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from rich.progress import track

from . import bounds, fpemu, summation
from .bounds import BoundInputs, BoundKind
from .config import err_console
from .errors import DomainError, EmptyInputError, FormatOverflowError, IoError
from .fpemu import FloatFormat, RoundingMode

logger = logging.getLogger(__name__)

QUARTILES = (0.25, 0.5, 0.75)
DEFAULT_TRIALS = 50
DEFAULT_DELTA = 0.05
DEFAULT_POINTS = 30
DEFAULT_NMIN = 10
MAX_DEFAULT_N = 10_000_000
# carrier values held per block of trials in one row
ROW_BLOCK_ELEMENTS = 1 << 22

ERROR_COLUMNS = [
    'n', 'p25', 'p50', 'p75', 'max',
    'bound_thm51', 'bound_thm52', 'bound_classical',
    'violations_thm51', 'violations_thm52', 'trials', 'failed_trials',
]
PRODUCT_COLUMNS = [
    'n', 'p25', 'p50', 'p75', 'max',
    'env_lo', 'env_hi', 'violations_env', 'trials', 'failed_trials',
]


class Figure(Enum):
    ERROR_BOUNDS = "error-bounds"
    PRODUCT_GROWTH = "product-growth"


@dataclass(frozen=True)
class DataSpec:
    """Uniform(lo, hi) data; mu_x and C_x follow from the support."""

    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise DomainError(f"uniform data needs finite lo < hi, got {self.lo}, {self.hi}")

    @property
    def mu_x(self) -> float:
        return (self.lo + self.hi) / 2.0

    @property
    def C_x(self) -> float:
        return (self.hi - self.lo) / 2.0

    @property
    def abs_max(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    @property
    def label(self) -> str:
        return f"uniform:{self.lo!r},{self.hi!r}"

    @classmethod
    def parse(cls, text: str) -> "DataSpec":
        kind, _, params = text.strip().partition(":")
        if kind.lower() != "uniform":
            raise DomainError(f"only uniform:lo,hi data is supported, got {text!r}")
        try:
            lo, hi = (float(v) for v in params.split(","))
        except ValueError:
            raise DomainError(f"expected uniform:lo,hi, got {text!r}") from None
        return cls(lo, hi)


@dataclass(frozen=True)
class ExperimentConfig:
    figure: Figure
    format: FloatFormat
    mode: RoundingMode
    trials: int = DEFAULT_TRIALS
    n_grid: Tuple[int, ...] = ()
    delta: float = DEFAULT_DELTA
    data: DataSpec = field(default_factory=DataSpec)
    master_seed: int = 0
    lambda_one: bool = False
    ratios: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        grid = tuple(int(n) for n in self.n_grid)
        if any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError(f"n_grid must be strictly increasing positive sizes, got {grid}")
        object.__setattr__(self, 'n_grid', grid)
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass
class SeriesTable:
    figure: Figure
    rows: pd.DataFrame

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def total_violations(self) -> int:
        cols = [c for c in self.rows.columns if c.startswith('violations_')]
        return int(self.rows[cols].to_numpy().sum()) if len(self.rows) else 0


def trial_seeds(master_seed: int, n_index: int, trial_index: int) -> Tuple[int, int]:
    """(data seed, rounding seed) for one trial."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(n_index, trial_index))
    data_seed, rounding_seed = seq.generate_state(2, dtype=np.uint64)
    return int(data_seed), int(rounding_seed)


def generate_data(spec: DataSpec, n: int, seed: int) -> np.ndarray:
    """n independent Uniform[lo, hi) samples."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return np.random.default_rng(seed).uniform(spec.lo, spec.hi, n)


def percentiles(values, qs) -> np.ndarray:
    """Linearly interpolated sample quantiles (h = q (n - 1))."""
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise EmptyInputError("percentiles of an empty sample")
    q = np.asarray(qs, dtype=np.float64)
    if ((q < 0) | (q > 1)).any():
        raise DomainError(f"quantiles must lie in [0, 1], got {qs}")
    return np.quantile(vals, q, method="linear")


def log_grid(nmin: int, nmax: int, points: int) -> Tuple[int, ...]:
    if nmin < 1 or nmax < nmin or points < 1:
        raise DomainError(f"bad grid nmin={nmin}, nmax={nmax}, points={points}")
    if points == 1:
        return (int(nmin),)
    grid = np.unique(np.rint(np.geomspace(nmin, nmax, points)).astype(np.int64))
    return tuple(int(n) for n in grid)


def default_nmax(fmt: FloatFormat) -> int:
    """About 4.5 u^-2 to one significant digit, capped at 10^7 (3e5 for bfloat16)."""
    target = float(f"{4.5 / fmt.unit_roundoff ** 2:.0e}")
    return int(min(target, MAX_DEFAULT_N))


def default_n_grid(fmt: FloatFormat, points: int = DEFAULT_POINTS) -> Tuple[int, ...]:
    return log_grid(DEFAULT_NMIN, default_nmax(fmt), points)


def loglog_slope(n: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(n)."""
    return float(np.polyfit(np.log(n), np.log(values), 1)[0])


# ----------------------------------------------------------------------------
# One grid row

def _trial_data(cfg: ExperimentConfig, n_index: int, n: int, trials: range):
    seeds = [trial_seeds(cfg.master_seed, n_index, t) for t in trials]
    data = np.zeros((len(trials), n))
    failed = np.zeros(len(trials), dtype=bool)
    for row, (t, (data_seed, _)) in enumerate(zip(trials, seeds)):
        try:
            data[row] = fpemu.round_array(generate_data(cfg.data, n, data_seed), cfg.format)
        except FormatOverflowError as exc:
            logger.warning("Trial %d data overflow: %s", t, exc.with_context(n=n, trial=t))
            failed[row] = True
    return data, failed, [rs for _, rs in seeds]


def _sum_row(cfg: ExperimentConfig, n_index: int, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(forward errors, products, failed mask) of every trial, summed block by block."""
    block = max(1, ROW_BLOCK_ELEMENTS // n)
    errors, products, failed_parts = [], [], []
    for start in range(0, cfg.trials, block):
        trials = range(start, min(start + block, cfg.trials))
        data, failed, rounding_seeds = _trial_data(cfg, n_index, n, trials)
        batch = summation.sum_trials(data, cfg.format, cfg.mode, rounding_seeds,
                                     context={'n': n, 'first_trial': start})
        failed |= batch.failed
        if batch.subnormal_steps[~failed].any():
            logger.info("n=%d, trials %d..%d: %d subnormal partial sums", n, start, trials[-1],
                        int(batch.subnormal_steps[~failed].sum()))
        errors.append(batch.forward_error)
        products.append(batch.product)
        failed_parts.append(failed)
    return np.concatenate(errors), np.concatenate(products), np.concatenate(failed_parts)


def _stats(values: np.ndarray) -> dict:
    if values.size == 0:
        return dict(p25=math.nan, p50=math.nan, p75=math.nan, max=math.nan)
    p25, p50, p75 = percentiles(values, QUARTILES)
    return dict(p25=float(p25), p50=float(p50), p75=float(p75), max=float(values.max()))


def _ratio(bound: float, typical: float) -> float:
    return bound / typical if typical > 0 else math.nan


def _error_bounds(cfg: ExperimentConfig, n: int) -> dict:
    if n < 2:
        # E_1 = 0: no addition has been rounded
        out = dict(bound_thm51=0.0, bound_thm52=0.0, bound_classical=0.0)
        if cfg.lambda_one:
            out.update(bound_thm51_lambda1=0.0, bound_thm52_lambda1=0.0)
        return out
    u = cfg.format.unit_roundoff
    base = BoundInputs(n, u, cfg.delta, cfg.data.mu_x, cfg.data.C_x)
    u52, note52 = bounds.effective_unit_roundoff(u, cfg.mode, BoundKind.THM52)
    in52 = replace(base, u=u52, u_note=note52)
    uc, _ = bounds.effective_unit_roundoff(u, cfg.mode, BoundKind.CLASSICAL)
    out = dict(
        bound_thm51=bounds.bound_thm51(base).value,
        bound_thm52=bounds.bound_thm52(in52).value,
        bound_classical=bounds.classical_bound(n, uc, n * cfg.data.abs_max, saturate=True),
    )
    if cfg.lambda_one:
        out.update(
            bound_thm51_lambda1=bounds.bound_thm51(base, lam=1.0).value,
            bound_thm52_lambda1=bounds.bound_thm52(in52, lam=1.0).value,
        )
    return out


def _run_row(cfg: ExperimentConfig, n_index: int, n: int) -> dict:
    forward_error, product, failed = _sum_row(cfg, n_index, n)
    ok = ~failed

    row = {'n': n}
    if cfg.figure is Figure.ERROR_BOUNDS:
        values = np.abs(forward_error[ok])
        row.update(_stats(values))
        row.update(_error_bounds(cfg, n))
        row['violations_thm51'] = int(np.sum(values > row['bound_thm51']))
        row['violations_thm52'] = int(np.sum(values > row['bound_thm52']))
        if cfg.ratios:
            row['ratio_thm51'] = _ratio(row['bound_thm51'], row['p50'])
            row['ratio_thm52'] = _ratio(row['bound_thm52'], row['p50'])
    else:
        values = product[ok]
        row.update(_stats(values))
        u_env, _ = bounds.effective_unit_roundoff(cfg.format.unit_roundoff, cfg.mode,
                                                  BoundKind.LEMMA32)
        row['env_lo'], row['env_hi'] = bounds.lemma32_envelope(n, cfg.delta, u_env)
        row['violations_env'] = int(np.sum((values < row['env_lo']) | (values > row['env_hi'])))
        if cfg.lambda_one:
            row['env_lo_lambda1'], row['env_hi_lambda1'] = bounds.lemma32_envelope(
                n, cfg.delta, u_env, lam=1.0)
    row['trials'] = cfg.trials
    row['failed_trials'] = int(failed.sum())
    logger.info("n=%d p50=%.6g failed=%d", n, row['p50'], row['failed_trials'])
    return row


def _run_row_args(args) -> dict:
    return _run_row(*args)


def _columns(cfg: ExperimentConfig) -> List[str]:
    if cfg.figure is Figure.ERROR_BOUNDS:
        cols = list(ERROR_COLUMNS)
        if cfg.lambda_one:
            cols += ['bound_thm51_lambda1', 'bound_thm52_lambda1']
        if cfg.ratios:
            cols += ['ratio_thm51', 'ratio_thm52']
    else:
        cols = list(PRODUCT_COLUMNS)
        if cfg.lambda_one:
            cols += ['env_lo_lambda1', 'env_hi_lambda1']
    return cols


def _run_campaign(cfg: ExperimentConfig, progress: bool) -> SeriesTable:
    logger.info("Starting %s campaign: %s/%s, %d trials, %d sizes", cfg.figure.value,
                cfg.format.label, cfg.mode.value, cfg.trials, len(cfg.n_grid))
    jobs = [(cfg, i, n) for i, n in enumerate(cfg.n_grid)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = pool.map(_run_row_args, jobs)
            if progress:
                results = track(results, total=len(jobs), description="Running sizes...",
                                console=err_console, transient=True)
            rows = list(results)
    else:
        if progress:
            jobs = track(jobs, description="Running sizes...", console=err_console,
                         transient=True)
        rows = [_run_row_args(job) for job in jobs]
    frame = pd.DataFrame(rows, columns=_columns(cfg))
    table = SeriesTable(cfg.figure, frame)
    logger.info("Campaign complete: %d rows, %d violations", len(table), table.total_violations)
    return table


def run_error_experiment(cfg: ExperimentConfig, progress: bool = False) -> SeriesTable:
    """Forward errors |E_n| against the data-dependent and classical bounds."""
    if cfg.figure is not Figure.ERROR_BOUNDS:
        raise DomainError(f"run_error_experiment needs figure=error-bounds, got {cfg.figure.value}")
    return _run_campaign(cfg, progress)


def run_product_experiment(cfg: ExperimentConfig, progress: bool = False) -> SeriesTable:
    """Products prod (1 + d_i) against the 1 +- gamma_tilde envelope."""
    if cfg.figure is not Figure.PRODUCT_GROWTH:
        raise DomainError(f"run_product_experiment needs figure=product-growth, got {cfg.figure.value}")
    return _run_campaign(cfg, progress)


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> SeriesTable:
    if cfg.figure is Figure.ERROR_BOUNDS:
        return run_error_experiment(cfg, progress)
    return run_product_experiment(cfg, progress)


# ----------------------------------------------------------------------------
# CSV

def emit_csv(table: SeriesTable, destination: Union[str, IO[str]]) -> int:
    """Write header plus one row per n with 17 significant digits; returns the row count."""
    try:
        table.rows.to_csv(destination, index=False, float_format="%.17g", lineterminator="\n")
    except OSError as exc:
        raise IoError(f"could not write CSV: {exc}") from exc
    return len(table.rows)


def read_csv(source: Union[str, IO[str]]) -> SeriesTable:
    """Parse a table written by emit_csv."""
    frame = pd.read_csv(source, float_precision="round_trip")
    figure = Figure.PRODUCT_GROWTH if 'env_lo' in frame.columns else Figure.ERROR_BOUNDS
    return SeriesTable(figure, frame)
