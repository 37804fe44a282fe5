"""
Command-line front end: single sums, bound evaluation, experiment campaigns
and crossover sizes.

Exit codes: 0 success, 1 usage error, 2 runtime error (overflow or I/O).
"""

import argparse
import logging
import math
import os
import sys
import tempfile
from dataclasses import replace
from typing import List, Optional

import numpy as np
from rich.markup import escape

from . import __version__, bounds, experiments, fpemu, summation
from .bounds import BoundInputs, BoundKind
from .config import console, err_console, load_settings, setup_logging
from .errors import DomainError, FormatError, FormatOverflowError, IoError, UsageError
from .experiments import DataSpec, ExperimentConfig, Figure

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

THEOREMS = ['lambda', 'gamma', 'kappa', 'geometric', 'thm33', 'thm41', 'thm51', 'thm52',
            'sbound', 'classical']

REQUIRED = {
    'lambda': [],
    'gamma': ['n', 'u'],
    'kappa': ['n', 'u'],
    'geometric': ['n', 'kappa'],
    'thm33': ['n', 'u', 'snorm'],
    'thm41': ['n', 'u', 'snorm'],
    'thm51': ['n', 'u', 'mu', 'cx'],
    'thm52': ['n', 'u', 'mu', 'cx'],
    'sbound': ['n', 'mu', 'cx'],
    'classical': ['n', 'u', 'abs_sum'],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _emit(label: str, value) -> None:
    if isinstance(value, float):
        value = repr(value)
    console.print(f"{label:<18}{value}", markup=False, highlight=False, emoji=False)


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {value}")
    return value


def _probability(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"failure probability must lie in (0, 1), got {value}")
    return value


def _format(text: str) -> fpemu.FloatFormat:
    try:
        return fpemu.parse_format(text)
    except FormatError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _mode(text: str) -> fpemu.RoundingMode:
    try:
        return fpemu.RoundingMode.parse(text)
    except FormatError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _dist(text: str) -> DataSpec:
    try:
        return DataSpec.parse(text)
    except DomainError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="probsum",
        description="Low-precision recursive summation under deterministic and stochastic "
                    "rounding, with probabilistic forward-error bounds.",
    )
    parser.add_argument('--version', action='version', version=f"probsum {__version__}")
    parser.add_argument('--verbose', action='store_true', help="log progress at INFO level to stderr")
    sub = parser.add_subparsers(dest='command', metavar='{sum,bounds,experiment,crossover}')
    sub.required = True

    p = sub.add_parser('sum', help="sum random data once and compare with the bounds")
    p.add_argument('--format', type=_format, required=True, help="fp16, bf16, fp32 or custom:p,e")
    p.add_argument('--rounding', type=_mode, required=True, help="rn (nearest even) or sr (stochastic)")
    p.add_argument('--n', type=_positive_int, required=True, help="number of summands")
    p.add_argument('--dist', type=_dist, default=DataSpec(), help="uniform:lo,hi (default uniform:-1,1)")
    p.add_argument('--seed', type=_seed, help="master seed (default PROBSUM_SEED or 0)")
    p.add_argument('--delta', type=_probability, default=experiments.DEFAULT_DELTA, help="failure probability")
    p.add_argument('--trace', metavar='PATH', help="write the per-step trace as CSV")
    p.add_argument('--no-subnormals', action='store_true', help="flush results below the normal range")

    p = sub.add_parser('bounds', help="evaluate one bound or constant")
    p.add_argument('--theorem', choices=THEOREMS, required=True, help="quantity to evaluate")
    p.add_argument('--n', type=_positive_int, help="problem size")
    p.add_argument('--u', type=float, help="unit roundoff (overrides --format)")
    p.add_argument('--format', type=_format, help="take u from this format")
    p.add_argument('--rounding', type=_mode, default=fpemu.RoundingMode.NEAREST_EVEN,
                   help="sr applies u <- 2u where the theorem requires it")
    p.add_argument('--delta', type=_probability, default=experiments.DEFAULT_DELTA, help="failure probability")
    p.add_argument('--mu', type=float, help="data mean mu_x")
    p.add_argument('--cx', type=float, help="data half-width C_x")
    p.add_argument('--snorm', type=float, help="||s_n||_2")
    p.add_argument('--abs-sum', type=float, help="sum of |x_i| for the classical bound")
    p.add_argument('--kappa', type=float, help="kappa for the geometric factor")

    p = sub.add_parser('experiment', help="run a Monte Carlo campaign and write CSV")
    p.add_argument('--figure', choices=[f.value for f in Figure], required=True, help="campaign type")
    p.add_argument('--format', type=_format, required=True, help="fp16, bf16, fp32 or custom:p,e")
    p.add_argument('--rounding', type=_mode, required=True, help="rn or sr")
    p.add_argument('--trials', type=_positive_int, default=experiments.DEFAULT_TRIALS, help="trials per size")
    p.add_argument('--delta', type=_probability, default=experiments.DEFAULT_DELTA, help="failure probability")
    p.add_argument('--nmin', type=_positive_int, default=experiments.DEFAULT_NMIN, help="smallest n")
    p.add_argument('--nmax', type=_positive_int, help="largest n (default about 4.5/u^2, at most 1e7)")
    p.add_argument('--points', type=_positive_int, default=experiments.DEFAULT_POINTS, help="grid points")
    p.add_argument('--dist', type=_dist, default=DataSpec(), help="uniform:lo,hi (default uniform:-1,1)")
    p.add_argument('--seed', type=_seed, help="master seed (default PROBSUM_SEED or 0)")
    p.add_argument('--out', metavar='PATH', help="CSV destination (default stdout)")
    p.add_argument('--workers', type=_positive_int, help="worker processes (default PROBSUM_WORKERS)")
    p.add_argument('--lambda-one', action='store_true', help="add lambda = 1 bound columns")
    p.add_argument('--ratios', action='store_true', help="add bound / median error columns")
    p.add_argument('--no-subnormals', action='store_true', help="flush results below the normal range")

    p = sub.add_parser('crossover', help="n at which lambda sqrt(n) u = 1")
    p.add_argument('--lambda', dest='lam', type=float, default=9.0, help="lambda (default 9)")
    p.add_argument('--format', type=_format, help="take u from this format")
    p.add_argument('--u', type=float, help="unit roundoff (overrides --format)")
    return parser


def _resolve_u(args) -> Optional[float]:
    if args.u is not None:
        return args.u
    if args.format is not None:
        return args.format.unit_roundoff
    return None


def cmd_sum(args, settings) -> int:
    fmt = args.format.without_subnormals() if args.no_subnormals else args.format
    seed = settings.seed if args.seed is None else args.seed
    data_seed, rounding_seed = experiments.trial_seeds(seed, 0, 0)
    data = fpemu.round_array(experiments.generate_data(args.dist, args.n, data_seed), fmt)
    trace = summation.recursive_sum(data, fmt, args.rounding, rounding_seed)

    computed = float(trace.computed_partial[-1])
    exact = float(trace.exact_partial[-1])
    err = abs(computed - exact)
    _emit("format", f"{fmt.label} (u = {fmt.unit_roundoff!r})")
    _emit("rounding", args.rounding.value)
    _emit("n", trace.n)
    _emit("seed", seed)
    _emit("computed_sum", computed)
    _emit("exact_sum", exact)
    _emit("abs_error", err)
    _emit("rel_error", err / abs(exact) if exact != 0 else math.nan)
    _emit("subnormal_steps", trace.subnormal_steps)

    if trace.n < 2:
        _emit("bounds", "n/a (n = 1, no rounded additions)")
    else:
        u = fmt.unit_roundoff
        spec = args.dist
        base = BoundInputs(trace.n, u, args.delta, spec.mu_x, spec.C_x, s_norm=trace.s_norm)
        for kind, fn in ((BoundKind.THM33, bounds.bound_thm33), (BoundKind.THM41, bounds.bound_thm41),
                         (BoundKind.THM51, bounds.bound_thm51), (BoundKind.THM52, bounds.bound_thm52)):
            u_eff, note = bounds.effective_unit_roundoff(u, args.rounding, kind)
            value = fn(replace(base, u=u_eff, u_note=note))
            _emit(f"bound_{kind.value.lower().replace('.', '')}", f"{value.value!r}  [{note}]")
        uc, note = bounds.effective_unit_roundoff(u, args.rounding, BoundKind.CLASSICAL)
        abs_sum = float(np.sum(np.abs(trace.data)))
        classical = bounds.classical_bound(trace.n, uc, abs_sum, saturate=True)
        _emit("bound_classical", f"{classical!r}  [{note}]")

    if args.trace:
        try:
            trace.to_frame().to_csv(args.trace, index=False, float_format="%.17g", lineterminator="\n")
        except OSError as exc:
            raise IoError(f"could not write trace to {args.trace}: {exc}") from exc
    return EXIT_OK


def _require(args, theorem: str) -> None:
    missing = []
    for name in REQUIRED[theorem]:
        if name == 'u':
            if _resolve_u(args) is None:
                missing.append('--u or --format')
        elif getattr(args, name) is None:
            missing.append('--' + name.replace('_', '-'))
    if missing:
        raise UsageError(f"--theorem {theorem} requires {', '.join(missing)}")


def cmd_bounds(args, settings) -> int:
    theorem = args.theorem
    _require(args, theorem)
    delta, n = args.delta, args.n
    u = _resolve_u(args)

    def eff(kind):
        return bounds.effective_unit_roundoff(u, args.rounding, kind)

    _emit("theorem", theorem)
    if theorem == 'lambda':
        _emit("lambda", bounds.lambda_factor(delta))
    elif theorem == 'gamma':
        u_eff, note = eff(BoundKind.LEMMA32)
        _emit("u_effective", note)
        _emit("lambda", bounds.lambda_factor(delta))
        _emit("gamma_tilde", bounds.gamma_tilde(n, delta, u_eff))
    elif theorem == 'kappa':
        _emit("lambda", bounds.lambda_factor(delta / (n - 1)) if n > 1 else math.nan)
        _emit("kappa", bounds.kappa(n, delta, u))
    elif theorem == 'geometric':
        _emit("geometric_factor", bounds.geometric_factor(args.kappa, n))
    elif theorem == 'sbound':
        _emit("lambda", bounds.lambda_factor(delta / n))
        _emit("sbound", bounds.sbound(n, delta, args.mu, args.cx))
    elif theorem == 'classical':
        u_eff, note = eff(BoundKind.CLASSICAL)
        _emit("u_effective", note)
        _emit("value", bounds.classical_bound(n, u_eff, args.abs_sum, saturate=True))
    else:
        kind = {'thm33': BoundKind.THM33, 'thm41': BoundKind.THM41,
                'thm51': BoundKind.THM51, 'thm52': BoundKind.THM52}[theorem]
        u_eff, note = eff(kind)
        inputs = BoundInputs(n, u_eff, delta, args.mu or 0.0, args.cx or 0.0,
                             s_norm=args.snorm, u_note=note)
        _emit("u_effective", note)
        if kind is BoundKind.THM33:
            _emit("lambda", bounds.lambda_factor(delta / 2))
            _emit("gamma_tilde", bounds.gamma_tilde(n, delta / 2, u_eff))
            value = bounds.bound_thm33(inputs)
        elif kind is BoundKind.THM41:
            lam = bounds.lambda_factor(delta / (n - 1))
            kap = bounds.kappa(n, delta, u_eff)
            _emit("lambda", lam)
            _emit("kappa", kap)
            _emit("geometric_factor", bounds.geometric_factor(kap, n))
            value = bounds.bound_thm41(inputs)
        elif kind is BoundKind.THM51:
            lam = bounds.lambda_factor(delta / n)
            kap = lam * math.sqrt(n) * u_eff
            _emit("lambda", lam)
            _emit("kappa", kap)
            _emit("geometric_factor", bounds.geometric_factor(kap, n))
            value = bounds.bound_thm51(inputs)
        else:
            _emit("lambda", bounds.lambda_factor(delta / 3))
            _emit("gamma_tilde", bounds.gamma_tilde(n, delta / 3, u_eff))
            value = bounds.bound_thm52(inputs)
        _emit("value", value.value)
        if value.uninformative:
            _emit("note", "uninformative (overflowed to +inf)")
    return EXIT_OK


def _write_atomically(table, path: str) -> int:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".probsum-", suffix=".csv", dir=directory)
    try:
        with os.fdopen(fd, 'w', newline='') as handle:
            rows = experiments.emit_csv(table, handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return rows


def cmd_experiment(args, settings) -> int:
    fmt = args.format.without_subnormals() if args.no_subnormals else args.format
    nmax = args.nmax if args.nmax is not None else experiments.default_nmax(fmt)
    if nmax < args.nmin:
        raise UsageError(f"--nmax ({nmax}) must be >= --nmin ({args.nmin})")
    cfg = ExperimentConfig(
        figure=Figure(args.figure),
        format=fmt,
        mode=args.rounding,
        trials=args.trials,
        n_grid=experiments.log_grid(args.nmin, nmax, args.points),
        delta=args.delta,
        data=args.dist,
        master_seed=settings.seed if args.seed is None else args.seed,
        lambda_one=args.lambda_one,
        ratios=args.ratios,
        workers=args.workers or settings.workers,
    )
    table = experiments.run_experiment(cfg, progress=err_console.is_terminal)

    if args.out:
        try:
            rows = _write_atomically(table, args.out)
        except OSError as exc:
            raise IoError(f"could not write {args.out}: {exc}") from exc
        logger.info("Wrote %d rows to %s", rows, args.out)
        summary_console = console
    else:
        rows = experiments.emit_csv(table, sys.stdout)
        summary_console = err_console
    failed = int(table.rows['failed_trials'].sum()) if rows else 0
    summary_console.print(
        f"{cfg.figure.value} {fmt.label}/{cfg.mode.value}: {rows} rows, "
        f"{table.total_violations} violations, {failed} failed trials",
        markup=False, highlight=False,
    )
    return EXIT_OK


def cmd_crossover(args, settings) -> int:
    u = _resolve_u(args)
    if u is None:
        raise UsageError("crossover requires --u or --format")
    _emit("lambda", args.lam)
    _emit("u", u)
    _emit("crossover_n", bounds.crossover_n(args.lam, u))
    return EXIT_OK


COMMANDS = {
    'sum': cmd_sum,
    'bounds': cmd_bounds,
    'experiment': cmd_experiment,
    'crossover': cmd_crossover,
}


def main(argv: List[str] = None) -> int:
    parser = build_parser()
    try:
        settings = load_settings()
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        err_console.print(f"[red]{escape(str(exc))}[/red]")
        return EXIT_USAGE
    except SystemExit as exc:
        # --help / --version
        return int(exc.code or 0)

    setup_logging("INFO" if args.verbose else settings.log_level)
    try:
        return COMMANDS[args.command](args, settings)
    except (UsageError, DomainError, FormatError) as exc:
        err_console.print(f"[red]Error: {escape(str(exc))}[/red]")
        return EXIT_USAGE
    except (FormatOverflowError, IoError) as exc:
        err_console.print(f"[red]Error: {escape(str(exc))}[/red]")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
