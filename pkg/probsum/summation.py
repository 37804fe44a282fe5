"""
Recursive summation in an emulated format, with a full per-step trace.

The kernel advances many independent trials in lockstep: step k adds x_k to
every trial's running sum and rounds the whole column at once. A single trace
is just the one-trial case, so `recursive_sum` and `sum_trials` agree
bit-for-bit for equal seeds.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from . import fpemu
from .errors import EmptyInputError, FormatOverflowError, NotRepresentableError
from .fpemu import FloatFormat, RoundingMode, VariatePool

logger = logging.getLogger(__name__)


@dataclass
class SummationTrace:
    data: np.ndarray
    exact_partial: np.ndarray
    computed_partial: np.ndarray
    delta: np.ndarray
    delta_lo: np.ndarray
    delta_hi: np.ndarray
    forward_error: np.ndarray
    format: FloatFormat
    mode: RoundingMode
    seed: int
    subnormal_steps: int = 0

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def s_vector(self) -> np.ndarray:
        """The partial sums [s_2, ..., s_n] entering the structural bounds."""
        return self.exact_partial[1:]

    @property
    def s_norm(self) -> float:
        return float(np.linalg.norm(self.s_vector))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'k': np.arange(1, self.n + 1),
            'x': self.data,
            'exact_partial': self.exact_partial,
            'computed_partial': self.computed_partial,
            'delta': self.delta,
            'delta_lo': self.delta_lo,
            'delta_hi': self.delta_hi,
            'forward_error': self.forward_error,
            'product': product_trajectory(self),
        })


@dataclass
class TrialBatch:
    """Final-state results of many trials summed in lockstep."""

    computed: np.ndarray
    exact: np.ndarray
    product: np.ndarray
    failed: np.ndarray
    subnormal_steps: np.ndarray
    delta: Optional[np.ndarray] = None

    @property
    def forward_error(self) -> np.ndarray:
        return self.computed - self.exact


def _run(data: np.ndarray, fmt: FloatFormat, mode: RoundingMode, seeds: Sequence[int],
         record: bool, raise_on_overflow: bool, context: dict = None) -> dict:
    trials, n = data.shape
    pool = VariatePool(seeds) if mode.is_stochastic else None

    shat = data[:, 0].copy()
    exact = data[:, 0].copy()
    product = np.ones(trials)
    failed = np.zeros(trials, dtype=bool)
    subnormal = np.zeros(trials, dtype=np.int64)
    zeros = np.zeros(trials)

    out = {}
    if record:
        for name in ('exact_partial', 'computed_partial', 'delta', 'delta_lo', 'delta_hi'):
            out[name] = np.zeros((trials, n))
        out['exact_partial'][:, 0] = exact
        out['computed_partial'][:, 0] = shat

    for k in range(1, n):
        x = data[:, k]
        exact = exact + x
        r = shat + x
        over = ~(np.abs(r) <= fmt.max_finite)
        if over.any():
            if raise_on_overflow:
                row = int(np.flatnonzero(over)[0])
                raise FormatOverflowError(float(r[row]), fmt.max_finite, index=k + 1,
                                          context=context)
            for row in np.flatnonzero(over & ~failed):
                logger.warning("Trial %d overflowed at k=%d (%s)", row, k + 1, context or {})
            failed |= over
            r = np.where(over, 0.0, r)

        shift = fpemu.spacing_exponent(r, fmt)
        q = np.ldexp(r, -shift)
        if pool is None:
            rounded = np.rint(q)
        else:
            rounded = np.floor(q)
            frac = q - rounded
            need = np.flatnonzero(frac != 0.0)
            if need.size:
                rounded[need] += pool.take(need) < frac[need]
        new = np.ldexp(rounded, shift)

        delta = np.divide(new - r, r, out=zeros.copy(), where=r != 0.0)
        product = product * (1.0 + delta)
        subnormal += fpemu.is_subnormal(new, fmt)

        if record:
            lo = np.divide(np.ldexp(np.floor(q), shift) - r, r, out=zeros.copy(), where=r != 0.0)
            hi = np.divide(np.ldexp(np.ceil(q), shift) - r, r, out=zeros.copy(), where=r != 0.0)
            out['exact_partial'][:, k] = exact
            out['computed_partial'][:, k] = new
            out['delta'][:, k] = delta
            out['delta_lo'][:, k] = np.minimum(lo, hi)
            out['delta_hi'][:, k] = np.maximum(lo, hi)
        shat = new

    out.update(computed=shat, exact=exact, product=product, failed=failed, subnormal=subnormal)
    return out


def _validate_data(data: np.ndarray, fmt: FloatFormat) -> None:
    ok = fpemu.is_representable(data, fmt)
    if not ok.all():
        first = np.argwhere(~ok)[0]
        raise NotRepresentableError(
            f"data entry {tuple(int(i) for i in first)} = {data[tuple(first)]!r} is not a "
            f"{fmt.label} value; pre-round with fpemu.round_array"
        )


def recursive_sum(data, fmt: FloatFormat, mode: RoundingMode, seed: int) -> SummationTrace:
    """Sum `data` left to right in `fmt`, rounding after every addition."""
    x = np.asarray(data, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInputError("recursive_sum needs at least one value")
    _validate_data(x, fmt)
    res = _run(x[None, :], fmt, mode, [seed], record=True, raise_on_overflow=True)
    exact = res['exact_partial'][0]
    computed = res['computed_partial'][0]
    trace = SummationTrace(
        data=x,
        exact_partial=exact,
        computed_partial=computed,
        delta=res['delta'][0],
        delta_lo=res['delta_lo'][0],
        delta_hi=res['delta_hi'][0],
        forward_error=computed - exact,
        format=fmt,
        mode=mode,
        seed=seed,
        subnormal_steps=int(res['subnormal'][0]),
    )
    if trace.subnormal_steps:
        logger.warning("%d subnormal partial sums in %s trace", trace.subnormal_steps, fmt.label)
    return trace


def sum_trials(data, fmt: FloatFormat, mode: RoundingMode, seeds: Sequence[int],
               record: bool = False, context: dict = None) -> TrialBatch:
    """Recursive summation of each row of `data`, one rounding stream per row.

    Overflowing trials are marked failed instead of raising.
    """
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if x.shape[1] == 0:
        raise EmptyInputError("sum_trials needs at least one value per trial")
    if len(seeds) != x.shape[0]:
        raise ValueError(f"need one seed per trial, got {len(seeds)} for {x.shape[0]} trials")
    _validate_data(x, fmt)
    res = _run(x, fmt, mode, seeds, record=record, raise_on_overflow=False, context=context)
    return TrialBatch(
        computed=res['computed'],
        exact=res['exact'],
        product=res['product'],
        failed=res['failed'],
        subnormal_steps=res['subnormal'],
        delta=res['delta'] if record else None,
    )


def check_error_identity(trace: SummationTrace) -> float:
    """Largest scaled residual of E_k = sum_{i<=k} s_i d_i prod_{j=i+1..k} (1 + d_j)."""
    s, d, err = trace.exact_partial, trace.delta, trace.forward_error
    rhs = np.zeros(trace.n)
    acc = 0.0
    for k in range(1, trace.n):
        acc = acc * (1.0 + d[k]) + s[k] * d[k]
        rhs[k] = acc
    return float(np.max(np.abs(rhs - err) / (1.0 + np.abs(s))))


def product_trajectory(trace: SummationTrace) -> np.ndarray:
    """Running products P_k = prod_{i<=k} (1 + d_i)."""
    return np.cumprod(1.0 + trace.delta)


def product_deviation(trace: SummationTrace) -> float:
    """max_k |prod_{j=k+1..n} (1 + d_j) - 1|, the quantity bounded by gamma_tilde."""
    factors = 1.0 + trace.delta
    suffix = np.append(np.cumprod(factors[::-1])[::-1][1:], 1.0)
    return float(np.max(np.abs(suffix - 1.0)))
