"""
Reduced-precision binary floating-point emulation on a binary64 carrier.

A value of a FloatFormat is stored as the binary64 number it denotes. Rounding
works on the scaled significand q = x / spacing(x): nearest-even rounding is
rint(q), stochastic rounding picks ceil(q) with probability frac(q). Every
format value embeds exactly in binary64, so all of this is exact.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from .errors import FormatError, FormatOverflowError, ZeroInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FloatFormat:
    """A binary format with `precision` significand bits (implicit bit included)."""

    precision: int
    exponent_bits: int
    subnormals_enabled: bool = True
    name: str = field(default="", compare=False)

    def __post_init__(self):
        p, e = self.precision, self.exponent_bits
        if p < 2 or e < 2:
            raise FormatError(f"precision and exponent_bits must be >= 2, got p={p}, e={e}")
        if p + e > 53:
            raise FormatError(f"p + e must be <= 53 to embed in binary64, got {p + e}")
        if e > 11:
            raise FormatError(f"exponent_bits above 11 exceed the binary64 range, got {e}")

    @property
    def unit_roundoff(self) -> float:
        return math.ldexp(1.0, -self.precision)

    @property
    def emax(self) -> int:
        return 2 ** (self.exponent_bits - 1) - 1

    @property
    def emin(self) -> int:
        return 1 - self.emax

    @property
    def max_finite(self) -> float:
        return math.ldexp(2.0 - math.ldexp(1.0, 1 - self.precision), self.emax)

    @property
    def min_normal(self) -> float:
        return math.ldexp(1.0, self.emin)

    @property
    def min_subnormal(self) -> float:
        return math.ldexp(1.0, self.emin - self.precision + 1)

    @property
    def label(self) -> str:
        return self.name or f"custom:{self.precision},{self.exponent_bits}"

    def without_subnormals(self) -> "FloatFormat":
        return replace(self, subnormals_enabled=False)


FP16 = FloatFormat(11, 5, name="fp16")
BF16 = FloatFormat(8, 8, name="bf16")
FP32 = FloatFormat(24, 8, name="fp32")

PRESETS = {
    "fp16": FP16,
    "half": FP16,
    "bf16": BF16,
    "bfloat16": BF16,
    "fp32": FP32,
    "single": FP32,
}


def parse_format(text: str) -> FloatFormat:
    """Parse `fp16`, `bf16`, `fp32` or `custom:p,e`."""
    key = text.strip().lower()
    if key in PRESETS:
        return PRESETS[key]
    if key.startswith("custom:"):
        parts = key[len("custom:"):].split(",")
        if len(parts) != 2:
            raise FormatError(f"custom format must be custom:p,e, got {text!r}")
        try:
            p, e = (int(part) for part in parts)
        except ValueError:
            raise FormatError(f"custom format fields must be integers, got {text!r}") from None
        return FloatFormat(p, e)
    raise FormatError(f"unknown format {text!r} (expected fp16, bf16, fp32 or custom:p,e)")


class RoundingMode(Enum):
    NEAREST_EVEN = "rn"
    STOCHASTIC = "sr"

    @classmethod
    def parse(cls, text: str) -> "RoundingMode":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise FormatError(f"unknown rounding mode {text!r} (expected rn or sr)") from None

    @property
    def is_stochastic(self) -> bool:
        return self is RoundingMode.STOCHASTIC


@dataclass(frozen=True)
class NeighborPair:
    lo: float
    hi: float


# ----------------------------------------------------------------------------
# Array kernels

def check_range(x: np.ndarray, fmt: FloatFormat) -> None:
    """Raise FormatOverflowError for the first entry beyond the format range."""
    if np.isnan(x).any():
        raise FormatError("cannot round NaN")
    bad = ~(np.abs(x) <= fmt.max_finite)
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise FormatOverflowError(float(x.flat[first]), fmt.max_finite)


def spacing_exponent(x: np.ndarray, fmt: FloatFormat) -> np.ndarray:
    """Exponent t such that 2**t is the format spacing around each x."""
    _, e = np.frexp(x)
    shift = np.maximum(e - 1, fmt.emin) - (fmt.precision - 1)
    if not fmt.subnormals_enabled:
        # Without gradual underflow the only grid points below min_normal are 0 and +-min_normal.
        shift = np.where(np.abs(x) < fmt.min_normal, fmt.emin, shift)
    return shift


def neighbors_array(x: np.ndarray, fmt: FloatFormat) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    check_range(x, fmt)
    shift = spacing_exponent(x, fmt)
    q = np.ldexp(x, -shift)
    return np.ldexp(np.floor(q), shift), np.ldexp(np.ceil(q), shift)


def round_array(values, fmt: FloatFormat, mode: RoundingMode = RoundingMode.NEAREST_EVEN,
                rng: np.random.Generator = None) -> np.ndarray:
    """Round every entry of `values` into `fmt`.

    Stochastic mode draws one uniform variate per non-representable entry, in
    array order; representable entries consume nothing.
    """
    x = np.asarray(values, dtype=np.float64)
    check_range(x, fmt)
    shift = spacing_exponent(x, fmt)
    q = np.ldexp(x, -shift)
    if mode is RoundingMode.NEAREST_EVEN:
        return np.ldexp(np.rint(q), shift)
    if rng is None:
        raise ValueError("stochastic rounding needs a random generator")
    fl = np.floor(q)
    frac = q - fl
    need = frac != 0.0
    if need.any():
        fl[need] += rng.random(int(need.sum())) < frac[need]
    return np.ldexp(fl, shift)


def is_representable(values, fmt: FloatFormat) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    finite = np.abs(x) <= fmt.max_finite
    q = np.ldexp(np.where(finite, x, 0.0), -spacing_exponent(np.where(finite, x, 0.0), fmt))
    return finite & (q == np.floor(q))


def is_subnormal(values, fmt: FloatFormat) -> np.ndarray:
    ax = np.abs(np.asarray(values, dtype=np.float64))
    return (ax != 0.0) & (ax < fmt.min_normal)


class VariatePool:
    """Uniform variates for many trials, one independent stream per trial.

    Each stream is consumed strictly in order, one variate per stochastic
    rounding that needs a draw; buffering in chunks does not change which
    variate a given draw receives.
    """

    def __init__(self, seeds: Sequence[int], chunk: int = None):
        self._gens = [np.random.default_rng(int(s)) for s in seeds]
        trials = len(self._gens)
        if chunk is None:
            chunk = max(16, min(4096, (1 << 20) // max(trials, 1)))
        self._chunk = chunk
        self._buf = np.empty((trials, chunk))
        self._pos = np.full(trials, chunk)

    def take(self, rows: np.ndarray) -> np.ndarray:
        """Next variate from each stream listed in `rows` (distinct indices)."""
        for row in rows[self._pos[rows] >= self._chunk]:
            self._buf[row] = self._gens[row].random(self._chunk)
            self._pos[row] = 0
        vals = self._buf[rows, self._pos[rows]]
        self._pos[rows] += 1
        return vals


# ----------------------------------------------------------------------------
# Scalar operations

def _vec(x: float) -> np.ndarray:
    return np.array([x], dtype=np.float64)


def neighbors(x: float, fmt: FloatFormat) -> NeighborPair:
    """Largest representable value <= x and smallest representable value >= x."""
    lo, hi = neighbors_array(_vec(x), fmt)
    return NeighborPair(float(lo[0]), float(hi[0]))


def round_nearest(x: float, fmt: FloatFormat) -> float:
    return float(round_array(_vec(x), fmt, RoundingMode.NEAREST_EVEN)[0])


def round_stochastic(x: float, fmt: FloatFormat, rng: np.random.Generator) -> float:
    """Round up with probability (x - lo) / (hi - lo), down otherwise."""
    return float(round_array(_vec(x), fmt, RoundingMode.STOCHASTIC, rng)[0])


def delta_bounds(x: float, fmt: FloatFormat) -> Tuple[float, float]:
    """Interval [a, b] containing the relative error of any rounding of x."""
    if x == 0:
        raise ZeroInputError("relative perturbation is undefined at x = 0")
    pair = neighbors(x, fmt)
    a = (pair.lo - x) / x
    b = (pair.hi - x) / x
    return (a, b) if x > 0 else (b, a)
