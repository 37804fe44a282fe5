"""
Closed-form probabilistic forward-error bounds for recursive summation.

All formulas are pure functions of their arguments. Natural logarithms are
used throughout. Values that overflow binary64 come back as +inf with the
`uninformative` flag set instead of raising, so long n sweeps keep going.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError, MissingNormError
from .fpemu import RoundingMode

logger = logging.getLogger(__name__)

SERIES_WINDOW = 1e-6
_FSUM_TERMS = 1 << 20


class BoundKind(Enum):
    LEMMA32 = "Lemma3.2"
    THM33 = "Thm3.3"
    THM41 = "Thm4.1"
    THM51 = "Thm5.1"
    THM52 = "Thm5.2"
    SBOUND = "SBound"
    CLASSICAL = "Classical"


# Bounds whose proofs need |d_k| <= u and therefore take u <- 2u under stochastic rounding.
DOUBLED_UNDER_SR = {BoundKind.LEMMA32, BoundKind.THM33, BoundKind.THM52, BoundKind.CLASSICAL}


@dataclass(frozen=True)
class BoundInputs:
    n: int
    u: float
    failure_prob: float
    mu_x: float = 0.0
    C_x: float = 0.0
    s_norm: Optional[float] = None
    u_note: str = "nominal u"

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        if not self.u >= 0:
            raise DomainError(f"u must be nonnegative, got {self.u}")
        _check_delta(self.failure_prob)
        if not self.C_x >= 0:
            raise DomainError(f"C_x must be nonnegative, got {self.C_x}")
        if self.s_norm is not None and not self.s_norm >= 0:
            raise DomainError(f"s_norm must be nonnegative, got {self.s_norm}")


@dataclass(frozen=True)
class BoundValue:
    value: float
    theorem: BoundKind
    effective_u_note: str
    uninformative: bool = False

    def __float__(self) -> float:
        return self.value


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise DomainError(f"failure probability must lie in (0, 1), got {delta}")


def _check_u(u: float) -> None:
    if not 0.0 <= u < 1.0:
        raise DomainError(f"unit roundoff must lie in [0, 1), got {u}")


def _safe_exp_m1(x: float) -> float:
    try:
        return math.expm1(x)
    except OverflowError:
        return math.inf


def _value(value: float, kind: BoundKind, note: str) -> BoundValue:
    return BoundValue(value, kind, note, uninformative=math.isinf(value))


def effective_unit_roundoff(u: float, mode: RoundingMode, kind: BoundKind) -> Tuple[float, str]:
    """The u to feed a bound for this rounding mode, plus an audit note."""
    if mode.is_stochastic and kind in DOUBLED_UNDER_SR:
        return 2.0 * u, f"u <- 2u = {2.0 * u!r} (stochastic rounding)"
    return u, f"nominal u = {u!r}"


def lambda_factor(delta: float) -> float:
    """sqrt(2 log(2 / delta))."""
    _check_delta(delta)
    return math.sqrt(2.0 * math.log(2.0 / delta))


def gamma_tilde(n: int, delta: float, u: float, lam: float = None) -> float:
    """exp((lam sqrt(n) u + n u^2) / (1 - u)) - 1 with lam = lambda(delta) unless given."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    _check_u(u)
    if lam is None:
        lam = lambda_factor(delta)
    else:
        _check_delta(delta)
    return _safe_exp_m1((lam * math.sqrt(n) * u + n * u * u) / (1.0 - u))


def lemma32_envelope(n: int, delta: float, u: float, lam: float = None) -> Tuple[float, float]:
    g = gamma_tilde(n, delta, u, lam)
    return 1.0 - g, 1.0 + g


def kappa(n: int, delta: float, u: float) -> float:
    """lambda(delta / (n - 1)) sqrt(n) u."""
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    _check_u(u)
    return lambda_factor(delta / (n - 1)) * math.sqrt(n) * u


def _geometric_series(kap: float, terms: int) -> float:
    """sum_{i < terms} kap**i without cancellation."""
    if terms <= _FSUM_TERMS:
        return math.fsum(np.power(kap, np.arange(terms, dtype=np.float64)))
    # S(2m) = S(m) (1 + kap^m), S(m + 1) = 1 + kap S(m)
    total, power = 0.0, 1.0
    for bit in bin(terms)[2:]:
        total, power = total * (1.0 + power), power * power
        if bit == "1":
            total, power = 1.0 + kap * total, power * kap
    return total


def _geometric_closed(kap: float, terms: int) -> float:
    """(1 - kap**terms) / (1 - kap) through expm1/log1p."""
    log_kap = math.log1p(kap - 1.0) if 0.5 <= kap <= 2.0 else math.log(kap)
    top = _safe_exp_m1(terms * log_kap)
    if math.isinf(top):
        return math.inf
    return top / (kap - 1.0)


def geometric_factor(kap: float, n: int) -> float:
    """(1 - kap^(n-1)) / (1 - kap), summed explicitly when |1 - kap| < 1e-6."""
    if kap < 0:
        raise DomainError(f"kappa must be nonnegative, got {kap}")
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    if kap == 0.0 or n == 2:
        return 1.0
    if abs(1.0 - kap) < SERIES_WINDOW:
        return _geometric_series(kap, n - 1)
    return _geometric_closed(kap, n - 1)


def _require_norm(inputs: BoundInputs) -> float:
    if inputs.s_norm is None:
        raise MissingNormError("this bound needs ||s_n||_2 (s_norm)")
    return inputs.s_norm


def bound_thm33(inputs: BoundInputs) -> BoundValue:
    """u ||s_n|| lambda(delta/2) (1 + gamma_tilde_n(delta/2))."""
    s_norm = _require_norm(inputs)
    half = inputs.failure_prob / 2.0
    g = gamma_tilde(inputs.n, half, inputs.u)
    value = inputs.u * s_norm * lambda_factor(half) * (1.0 + g)
    return _value(_nan_to_zero(value), BoundKind.THM33, inputs.u_note)


def bound_thm41(inputs: BoundInputs) -> BoundValue:
    """geometric_factor(kappa, n) lambda(delta/(n-1)) ||s_n||_2 u."""
    s_norm = _require_norm(inputs)
    lam = lambda_factor(inputs.failure_prob / (inputs.n - 1))
    kap = lam * math.sqrt(inputs.n) * inputs.u
    value = geometric_factor(kap, inputs.n) * lam * s_norm * inputs.u
    return _value(_nan_to_zero(value), BoundKind.THM41, inputs.u_note)


def sbound(n: int, delta: float, mu_x: float, C_x: float) -> float:
    """n^1.5 |mu_x| + n C_x lambda(delta / n): bound on ||s_n||_2 for random data."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not C_x >= 0:
        raise DomainError(f"C_x must be nonnegative, got {C_x}")
    _check_delta(delta)
    return n ** 1.5 * abs(mu_x) + n * C_x * lambda_factor(delta / n)


def _data_term(inputs: BoundInputs, lam: float) -> float:
    n = inputs.n
    return lam * abs(inputs.mu_x) * n ** 1.5 + lam * lam * inputs.C_x * n


def bound_thm51(inputs: BoundInputs, lam: float = None) -> BoundValue:
    """geometric_factor(kappa, n) (lam |mu| n^1.5 + lam^2 C n) u with lam = lambda(delta/n)."""
    if lam is None:
        lam = lambda_factor(inputs.failure_prob / inputs.n)
    kap = lam * math.sqrt(inputs.n) * inputs.u
    value = geometric_factor(kap, inputs.n) * _data_term(inputs, lam) * inputs.u
    return _value(_nan_to_zero(value), BoundKind.THM51, inputs.u_note)


def bound_thm52(inputs: BoundInputs, lam: float = None) -> BoundValue:
    """(1 + gamma_tilde_n(delta/3)) (lam |mu| n^1.5 + lam^2 C n) u with lam = lambda(delta/3)."""
    third = inputs.failure_prob / 3.0
    if lam is None:
        lam = lambda_factor(third)
    g = gamma_tilde(inputs.n, third, inputs.u, lam)
    value = (1.0 + g) * _data_term(inputs, lam) * inputs.u
    return _value(_nan_to_zero(value), BoundKind.THM52, inputs.u_note)


def classical_bound(n: int, u: float, abs_data_sum: float, saturate: bool = False) -> float:
    """gamma_{n-1} sum |x_i| = ((n-1) u / (1 - (n-1) u)) sum |x_i|."""
    if n < 1 or u < 0 or abs_data_sum < 0:
        raise DomainError(f"invalid classical bound inputs n={n}, u={u}, sum={abs_data_sum}")
    nu = (n - 1) * u
    if nu >= 1.0:
        if saturate:
            return math.inf
        raise DomainError(f"(n-1)u = {nu} >= 1: classical bound is uninformative")
    return nu / (1.0 - nu) * abs_data_sum


def crossover_n(lambda_val: float, u: float) -> float:
    """The n solving lambda sqrt(n) u = 1."""
    if not (lambda_val > 0 and u > 0):
        raise DomainError(f"lambda and u must be positive, got {lambda_val}, {u}")
    return (1.0 / (lambda_val * u)) ** 2


def _nan_to_zero(value: float) -> float:
    # inf * 0 when u == 0 or a zero norm meets an overflowed factor
    return 0.0 if math.isnan(value) else value
