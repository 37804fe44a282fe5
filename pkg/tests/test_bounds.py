#!/usr/bin/env python3
"""
Tests for the closed-form bounds, checked against 50-digit mpmath evaluations.
"""

import math

import mpmath
import numpy as np
import pytest

from probsum import bounds
from probsum.bounds import BoundInputs, BoundKind
from probsum.errors import DomainError, MissingNormError
from probsum.fpemu import RoundingMode

mpmath.mp.dps = 50

TWO_OVER_E = 2 / math.e


# ----------------------------------------------------------------------------
# High-precision reference formulas

def mp_lambda(delta):
    return mpmath.sqrt(2 * mpmath.log(2 / mpmath.mpf(delta)))


def mp_gamma(n, delta, u, lam=None):
    lam = mp_lambda(delta) if lam is None else mpmath.mpf(lam)
    u = mpmath.mpf(u)
    return mpmath.expm1((lam * mpmath.sqrt(n) * u + n * u * u) / (1 - u))


def mp_geometric(kap, n):
    kap = mpmath.mpf(kap)
    if kap == 1:
        return mpmath.mpf(n - 1)
    return (1 - kap ** (n - 1)) / (1 - kap)


def mp_thm33(n, u, delta, s_norm):
    half = mpmath.mpf(delta) / 2
    return mpmath.mpf(u) * s_norm * mp_lambda(half) * (1 + mp_gamma(n, half, u))


def mp_thm41(n, u, delta, s_norm):
    lam = mp_lambda(mpmath.mpf(delta) / (n - 1))
    kap = lam * mpmath.sqrt(n) * u
    return mp_geometric(kap, n) * lam * s_norm * u


def mp_sbound(n, delta, mu, cx):
    return mpmath.mpf(n) ** 1.5 * abs(mu) + n * cx * mp_lambda(mpmath.mpf(delta) / n)


def mp_thm51(n, u, delta, mu, cx):
    lam = mp_lambda(mpmath.mpf(delta) / n)
    kap = lam * mpmath.sqrt(n) * u
    return mp_geometric(kap, n) * (lam * abs(mu) * mpmath.mpf(n) ** 1.5 + lam ** 2 * cx * n) * u


def mp_thm52(n, u, delta, mu, cx):
    third = mpmath.mpf(delta) / 3
    lam = mp_lambda(third)
    return (1 + mp_gamma(n, third, u)) * (lam * abs(mu) * mpmath.mpf(n) ** 1.5 + lam ** 2 * cx * n) * u


def assert_matches(value, reference, rel=1e-12):
    if math.isinf(value):
        assert reference > 1e300
        return
    ref = float(reference)
    assert value == pytest.approx(ref, rel=rel, abs=0.0 if ref else 1e-300), \
        f"{value!r} vs oracle {mpmath.nstr(reference, 20)}"


def random_tuples(count, seed, max_kappa=0.9):
    """Random parameters in the informative regime kappa <= max_kappa.

    Past kappa = 1 the geometric factor amplifies the relative error of kappa
    by about n, so a fixed 1e-12 tolerance is only meaningful below it.
    """
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < count:
        n = max(int(10 ** rng.uniform(math.log10(2), 6)), 2)
        u = float(10 ** rng.uniform(-8, -2))
        delta = float(10 ** rng.uniform(-16, -0.05))
        if bounds.lambda_factor(delta / n) * math.sqrt(n) * u > max_kappa:
            continue
        produced += 1
        yield dict(
            n=n,
            u=u,
            delta=delta,
            mu=float(rng.uniform(-1, 1)),
            cx=float(10 ** rng.uniform(-2, 1)),
            s_norm=float(10 ** rng.uniform(-3, 6)),
        )


# ----------------------------------------------------------------------------
# lambda

def test_lambda_anchors():
    assert bounds.lambda_factor(TWO_OVER_E) == pytest.approx(math.sqrt(2), rel=1e-15)
    lam = bounds.lambda_factor(1e-16)
    assert 8.5 < lam <= 9.0
    assert lam == pytest.approx(8.66, abs=0.01)
    assert bounds.lambda_factor(0.05) == pytest.approx(2.7162, abs=1e-4)
    assert_matches(bounds.lambda_factor(0.05), mp_lambda(0.05))


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 2.0, math.nan])
def test_lambda_domain(delta):
    with pytest.raises(DomainError):
        bounds.lambda_factor(delta)


# ----------------------------------------------------------------------------
# gamma_tilde, kappa, geometric factor

def test_gamma_tilde_examples():
    assert bounds.gamma_tilde(10, 0.05, 0.0) == 0.0
    u = 2.0 ** -11
    value = bounds.gamma_tilde(1, TWO_OVER_E, u)
    assert value == pytest.approx(6.91e-4, rel=2e-3)
    assert_matches(value, mp_gamma(1, TWO_OVER_E, u))
    assert bounds.gamma_tilde(400, 0.05, u) > bounds.gamma_tilde(100, 0.05, u)


def test_gamma_tilde_domain():
    with pytest.raises(DomainError):
        bounds.gamma_tilde(0, 0.05, 0.01)
    with pytest.raises(DomainError):
        bounds.gamma_tilde(10, 0.05, 1.0)
    with pytest.raises(DomainError):
        bounds.gamma_tilde(10, 1.5, 0.01)


def test_gamma_tilde_lambda_override():
    assert bounds.gamma_tilde(100, 0.05, 0.001, lam=1.0) == pytest.approx(
        float(mp_gamma(100, 0.05, 0.001, lam=1.0)), rel=1e-13)


def test_lemma32_envelope():
    lo, hi = bounds.lemma32_envelope(1000, 0.05, 2.0 ** -8)
    g = bounds.gamma_tilde(1000, 0.05, 2.0 ** -8)
    assert (lo, hi) == (1 - g, 1 + g)


def test_kappa_examples():
    assert bounds.kappa(100, 0.05, 0.0) == 0.0
    # lambda(delta / (n - 1)) = lambda(2/e) = sqrt(2) when n = 2
    assert bounds.kappa(2, TWO_OVER_E, 0.01) == pytest.approx(0.02, rel=1e-14)
    assert bounds.kappa(50, 0.05, 2e-3) == pytest.approx(2 * bounds.kappa(50, 0.05, 1e-3), rel=1e-15)
    with pytest.raises(DomainError):
        bounds.kappa(1, 0.05, 0.01)


def test_geometric_factor_examples():
    assert bounds.geometric_factor(0.0, 100) == 1.0
    assert bounds.geometric_factor(1.0, 100) == 99.0
    assert bounds.geometric_factor(0.5, 3) == 1.5
    assert bounds.geometric_factor(7.0, 2) == 1.0
    with pytest.raises(DomainError):
        bounds.geometric_factor(-0.1, 10)


@pytest.mark.parametrize("offset", [-9e-7, -3e-7, -1e-9, 1e-9, 3e-7, 9e-7])
@pytest.mark.parametrize("n", [3, 10, 200, 1000])
def test_geometric_branches_agree_near_one(offset, n):
    kap = 1.0 + offset
    series = bounds._geometric_series(kap, n - 1)
    closed = bounds._geometric_closed(kap, n - 1)
    assert series == pytest.approx(closed, rel=1e-13)
    assert_matches(bounds.geometric_factor(kap, n), mp_geometric(kap, n), rel=1e-13)


def test_geometric_series_doubling_path():
    terms = (1 << 20) + 12345
    kap = 1.0 - 1e-9
    assert_matches(bounds._geometric_series(kap, terms), mp_geometric(kap, terms + 1), rel=1e-10)


def test_geometric_factor_overflows_to_inf():
    assert math.isinf(bounds.geometric_factor(10.0, 10_000))


# ----------------------------------------------------------------------------
# Theorem bounds

def test_thm33_examples():
    zero_u = BoundInputs(100, 0.0, 0.05, s_norm=10.0)
    assert bounds.bound_thm33(zero_u).value == 0.0
    zero_norm = BoundInputs(100, 2.0 ** -8, 0.05, s_norm=0.0)
    assert bounds.bound_thm33(zero_norm).value == 0.0
    value = bounds.bound_thm33(BoundInputs(100, 2.0 ** -8, 0.05, s_norm=10.0))
    assert value.theorem is BoundKind.THM33
    assert_matches(value.value, mp_thm33(100, 2.0 ** -8, 0.05, 10))


def test_structural_bounds_need_norm():
    inputs = BoundInputs(100, 2.0 ** -8, 0.05)
    with pytest.raises(MissingNormError):
        bounds.bound_thm33(inputs)
    with pytest.raises(MissingNormError):
        bounds.bound_thm41(inputs)


def test_thm41_examples():
    assert bounds.bound_thm41(BoundInputs(100, 0.0, 0.05, s_norm=3.0)).value == 0.0
    two = bounds.bound_thm41(BoundInputs(2, 0.01, 0.05, s_norm=3.0)).value
    assert two == pytest.approx(bounds.lambda_factor(0.05) * 3.0 * 0.01, rel=1e-15)
    value = bounds.bound_thm41(BoundInputs(810, 2.0 ** -8, 0.05, s_norm=100.0)).value
    assert_matches(value, mp_thm41(810, 2.0 ** -8, 0.05, 100))


def test_sbound_examples():
    assert bounds.sbound(100, 0.05, 1.0, 0.0) == pytest.approx(1000.0, rel=1e-15)
    assert bounds.sbound(50, 0.05, 0.0, 1.0) == pytest.approx(50 * bounds.lambda_factor(0.001), rel=1e-15)
    value = bounds.sbound(1000, 0.05, 0.0, 1.0)
    assert value == pytest.approx(4604, rel=1e-3)
    assert_matches(value, mp_sbound(1000, 0.05, 0, 1))
    with pytest.raises(DomainError):
        bounds.sbound(10, 0.05, 0.0, -1.0)


def test_thm51_examples():
    n, u = 10_000, 2.0 ** -11
    inputs = BoundInputs(n, u, 0.05, mu_x=0.0, C_x=1.0)
    lam = bounds.lambda_factor(0.05 / n)
    expected = bounds.geometric_factor(lam * math.sqrt(n) * u, n) * lam ** 2 * n * u
    assert bounds.bound_thm51(inputs).value == pytest.approx(expected, rel=1e-14)
    assert_matches(bounds.bound_thm51(inputs).value, mp_thm51(n, u, 0.05, 0, 1))
    assert bounds.bound_thm51(BoundInputs(n, 0.0, 0.05, 0.5, 1.0)).value == 0.0


def test_thm52_examples():
    assert bounds.bound_thm52(BoundInputs(1000, 0.0, 0.05, 0.0, 1.0)).value == 0.0
    value = bounds.bound_thm52(BoundInputs(1000, 2.0 ** -8, 0.05, 0.0, 1.0)).value
    assert_matches(value, mp_thm52(1000, 2.0 ** -8, 0.05, 0, 1))
    # the gamma term vanishes as u -> 0
    tiny = 1e-12
    lam = bounds.lambda_factor(0.05 / 3)
    asymptote = (lam * 0.5 * 1000 ** 1.5 + lam ** 2 * 1.0 * 1000) * tiny
    assert bounds.bound_thm52(BoundInputs(1000, tiny, 0.05, 0.5, 1.0)).value == pytest.approx(asymptote, rel=1e-6)


def test_classical_bound():
    u = 2.0 ** -8
    assert bounds.classical_bound(2, u, 3.0) == pytest.approx(u / (1 - u) * 3.0, rel=1e-15)
    assert bounds.classical_bound(100, 0.0, 3.0) == 0.0
    assert bounds.classical_bound(100, u, 50.0) == pytest.approx(99 * u / (1 - 99 * u) * 50, rel=1e-15)
    with pytest.raises(DomainError):
        bounds.classical_bound(1000, u, 1.0)
    assert math.isinf(bounds.classical_bound(1000, u, 1.0, saturate=True))


def test_crossover_anchors():
    assert 5.0e4 <= bounds.crossover_n(9, 2.0 ** -11) <= 5.4e4
    assert 790 <= bounds.crossover_n(9, 2.0 ** -8) <= 830
    assert 3.3e12 <= bounds.crossover_n(9, 2.0 ** -24) <= 3.7e12
    assert bounds.crossover_n(1, 1) == 1.0
    with pytest.raises(DomainError):
        bounds.crossover_n(0, 0.1)


def test_uninformative_flag():
    value = bounds.bound_thm51(BoundInputs(10_000_000, 0.1, 0.05, 0.0, 1.0))
    assert math.isinf(value.value)
    assert value.uninformative
    finite = bounds.bound_thm51(BoundInputs(100, 2.0 ** -11, 0.05, 0.0, 1.0))
    assert not finite.uninformative


def test_bound_inputs_validation():
    for kwargs in (dict(n=1, u=0.01, failure_prob=0.05), dict(n=10, u=-0.1, failure_prob=0.05),
                   dict(n=10, u=0.01, failure_prob=1.0), dict(n=10, u=0.01, failure_prob=0.05, C_x=-1.0)):
        with pytest.raises(DomainError):
            BoundInputs(**kwargs)


def test_effective_unit_roundoff():
    u = 2.0 ** -8
    for kind in (BoundKind.LEMMA32, BoundKind.THM33, BoundKind.THM52, BoundKind.CLASSICAL):
        doubled, note = bounds.effective_unit_roundoff(u, RoundingMode.STOCHASTIC, kind)
        assert doubled == 2 * u
        assert "2u" in note
        assert bounds.effective_unit_roundoff(u, RoundingMode.NEAREST_EVEN, kind)[0] == u
    for kind in (BoundKind.THM41, BoundKind.THM51):
        assert bounds.effective_unit_roundoff(u, RoundingMode.STOCHASTIC, kind)[0] == u


# ----------------------------------------------------------------------------
# Properties

def _check_against_oracle(p):
    n, u, delta = p['n'], p['u'], p['delta']
    assert_matches(bounds.lambda_factor(delta), mp_lambda(delta))
    assert_matches(bounds.gamma_tilde(n, delta, u), mp_gamma(n, delta, u))
    assert_matches(bounds.kappa(n, delta, u), mp_lambda(mpmath.mpf(delta) / (n - 1)) * mpmath.sqrt(n) * u)
    kap = bounds.kappa(n, delta, u)
    assert_matches(bounds.geometric_factor(kap, n), mp_geometric(kap, n))
    big = kap * 3.0
    assert_matches(bounds.geometric_factor(big, n), mp_geometric(big, n), rel=1e-12 + 4 * n * 2.0 ** -53)
    assert_matches(bounds.sbound(n, delta, p['mu'], p['cx']), mp_sbound(n, delta, p['mu'], p['cx']))
    inputs = BoundInputs(n, u, delta, p['mu'], p['cx'], s_norm=p['s_norm'])
    assert_matches(bounds.bound_thm33(inputs).value, mp_thm33(n, u, delta, p['s_norm']))
    assert_matches(bounds.bound_thm41(inputs).value, mp_thm41(n, u, delta, p['s_norm']))
    assert_matches(bounds.bound_thm51(inputs).value, mp_thm51(n, u, delta, p['mu'], p['cx']))
    assert_matches(bounds.bound_thm52(inputs).value, mp_thm52(n, u, delta, p['mu'], p['cx']))


def test_formula_fidelity_random_tuples():
    for p in random_tuples(2000, seed=1):
        _check_against_oracle(p)


@pytest.mark.slow
def test_formula_fidelity_full_sweep():
    for p in random_tuples(10_000, seed=2):
        _check_against_oracle(p)


def _all_bounds(n, u, delta, mu=0.3, cx=1.0, s_norm=10.0):
    inputs = BoundInputs(n, u, delta, mu, cx, s_norm=s_norm)
    return np.array([
        bounds.bound_thm33(inputs).value,
        bounds.bound_thm41(inputs).value,
        bounds.bound_thm51(inputs).value,
        bounds.bound_thm52(inputs).value,
        bounds.gamma_tilde(n, delta, u),
        bounds.sbound(n, delta, mu, cx),
    ])


def test_bounds_monotone():
    rng = np.random.default_rng(3)
    for _ in range(300):
        n = int(rng.integers(2, 100_000))
        u = float(10 ** rng.uniform(-8, -3))
        delta = float(10 ** rng.uniform(-10, -0.5))
        base = _all_bounds(n, u, delta)
        assert np.all(base >= 0)
        assert np.all(_all_bounds(n + int(rng.integers(1, 1000)), u, delta) >= base)
        assert np.all(_all_bounds(n, u * 1.5, delta) >= base)
        assert np.all(_all_bounds(n, u, delta / 2) >= base)
        assert np.all(_all_bounds(n, u, delta, mu=0.6, cx=2.0, s_norm=20.0) >= base)


def test_thm51_dominates_thm41_on_sbound_chain():
    rng = np.random.default_rng(4)
    for _ in range(200):
        n = int(rng.integers(2, 100_000))
        u = float(10 ** rng.uniform(-8, -3))
        delta = float(10 ** rng.uniform(-10, -0.5))
        mu, cx = float(rng.uniform(-1, 1)), float(rng.uniform(0.01, 2))
        s = bounds.sbound(n, delta, mu, cx)
        inputs = BoundInputs(n, u, delta, mu, cx, s_norm=s)
        assert bounds.bound_thm51(inputs).value >= bounds.bound_thm41(inputs).value * (1 - 1e-14)
