import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from bisectlab import harness
from bisectlab.thresholds import (
    CrossingProb,
    classify_regime,
    dense_criterion,
    exact_P,
    exact_sum_pmf,
    lclt_pmf,
    log_pmf_ratio,
    perturbed_P,
    poisson_sum_pmf,
    ratio_bound,
    ratio_bound_sparse,
    report,
    sparse_criterion,
    weak_criterion,
)

probs = st.floats(0.0, 1.0, allow_nan=False)


def fraction_pmf(n: int, p: Fraction) -> list[Fraction]:
    """Binomial pmf by the ratio recurrence p_{k+1} = p_k (n-k)/(k+1) * p/(1-p), in exact rationals."""
    if p == 1:
        return [Fraction(0)] * n + [Fraction(1)]
    pmf = [(1 - p) ** n]
    for k in range(n):
        pmf.append(pmf[-1] * Fraction(n - k, k + 1) * p / (1 - p))
    return pmf


def fraction_P(m: int, n: int, p: Fraction, q: Fraction, ell: int = 0) -> Fraction:
    px = fraction_pmf(m, max(p, q))
    py = fraction_pmf(n, min(p, q))
    return sum(px[x] * sum(py[max(x - ell, 0):], Fraction(0)) for x in range(m + 1))


# --- exact_P / perturbed_P --------------------------------------------------


def test_exact_P_examples():
    assert exact_P(10, 10, 0.1, 0.0).value == pytest.approx(0.9**10, rel=1e-12)
    assert exact_P(10, 10, 0.1, 0.0).value == pytest.approx(0.3486784401, abs=1e-10)
    assert exact_P(1, 1, 0.5, 0.5).value == pytest.approx(0.75, rel=1e-12)
    assert exact_P(2, 2, 0.6, 0.2).value == pytest.approx(0.3472, rel=1e-12)


def test_perturbed_P_examples():
    assert perturbed_P(2, 2, 0.6, 0.2, 1).value == pytest.approx(0.7696, rel=1e-12)
    assert perturbed_P(7, 5, 0.4, 0.1, 0).log_value == exact_P(7, 5, 0.4, 0.1).log_value
    for ell in (7, 8, 20):
        assert perturbed_P(7, 5, 0.4, 0.1, ell).value == pytest.approx(1.0, abs=1e-15)
    # negative ell asks for Y >= X + |ell|
    assert perturbed_P(2, 2, 0.6, 0.2, -1).value == pytest.approx(0.16 * 0.36 + 0.48 * 0.04, rel=1e-12)


@pytest.mark.parametrize("m,n", [(0, 0), (1, 3), (5, 5), (12, 7), (12, 12)])
@pytest.mark.parametrize("p,q", [(Fraction(3, 10), Fraction(1, 10)), (Fraction(1, 2), Fraction(1, 2)), (Fraction(9, 10), Fraction(2, 5)), (Fraction(1), Fraction(1, 5))])
def test_exact_P_against_rational_enumeration(m, n, p, q):
    want = fraction_P(m, n, p, q)
    got = exact_P(m, n, float(p), float(q)).value
    assert abs(got - float(want)) <= 1e-10 * float(want)
    for ell in (1, 3, -2):
        want = fraction_P(m, n, p, q, ell)
        got = perturbed_P(m, n, float(p), float(q), ell).value
        assert abs(got - float(want)) <= 1e-10 * max(float(want), 1e-300)


def test_exact_P_rejects_negative_sizes():
    with pytest.raises(ValueError):
        exact_P(-1, 3, 0.2, 0.1)
    with pytest.raises(ValueError):
        perturbed_P(3, -1, 0.2, 0.1, 1)
    with pytest.raises(ValueError):
        exact_P(3, 3, 1.5, 0.1)


def test_tiny_probabilities_stay_finite_in_log_space():
    cp = exact_P(100_000, 100_000, 0.5, 0.1)
    assert cp.value == 0.0
    assert -1e6 < cp.log_value < -700


def test_degenerate_anchors():
    assert exact_P(9, 9, 1.0, 1.0).value == 1.0
    for m, p in ((5, 0.3), (40, 0.05)):
        assert exact_P(m, 11, p, 0.0).value == pytest.approx((1 - p) ** m, rel=1e-12)
    assert CrossingProb(-math.inf).value == 0.0


@settings(max_examples=150, deadline=None)
@given(m=st.integers(0, 60), n=st.integers(0, 60), p=probs, q=probs)
def test_symmetric_and_bounded(m, n, p, q):
    a, b = exact_P(m, n, p, q), exact_P(m, n, q, p)
    assert a.log_value == b.log_value
    assert a.log_value <= 0.0
    if a.log_value > -700:
        assert a.value == pytest.approx(math.exp(a.log_value), rel=1e-15)


@settings(max_examples=150, deadline=None)
@given(m=st.integers(0, 60), n=st.integers(0, 60), p=probs, q=probs, dp=st.floats(0.0, 0.3))
def test_monotone_in_p_and_q(m, n, p, q, dp):
    hi, lo = max(p, q), min(p, q)
    base = exact_P(m, n, hi, lo).value
    assert exact_P(m, n, min(hi + dp, 1.0), lo).value <= base + 1e-12
    assert exact_P(m, n, hi, min(lo + dp, hi)).value >= base - 1e-12


@settings(max_examples=100, deadline=None)
@given(m=st.integers(0, 60), n=st.integers(0, 60), p=probs, q=probs)
def test_monotone_in_ell(m, n, p, q):
    vals = [perturbed_P(m, n, p, q, ell).value for ell in range(-4, 6)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


@settings(max_examples=60, deadline=None)
@given(n1=st.integers(1, 50), n2=st.integers(1, 50), p=st.sampled_from([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]), q=st.sampled_from([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]))
def test_supermultiplicative_and_halving(n1, n2, p, q):
    whole = exact_P(n1 + n2, n1 + n2, p, q).value
    part1, part2 = exact_P(n1, n1, p, q).value, exact_P(n2, n2, p, q).value
    assert whole >= part1 * part2 - 1e-12
    assert part1 >= 0.5 * whole - 1e-12


def test_perturbation_window_with_calibrated_constant():
    table = harness.calibrate_perturbation(harness.default_calibration_grid())
    c = table.constant
    for m, p, q in ((2000, 0.1, 0.03), (10000, 0.1, 0.06), (10000, 0.02, 0.012)):
        s = math.sqrt(math.log(m) / (m * p))
        base = exact_P(m, m, p, q).value
        slack = 2.0 / m**2
        assert perturbed_P(m, m, p, q, 1).value <= base * math.exp(c * s) + slack
        assert perturbed_P(m, m, p, q, -1).value >= base * math.exp(-c * s) - slack


# --- explicit criteria ------------------------------------------------------


def test_sparse_criterion_examples():
    for n in (3, 100, 10**6):
        assert sparse_criterion(1.7, 1.7, n) == pytest.approx(-math.log(n) + 0.5 * math.log(math.log(n)))
    assert sparse_criterion(9, 1, 100) == pytest.approx(3 * math.log(100) + 0.5 * math.log(math.log(100)))
    assert sparse_criterion(9, 1, 100) == pytest.approx(14.5791, abs=5e-5)
    # direct evaluation; the 4-digit figure -3.0445 drops a digit of 2 - 2 sqrt 2
    assert sparse_criterion(2, 1, 100) == pytest.approx(
        (3 - 2 * math.sqrt(2) - 1) * math.log(100) + 0.5 * math.log(math.log(100)), rel=1e-14
    )
    assert sparse_criterion(2, 1, 100) == pytest.approx(-3.0515, abs=5e-5)


@pytest.mark.parametrize("a,b,n", [(0, 1, 10), (1, -1, 10), (1, 1, 2)])
def test_sparse_criterion_errors(a, b, n):
    with pytest.raises(ValueError):
        sparse_criterion(a, b, n)


def test_dense_criterion_examples():
    d = dense_criterion(100, 0.5, 0.3)
    sigma = math.sqrt(0.46)
    expect = 10 * sigma / 0.2 * math.exp(-100 * 0.04 / (2 * 0.46))
    assert d.value == pytest.approx(expect, rel=1e-13)
    assert d.value == pytest.approx(0.4390, abs=1e-3)
    assert d.log_value == pytest.approx(math.log(expect), rel=1e-13)
    assert dense_criterion(100, 0.3, 0.5) == d
    assert not d.degenerate


def test_dense_gaussian_tail_companion_converges():
    # value = (n / z) exp(-z^2 / 2) and n Pr(N >= z) ~ n phi(z) / z, so the log gap tends to ln sqrt(2 pi)
    target = 0.5 * math.log(2 * math.pi)
    gaps = []
    for n in (10**3, 10**4, 10**5, 10**6):
        d = dense_criterion(n, 0.05, 0.04)
        gaps.append(abs(d.log_value - d.log_gaussian_tail - target))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.01


def test_dense_criterion_degenerate_and_noiseless():
    d = dense_criterion(50, 0.3, 0.3)
    assert d.degenerate and d.value == math.inf
    z = dense_criterion(50, 1.0, 0.0)
    assert z.value == 0.0 and z.log_value == -math.inf


def test_weak_criterion_examples():
    assert weak_criterion(100, 0.5, 0.3) == pytest.approx(5.0)
    assert weak_criterion(100, 0.2, 0.2) == 0.0
    assert weak_criterion(200, 0.5, 0.3) == pytest.approx(2 * weak_criterion(100, 0.5, 0.3))
    with pytest.raises(ValueError):
        weak_criterion(10, 0.0, 0.0)


# --- report -----------------------------------------------------------------


def test_report_regimes():
    assert report(100, 0.9, 0.1).regime == "trivial"
    n = 1000
    r = report(n, 2 * math.log(n) / n, math.log(n) / n)
    assert r.regime == "sparse"
    assert r.a == pytest.approx(2.0) and r.b == pytest.approx(1.0)
    assert report(1000, 0.5, 0.4).regime == "sparse"
    assert report(100_000, 0.05, 0.0453).regime == "dense"
    assert report(100, 0.2, 0.2).regime == "degenerate"
    assert classify_regime(10, 0.1, 0.9) == "trivial"


def test_report_fields_and_flags():
    r = report(1000, 0.5, 0.4)
    assert r.exact_log_nP == pytest.approx(math.log(1000) + exact_P(1000, 1000, 0.5, 0.4).log_value)
    assert r.sigma == pytest.approx(math.sqrt(0.25 + 0.24))
    assert r.weak_stat == pytest.approx(1000 * 0.01 / 0.9)
    assert report(1000, 0.01, 0.0).sparse_stat is None
    assert report(1000, 0.01, 0.0).hypothesis_unmet
    # dense tag in the band 128 ln n < np <= ln^3 n is flagged
    assert report(10_000, 0.15, 0.01).hypothesis_unmet
    assert not report(100_000, 0.05, 0.0453).hypothesis_unmet
    with pytest.raises(ValueError):
        report(1, 0.2, 0.1)


def test_report_json_field_names():
    d = report(500, 0.1, 0.05).to_dict()
    assert list(d) == [
        "n", "p", "q", "exact_log_nP", "sparse_stat", "dense_stat", "weak_stat",
        "a", "b", "sigma", "regime", "hypothesis_unmet",
    ]
    assert json.loads(json.dumps(d)) == d


# --- asymptotic approximations------------------------------------------------


def test_lclt_examples():
    n, q = 100_000, 0.3
    assert lclt_pmf(n, q, n * q) == pytest.approx(1 / math.sqrt(2 * math.pi * n * q * (1 - q)))
    assert binom.pmf(30000, n, q) / lclt_pmf(n, q, 30000) == pytest.approx(1.0, abs=0.01)
    d = 123
    assert lclt_pmf(n, q, n * q + d) == pytest.approx(lclt_pmf(n, q, n * q - d), rel=1e-14)
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            lclt_pmf(10, bad, 3)


def test_poisson_examples():
    n, a, b = 10_000, 1.2, 0.8
    c = a + b
    assert poisson_sum_pmf(n, a, b, 0) == pytest.approx(n ** (-c), rel=1e-13)
    k = np.arange(30)
    vals = poisson_sum_pmf(n, a, b, k)
    assert np.allclose(vals[1:] / vals[:-1], c * math.log(n) / (k[:-1] + 1), rtol=1e-12)
    with pytest.raises(ValueError):
        poisson_sum_pmf(n, 0.0, b, 1)


def test_exact_sum_pmf_is_a_convolution():
    n, a, b = 500, 1.5, 0.5
    pmf = exact_sum_pmf(n, a, b)
    assert pmf.size == 2 * n + 1
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
    s = math.log(n) / n
    assert pmf @ np.arange(pmf.size) == pytest.approx(n * (a + b) * s, rel=1e-10)


def test_log_pmf_ratio_matches_scipy():
    m, p = 80, 0.3
    k = np.arange(0, 70)
    ell = 5
    want = binom.logpmf(k + ell, m, p) - binom.logpmf(k, m, p)
    assert np.allclose(log_pmf_ratio(m, p, k, ell), want, atol=1e-9)
    assert np.all(log_pmf_ratio(m, p, k, 0) == 0.0)


def test_ratio_bound_dominates_exact():
    for m in (1, 2, 5, 17, 60, 200):
        for p in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6):
            k, ell = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
            valid = k + ell <= m
            k, ell = k[valid], ell[valid]
            exact = log_pmf_ratio(m, p, k, ell)
            bound = ratio_bound(m, p, k, ell)
            # the bound is attained at ell = 1, so compare with rounding slack
            assert np.all(exact <= bound + 1e-9 * (1 + np.abs(bound)))
    assert ratio_bound(10, 0.3, 4, 0) == 0.0


def test_ratio_bound_sparse_examples():
    m = 1000
    p = math.log(m) / m
    assert ratio_bound_sparse(m, p, 0, 1) == pytest.approx(math.log(math.log(m)) + 2)
    assert ratio_bound_sparse(m, p, 7, 0) == 0.0
    with pytest.raises(ValueError):
        ratio_bound_sparse(10_000, 0.2, 0, 1)
    with pytest.raises(ValueError):
        ratio_bound(10, 0.3, 8, 5)
    with pytest.raises(ValueError):
        ratio_bound(10, 0.3, -1, 1)
