from fractions import Fraction
import math

import pytest
from hypothesis import given, settings, strategies as st

from stratint.coefficients import IntegralSpec, build_tensor
from stratint.errors import (
    ErrorReport,
    QSelectionError,
    double_stratonovich_bias,
    error_report,
    exact_Ik,
    mc_error_estimate,
    ms_error_double,
    ms_error_double_exact,
    ms_error_double_stratonovich,
    ms_error_permutation,
    parseval_sum_exact,
    permutation_error_exact,
    select_q,
    select_q_report,
    tail_bound_log,
    upper_bound_factorial,
)


def test_exact_norms():
    assert exact_Ik("000") == (Fraction(1, 6), 3)
    assert exact_Ik("010") == (Fraction(1, 20), 5)
    assert exact_Ik("00000") == (Fraction(1, 120), 5)
    assert exact_Ik("1") == (Fraction(1, 3), 3)


def test_double_closed_forms():
    assert ms_error_double_exact("00", 0, False) == (Fraction(1, 4), 2)
    assert ms_error_double_exact("00", 3, False) == (Fraction(1, 28), 2)
    assert ms_error_double_exact("10", 0, False) == (Fraction(1, 36), 4)
    assert ms_error_double_exact("01", 0, True) == (Fraction(4, 45 * 16), 4)
    assert ms_error_double("00", 5, 2.0, True) == 0.0
    with pytest.raises(ValueError):
        ms_error_double("00", -1, 1.0, False)


@given(st.integers(0, 200))
def test_eq1_telescopes(q):
    assert ms_error_double_exact("00", q, False)[0] == Fraction(1, 4 * (2 * q + 1))


@given(st.integers(0, 40))
def test_unweighted_closed_form_matches_permutation_form(q):
    val, p = permutation_error_exact(IntegralSpec((0, 0), (1, 2)), q)
    assert (val, p) == ms_error_double_exact("00", q, False)


@given(st.integers(0, 30), st.sampled_from([("10", -1), ("01", 1)]))
def test_stratonovich_bias_closed_form(q, case):
    w, sign = case
    bias = double_stratonovich_bias(w, q, 1.0)
    assert bias == pytest.approx(sign * (1 / (2 * q + 1) + 1 / (2 * q + 3)) / 16, rel=1e-12)
    full = ms_error_double_stratonovich(w, q, 1.0, True)
    assert full == pytest.approx(ms_error_double(w, q, 1.0, True) + bias ** 2, rel=1e-14)


@settings(deadline=None, max_examples=15)
@given(st.sampled_from(["000", "100", "010", "001", "0000"]), st.integers(0, 5))
def test_distinct_permutation_equals_parseval(w, q):
    spec = IntegralSpec(tuple(map(int, w)))
    val, _ = permutation_error_exact(spec, q)
    ik, _ = exact_Ik(spec)
    assert val == ik - parseval_sum_exact(spec, q)


@settings(deadline=None, max_examples=20)
@given(st.sampled_from([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 0, 0)]),
       st.sampled_from([(1, 2, 3), (1, 1, 2), (1, 2, 1), (2, 1, 1), (1, 2, 3, 1), (1, 1, 2, 2)]),
       st.integers(0, 5), st.floats(0.01, 2.0))
def test_error_between_zero_and_factorial_bound(w, comps, q, delta):
    comps = comps[: len(w)] if len(comps) >= len(w) else comps + (1,) * (len(w) - len(comps))
    spec = IntegralSpec(w, comps)
    t = build_tensor(w, q, delta)
    err = ms_error_permutation(spec, t)
    bound = upper_bound_factorial(spec, t)
    assert -1e-15 * delta ** 3 <= err <= bound * (1 + 1e-12)


def test_errors_decrease_in_q():
    spec = IntegralSpec((0, 1, 0), (1, 2, 1))
    vals = [permutation_error_exact(spec, q)[0] for q in range(6)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@given(st.integers(1, 50), st.floats(0.001, 10.0))
def test_log_tail_bound_dominates(q, delta):
    assert tail_bound_log(q, delta) >= ms_error_double("00", q, delta, False) * (1 - 1e-12)


def test_log_tail_bound_rejects_q0():
    with pytest.raises(ValueError):
        tail_bound_log(0, 1.0)


def test_select_examples():
    assert select_q(IntegralSpec((0, 0, 0), (1, 2, 3)), 1.0, 0.0196) == 6
    assert select_q(IntegralSpec((0, 0), (1, 2)), 0.1) == 1250
    assert select_q(IntegralSpec((0, 0), (1, 1)), 0.1) == 0
    assert select_q(IntegralSpec((0,), (1,)), 0.1) == 0
    assert select_q(IntegralSpec((0, 0, 0), (2, 2, 2)), 0.01) == 0


def test_select_is_minimal():
    spec = IntegralSpec((1, 0), (1, 2))
    d = 0.1
    q = select_q(spec, d)
    thr = d ** 6
    assert ms_error_double("10", q, d, False) <= thr
    assert q == 0 or ms_error_double("10", q - 1, d, False) > thr


@given(st.floats(0.05, 0.5), st.floats(0.05, 0.5))
def test_select_monotone_in_delta(d1, d2):
    lo, hi = sorted((d1, d2))
    spec = IntegralSpec((0, 0), (1, 2))
    assert select_q(spec, lo) >= select_q(spec, hi)


def test_select_failures():
    with pytest.raises(QSelectionError):
        select_q(IntegralSpec((0, 0), (1, 2)), 0.1, q_cap=10)
    with pytest.raises(QSelectionError):
        select_q(IntegralSpec((0, 0, 0), (1, 2, 3)), 0.01)
    with pytest.raises(ValueError):
        select_q(IntegralSpec((0, 0), (1, 2)), 0.1, c_target=0)


def test_reports():
    rep = select_q_report(IntegralSpec((0, 0), (1, 2)), 0.5)
    assert rep.exact_error <= 0.5 ** 6
    assert rep.upper_bound >= rep.exact_error
    r3 = error_report(IntegralSpec((0, 1, 0), (1, 1, 2)), 2, 0.5)
    assert r3.method == "permutation-form" and r3.upper_bound >= r3.exact_error
    with pytest.raises(ValueError):
        ErrorReport(IntegralSpec((0, 0)), 0, 1.0)


def test_mc_estimate_arguments():
    spec = IntegralSpec((0, 0), (1, 2))
    with pytest.raises(ValueError):
        mc_error_estimate(spec, 2, 4, 999, 1.0, 0)
    with pytest.raises(ValueError):
        mc_error_estimate(spec, 4, 2, 1000, 1.0, 0)
    assert mc_error_estimate(spec, 3, 3, 1000, 1.0, 0) == (0.0, 0.0)


def test_mc_estimate_matches_gap():
    spec = IntegralSpec((0, 0), (1, 2))
    mean, se = mc_error_estimate(spec, 1, 15, 20_000, 1.0, 3)
    gap = ms_error_double("00", 1, 1.0, False) - ms_error_double("00", 15, 1.0, False)
    assert abs(mean - gap) <= 4 * se
