import math

import mpmath as mp
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsbbm.centering import (
    STANDARD_LOG_COEFFICIENT,
    case_b_gate_correction,
    case_b_log_coefficient,
    m_minus,
    m_plus,
    m_standard,
    partial_log_correction,
    standard_term,
)
from vsbbm.errors import DomainError
from vsbbm.speed_profiles import SpeedProfile, identity_profile, two_speed_profile

mp.mp.dps = 40


def _mp_standard(t):
    t = mp.mpf(t)
    return mp.sqrt(2) * t - 3 / (2 * mp.sqrt(2)) * mp.log(t)


@pytest.mark.parametrize("t", [1.5, 2.0, math.e, 10.0, 100.0, 1e6])
def test_m_standard_matches_high_precision(t):
    assert m_standard(t) == pytest.approx(float(_mp_standard(t)), rel=1e-14, abs=1e-13)


def test_m_standard_known_values():
    # independent evaluations; the value at t=100 is 136.536835...
    assert m_standard(100.0) == pytest.approx(136.53683563676407, abs=1e-10)
    assert m_standard(math.e) == pytest.approx(2.7835708563792955, abs=1e-12)


@pytest.mark.parametrize("t", [1.0, 0.5, 0.0, -3.0, math.inf, math.nan])
def test_m_standard_rejects_small_t(t):
    with pytest.raises(DomainError):
        m_standard(t)


@given(st.floats(1.01, 1e7), st.floats(1.01, 1e7))
def test_m_standard_minus_linear_part_decreasing(a, b):
    lo, hi = sorted((a, b))
    if hi - lo < 1e-6 * hi:
        return
    assert m_standard(hi) - math.sqrt(2) * hi < m_standard(lo) - math.sqrt(2) * lo


@pytest.mark.parametrize("t", [2.0, 10.0, 100.0, 1e6])
def test_m_plus_identity_reduces_to_standard(t):
    term = m_plus(identity_profile(t))
    assert abs(term.value - m_standard(t)) <= 1e-12 * max(1.0, abs(m_standard(t)))
    assert term.ledger.gap_terms == ()


def test_m_plus_two_speed_hand_expansion():
    t = 1e4
    s1 = mp.mpf("1.1")
    s2 = mp.sqrt(2 - s1 ** 2)
    prof = SpeedProfile((1.21, float(2 - s1 ** 2)), (0.5, 0.5), t)
    term = m_plus(prof)
    b = mp.mpf("0.5")
    lead = mp.sqrt(2) * t * (s1 * b + s2 * b)
    logs = mp.log(b * t) + mp.log(b * t)
    gap = 2 * mp.log(mp.pi ** (mp.mpf(1) / 6) * (s1 - s2))
    expect = lead - 3 / (2 * mp.sqrt(2)) * (logs + gap)
    assert term.value == pytest.approx(float(expect), rel=1e-13)
    assert term.leading == pytest.approx(float(lead), rel=1e-13)
    assert sum(term.ledger.log_bt) == pytest.approx(float(logs), rel=1e-13)


def test_m_plus_rejects_non_decreasing_velocities():
    prof = SpeedProfile((0.5, 1.5), (0.5, 0.5), 100.0)
    with pytest.raises(DomainError):
        m_plus(prof)


@pytest.mark.parametrize("alphas", [(0.1, 0.2), (0.2, 0.3), (0.05, 0.4)])
def test_m_plus_effective_coefficient_between_one_and_ell(alphas):
    # two speeds converging to the identity: f(A_t) lies in (1, 2) for large t
    t = 1e8
    prof = two_speed_profile(t, *alphas)
    term = m_plus(prof)
    assert STANDARD_LOG_COEFFICIENT < term.log_coefficient < 2 * STANDARD_LOG_COEFFICIENT


@given(st.floats(0.001, 0.499), st.floats(0.001, 0.499))
def test_case_b_coefficient_closed_form(a, b):
    assert case_b_log_coefficient(a, b) == pytest.approx((1 + 2 * (a + b)) / (2 * math.sqrt(2)), abs=1e-15)


def test_case_b_coefficient_limits():
    assert case_b_log_coefficient(1e-12, 1e-12) == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-11)
    assert case_b_log_coefficient(0.25, 0.25) == pytest.approx(0.7071067811865476, abs=1e-15)
    eps = 1e-12
    assert case_b_log_coefficient(0.5 - eps, 0.5 - eps) == pytest.approx(STANDARD_LOG_COEFFICIENT, abs=1e-11)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 0.6, -0.1])
def test_m_minus_rejects_alpha(alpha):
    with pytest.raises(DomainError):
        m_minus(alpha, 0.2, 10.0)


def test_m_minus_value():
    term = m_minus(0.25, 0.25, 100.0)
    assert term.value == pytest.approx(math.sqrt(2) * 100 - 0.7071067811865476 * math.log(100), abs=1e-12)
    assert term.correction < 0
    assert standard_term(100.0).value == m_standard(100.0)


def test_partial_and_gate_corrections():
    prof = SpeedProfile((1.21, 0.79), (0.5, 0.5), 1e4)
    full = m_plus(prof)
    assert partial_log_correction(prof, upto=0) == 0.0
    # the Case-A correction is the partial sum to ell-1 plus the last log(b_ell t) term
    last = -STANDARD_LOG_COEFFICIENT * math.log(0.5 * 1e4)
    assert partial_log_correction(prof) + last == pytest.approx(full.correction, rel=1e-12)
    g = case_b_gate_correction(prof, 0.2, 0.3)
    expect = STANDARD_LOG_COEFFICIENT * math.sqrt(0.79) * math.log(5e3) - case_b_log_coefficient(0.2, 0.3) * math.log(1e4)
    assert g == pytest.approx(expect, rel=1e-12)


@settings(max_examples=50)
@given(st.floats(1.001, 1e5))
def test_standard_term_dict_roundtrip(t):
    d = standard_term(t).to_dict()
    assert d["value"] == pytest.approx(d["leading"] + d["correction"], abs=1e-9)
