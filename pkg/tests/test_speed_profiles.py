import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vsbbm.errors import ConstructionError, DomainError
from vsbbm.speed_profiles import (
    CaseBEnvelope,
    ProfilePair,
    SpeedProfile,
    concave_hull,
    envelope_to_dict,
    identity_profile,
    load_speed_function,
    profile_from_knots,
    profile_to_dict,
    sandwich,
    save_speed_function,
    speed_function_from_dict,
    two_speed_profile,
    validate_case_a,
    validate_case_b,
    validate_piecewise_case_b,
    validation_grid,
)


@st.composite
def profiles(draw, max_pieces=6):
    n = draw(st.integers(1, max_pieces))
    raw_b = draw(st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n))
    raw_v = draw(st.lists(st.floats(0.0, 3.0), min_size=n, max_size=n))
    b = np.asarray(raw_b) / np.sum(raw_b)
    v = np.asarray(raw_v)
    tot = float(np.dot(v, b))
    if tot < 1e-3:
        v = np.ones(n)
    else:
        v = v / tot
    # absorb rounding in the last piece
    v[-1] = (1.0 - float(np.dot(v[:-1], b[:-1]))) / b[-1]
    if v[-1] < 0:
        v = np.ones(n)
    return SpeedProfile(tuple(v), tuple(b), 100.0)


def test_identity_evaluation():
    assert identity_profile().evaluate(0.37) == pytest.approx(0.37, abs=1e-15)


def test_two_speed_evaluation():
    prof = SpeedProfile((2.0, 0.0), (0.5, 0.5))
    assert prof.evaluate(0.5) == pytest.approx(1.0, abs=1e-15)
    assert prof.evaluate(0.75) == pytest.approx(1.0, abs=1e-15)
    assert prof.evaluate(0.25) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=200)
@given(profiles())
def test_profile_invariants(prof):
    assert prof.evaluate(1.0) == pytest.approx(1.0, abs=1e-12)
    assert prof.evaluate(0.0) == 0.0
    s = np.linspace(0, 1, 101)
    vals = prof.evaluate(s)
    assert np.all(np.diff(vals) >= -1e-12)


@pytest.mark.parametrize("s", [-0.01, 1.01, math.nan])
def test_evaluate_out_of_range(s):
    with pytest.raises(DomainError):
        identity_profile().evaluate(s)


def test_constructor_rejections():
    with pytest.raises(DomainError):
        SpeedProfile((1.0, 1.0), (0.5, 0.6))
    with pytest.raises(DomainError):
        SpeedProfile((-0.1, 2.1), (0.5, 0.5))
    with pytest.raises(DomainError):
        SpeedProfile((1.5, 1.0), (0.5, 0.5))  # integral 1.25


def test_variance_knots_scale_with_t():
    prof = SpeedProfile((1.5, 0.5), (0.5, 0.5), 10.0)
    kt, kv = prof.variance_knots()
    np.testing.assert_allclose(kt, [0, 5, 10])
    np.testing.assert_allclose(kv, [0, 7.5, 10])


def test_case_a_two_speed_passes_when_alphas_small():
    rep = validate_case_a(two_speed_profile(1e6, 0.3, 0.5), beta=0.05)
    assert rep.passed, [c.name for c in rep.failures()]


def test_case_a_two_speed_separation_fails_when_alphas_big():
    rep = validate_case_a(two_speed_profile(1e6, 0.5, 0.7), beta=0.05)
    assert not rep.passed
    assert any(c.name.startswith("separation") for c in rep.failures())


def test_case_a_identity_fails_above_identity():
    rep = validate_case_a(identity_profile(1e6), beta=0.1)
    assert not rep["above_identity"].passed


def test_case_a_domain():
    with pytest.raises(DomainError):
        validate_case_a(identity_profile(10.0), beta=0.6)


def test_piecewise_case_b_report_names():
    t = 1e4
    a1, al = 0.25, 0.25
    b1 = bl = 0.1
    v1 = 1 - t ** -a1
    vl = 1 + t ** -al
    vm = (1 - v1 * b1 - vl * bl) / 0.8
    prof = SpeedProfile((v1, vm, vl), (b1, 0.8, bl), t)
    rep = validate_piecewise_case_b(prof, a1, al)
    for name in ("first_velocity", "last_velocity", "first_length_small"):
        assert rep[name].passed
    assert rep["below_identity"].passed


def test_case_b_begin_checks_quarter_rate():
    # slope 1 - t^(-1/4) at 0, t = 1e4: a begin length of 0.1 equals t^(alpha - 1/2) exactly
    env = CaseBEnvelope.build(0.25, 0.25, 0.1, 0.1, "quadratic_gap", horizon_t=1e4)
    rep = validate_case_b(env)
    assert env.slope_at(0.0) == pytest.approx(1 - 1e4 ** -0.25, abs=1e-6)
    for name in ("begin_slope", "begin_length_small", "begin_curvature_bound", "begin_curvature_rate"):
        assert rep[name].passed, name
    assert rep["begin_length_large"].value == pytest.approx(0.0, abs=1e-12)
    assert not rep["begin_length_large"].passed

    wider = CaseBEnvelope.build(0.25, 0.25, 0.2, 0.2, "quadratic_gap", horizon_t=1e4)
    rep = validate_case_b(wider)
    for name in ("begin_slope", "begin_length_small", "begin_length_large",
                 "begin_curvature_bound", "begin_curvature_rate"):
        assert rep[name].passed, name


def test_case_b_touching_middle_fails_gap():
    env = CaseBEnvelope.build(0.2, 0.2, 0.2, 0.2, "touching", {"touch_at": 0.5}, horizon_t=1e4)
    rep = validate_case_b(env)
    assert not rep["middle_gap"].passed


@pytest.mark.parametrize("alpha", [0.6, 0.0, 0.5])
def test_case_b_constructor_rejects_alpha(alpha):
    with pytest.raises(DomainError):
        CaseBEnvelope(alpha, 0.2, 0.2, 0.2)


def test_case_b_unknown_family_and_params():
    with pytest.raises(DomainError):
        CaseBEnvelope(0.2, 0.2, 0.2, 0.2, "cubic")
    with pytest.raises(DomainError):
        CaseBEnvelope(0.2, 0.2, 0.2, 0.2, "quadratic_gap", (("amplitude", 0.1),))


@pytest.mark.parametrize("family,params", [("quadratic_gap", None), ("sine_bump", {"amplitude": 0.01})])
def test_sandwich_brackets_env(family, params):
    env = CaseBEnvelope.build(0.1, 0.1, 0.3, 0.3, family, params, horizon_t=1e4)
    assert validate_case_b(env).passed
    pair = sandwich(env)
    grid = validation_grid(env, pair.lower, pair.upper, n=1000)
    a = env.evaluate(grid)
    assert np.all(pair.lower.evaluate(grid) <= a + 1e-10)
    assert np.all(a <= pair.upper.evaluate(grid) + 1e-10)
    assert pair.lower.ell == pair.upper.ell == 5


def test_sandwich_output_validates_piecewise():
    env = CaseBEnvelope.build(0.1, 0.1, 0.3, 0.3, "quadratic_gap", horizon_t=1e4)
    pair = sandwich(env)
    for prof in (pair.lower, pair.upper):
        rep = validate_piecewise_case_b(prof, 0.1, 0.1)
        assert rep["below_identity"].passed
        assert rep["middle_gap"].value > 0


def test_sandwich_infeasible_raises_named_condition():
    env = CaseBEnvelope.build(0.25, 0.25, 0.3, 0.3, "quadratic_gap", horizon_t=1e4)
    with pytest.raises(ConstructionError, match="gluing slope"):
        sandwich(env)


def test_sandwich_fixed_point_for_piecewise_env():
    knots = ((0.0, 0.0), (0.15, 0.15 * (1 - 1e4 ** -0.1)), (0.3, 0.27), (0.7, 0.66),
             (0.85, 1 - 0.15 * (1 + 1e4 ** -0.1)), (1.0, 1.0))
    env = CaseBEnvelope.build(0.1, 0.1, 0.3, 0.3, "piecewise_linear", {"knots": knots}, horizon_t=1e4,
                              bound_second_deriv_begin=0.0, bound_second_deriv_end=0.0)
    pair = sandwich(env)
    bps = np.array([0.15, 0.3, 0.7, 0.85])
    offset = 1e4 ** (-0.5 + env.min_gap_exponent / 2)
    assert np.max(np.abs(pair.lower.evaluate(bps) - env.evaluate(bps))) < 1e-10
    assert np.max(np.abs(pair.upper.evaluate(bps) - env.evaluate(bps))) < 0.1 + offset


def test_profile_pair_order():
    with pytest.raises(ConstructionError):
        ProfilePair(identity_profile(), SpeedProfile((0.5, 1.5), (0.5, 0.5)))


def test_concave_hull_examples():
    concave = SpeedProfile((1.5, 0.5), (0.5, 0.5))
    assert concave_hull(concave) is concave
    hull = concave_hull(SpeedProfile((0.5, 1.5), (0.5, 0.5)))
    assert hull.ell == 1 and hull.velocities[0] == pytest.approx(1.0)
    assert concave_hull(identity_profile()).is_identity()


@settings(max_examples=100)
@given(profiles())
def test_concave_hull_dominates(prof):
    hull = concave_hull(prof)
    s = np.linspace(0, 1, 201)
    assert np.all(hull.evaluate(s) >= prof.evaluate(s) - 1e-12)
    assert np.all(np.diff(hull.velocities) <= 1e-9)


def test_profile_from_knots_roundtrip():
    prof = profile_from_knots([0, 0.3, 1.0], [0, 0.5, 1.0], 5.0)
    assert prof.evaluate(0.3) == pytest.approx(0.5)
    assert prof.horizon_t == 5.0


def test_json_roundtrip(tmp_path):
    prof = two_speed_profile(100.0, 0.1, 0.2)
    env = CaseBEnvelope.build(0.3, 0.3, 0.3, 0.3, "sine_bump", {"amplitude": 0.01})
    for obj, conv in ((prof, profile_to_dict), (env, envelope_to_dict)):
        path = tmp_path / "f.json"
        save_speed_function(obj, path)
        back = load_speed_function(path)
        assert conv(back) == conv(obj)
        assert speed_function_from_dict(json.loads(path.read_text())) == back


def test_envelope_to_profile_interpolates():
    env = CaseBEnvelope.build(0.3, 0.3, 0.3, 0.3, "quadratic_gap", horizon_t=1e4)
    prof = env.to_profile(65)
    s = np.linspace(0, 1, 1001)
    assert np.max(np.abs(prof.evaluate(s) - env.evaluate(s))) < 1e-3
