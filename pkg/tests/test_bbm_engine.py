import math

import numpy as np
import pytest
from scipy import stats

from vsbbm.bbm_engine import (
    REPLICAS_PER_CHUNK,
    OffspringLaw,
    PruningPolicy,
    load_ensemble,
    localized_derivative_sum,
    many_to_one_check,
    martingale_series,
    save_ensemble,
    simulate,
)
from vsbbm.diagnostics import EnvelopeSpec
from vsbbm.errors import DomainError, PreconditionError, ResourceError
from vsbbm.speed_profiles import SpeedProfile, identity_profile

SQRT2 = math.sqrt(2.0)


def naive_max(profile, t, n, seed):
    """Recursive reference simulator: explicit branch times, variance from np.interp."""
    rng = np.random.default_rng(seed)
    knots_s = np.asarray(profile.breakpoints) * t
    knots_v = np.asarray(profile.knot_values) * t
    V = lambda s: float(np.interp(s, knots_s, knots_v))  # noqa: E731
    out = np.empty(n)
    for i in range(n):
        best = -np.inf
        stack = [(0.0, 0.0)]
        while stack:
            s, x = stack.pop()
            nxt = s + rng.exponential()
            end = min(nxt, t)
            x = x + math.sqrt(max(V(end) - V(s), 0.0)) * rng.standard_normal()
            if nxt >= t:
                best = max(best, x)
            else:
                stack += [(nxt, x), (nxt, x)]
        out[i] = best
    return out


def test_offspring_law_validation():
    with pytest.raises(DomainError):
        OffspringLaw((0.5, 0.5))  # mean 1.5
    with pytest.raises(DomainError):
        OffspringLaw((0.3, 0.3))
    law = OffspringLaw((0.25, 0.5, 0.25))
    assert law.second_factorial_moment == pytest.approx(2 * 0.5 + 6 * 0.25)
    np.testing.assert_allclose(OffspringLaw.binary().nonlinearity([0.0, 0.3, 1.0]), [0.0, 0.3 - 0.09, 0.0])


def test_mean_population_at_one():
    ens = simulate(identity_profile(1.0), replicas=20_000, seed=1)
    n = ens.n_final
    assert abs(n.mean() - math.e) < 3 * n.std(ddof=1) / math.sqrt(n.size)


def test_general_offspring_mean_population():
    ens = simulate(identity_profile(1.5), replicas=20_000, seed=2, offspring=OffspringLaw((0.25, 0.5, 0.25)))
    n = ens.n_final
    assert abs(n.mean() - math.exp(1.5)) < 3 * n.std(ddof=1) / math.sqrt(n.size)


@pytest.mark.parametrize("profile", [identity_profile(3.0), SpeedProfile((1.6, 0.4), (0.5, 0.5), 3.0),
                                     SpeedProfile((0.4, 1.6), (0.5, 0.5), 3.0)])
def test_max_law_matches_reference_simulator(profile):
    ref = naive_max(profile, 3.0, 3000, seed=10)
    got = simulate(profile, 3.0, replicas=3000, seed=11).max_positions
    assert stats.ks_2samp(ref, got).pvalue > 1e-3


def test_zero_variance_piece_freezes_positions():
    prof = SpeedProfile((2.0, 0.0), (0.5, 0.5), 4.0)
    ens = simulate(prof, replicas=20, seed=3)
    assert ens.checkpoint_times == (2.0,)
    for run in ens:
        paths = run.ancestral_paths()
        np.testing.assert_array_equal(paths[:, 0], paths[:, 1])


def test_thread_count_invariance_and_prefix_stability():
    prof = identity_profile(4.0)
    a = simulate(prof, replicas=2 * REPLICAS_PER_CHUNK + 5, seed=9, checkpoints=[2.0], threads=1)
    b = simulate(prof, replicas=2 * REPLICAS_PER_CHUNK + 5, seed=9, checkpoints=[2.0], threads=3)
    np.testing.assert_array_equal(a.final_positions, b.final_positions)
    np.testing.assert_array_equal(a.stats, b.stats)
    c = simulate(prof, replicas=REPLICAS_PER_CHUNK + 1, seed=9, checkpoints=[2.0])
    np.testing.assert_array_equal(c.stats, a.stats[: REPLICAS_PER_CHUNK + 1])


def test_population_cap():
    with pytest.raises(ResourceError, match="cap"):
        simulate(identity_profile(12.0), replicas=1, seed=0, population_cap=1000)


def test_pruning_preserves_max_law():
    prof = identity_profile(7.0)
    full = simulate(prof, replicas=1500, seed=4).max_positions
    pruned_ens = simulate(prof, replicas=1500, seed=5, pruning=PruningPolicy(8.0, 0.5))
    assert pruned_ens.pruned.sum() > 0
    assert stats.ks_2samp(full, pruned_ens.max_positions).pvalue > 1e-3


def test_records_are_consistent():
    ens = simulate(identity_profile(5.0), checkpoints=[1.0, 2.5, 4.0], replicas=10, seed=6)
    for run in ens:
        paths = run.ancestral_paths()
        np.testing.assert_array_equal(paths[:, -1], run.final_positions)
        for j, s in enumerate(run.checkpoint_times):
            np.testing.assert_array_equal(paths[:, j], run.ancestral_positions(s))
            st = run.martingales(s)
            x = run.record_position[run.record_checkpoint == j]
            assert st.mckean_value == pytest.approx(np.exp(-SQRT2 * (SQRT2 * s - x)).sum(), rel=1e-12)
        assert run.max_position == run.final_positions.max()
    with pytest.raises(PreconditionError):
        ens[0].checkpoint_index(3.3)


def test_keep_window_truncates_finals_only():
    full = simulate(identity_profile(5.0), checkpoints=[2.5], replicas=30, seed=7)
    cut = simulate(identity_profile(5.0), checkpoints=[2.5], replicas=30, seed=7, keep_window=1.0)
    np.testing.assert_array_equal(full.stats, cut.stats)
    for a, b in zip(full, cut):
        kept = a.final_positions >= a.max_position - 1.0
        np.testing.assert_array_equal(a.final_positions[kept], b.final_positions)
        np.testing.assert_array_equal(a.ancestral_paths(np.nonzero(kept)[0]), b.ancestral_paths())


def test_many_to_one_unknown_functional():
    with pytest.raises(DomainError):
        many_to_one_check(1.0, "cubic", 10)


@pytest.mark.parametrize("name,t", [("count", 2.0), ("exp_tilt_sqrt2", 3.0), ("derivative_summand", 2.0),
                                    ("indicator_above_level", 2.0), ("linear", 2.0)])
def test_many_to_one_oracles(name, t):
    rep = many_to_one_check(t, name, 20_000, seed=12, level=1.0)
    assert abs(rep.z_score) < 3.0, rep.to_dict()


def test_many_to_one_count_expected():
    assert many_to_one_check(2.0, "count", 10, seed=0).expected == pytest.approx(math.exp(2.0), rel=1e-10)


def test_martingale_means():
    ser = martingale_series([1.0, 2.0, 4.0], 20_000, seed=13)
    for row in ser.summary():
        assert abs(row["W_mean"] - 1.0) < 3 * row["W_se"]
        assert abs(row["Z_mean"]) < 3 * row["Z_se"]


@pytest.mark.slow
def test_derivative_martingale_positivity_trend():
    # Z(s) has mean 0 but a positive limit: the positive fraction grows with s.
    # The median itself peaks near s = 2 at this sample size.
    times = [1.0, 2.0, 4.0, 8.0]
    ser = martingale_series(times, 4000, seed=14, pruning=PruningPolicy(30.0, 0.5))
    frac = [float(np.mean(ser.Z[:, j] > 0)) for j in range(len(times))]
    assert all(row["Z_median"] > 0 for row in ser.summary())
    assert all(b > a for a, b in zip(frac, frac[1:]))


def test_localized_sum_reduces_to_z():
    ens = simulate(identity_profile(4.0), checkpoints=[1.0, 2.0, 3.0], replicas=5, seed=15)
    for run in ens:
        for s in (2.0, 3.0):
            z = run.martingales(s).derivative_value
            assert localized_derivative_sum(run, s, EnvelopeSpec.accept_all()) == pytest.approx(z, rel=1e-12, abs=1e-12)
            assert localized_derivative_sum(run, s, EnvelopeSpec.reject_all()) == 0.0
    with pytest.raises(PreconditionError):
        localized_derivative_sum(ens[0], 2.5, EnvelopeSpec.accept_all())


def test_localized_sum_approaches_z_as_velocities_merge():
    # sigma_1 / sigma_2 -> 1 with common random numbers: the paired difference shrinks
    errs = []
    for eps in (0.5, 0.1, 0.01):
        prof = SpeedProfile((1 + eps, 1 - eps), (0.5, 0.5), 4.0)
        ens = simulate(prof, checkpoints=[1.0], replicas=300, seed=16)
        d = [localized_derivative_sum(r, 1.0, EnvelopeSpec.accept_all()) - r.martingales(1.0).derivative_value
             for r in ens]
        errs.append(float(np.mean(np.abs(d))))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.05 * errs[0]


def test_save_and_load(tmp_path):
    ens = simulate(identity_profile(3.0), checkpoints=[1.5], replicas=7, seed=17)
    p = tmp_path / "e.npz"
    save_ensemble(ens, p)
    back = load_ensemble(p)
    np.testing.assert_array_equal(back.final_positions, ens.final_positions)
    np.testing.assert_array_equal(back[3].ancestral_paths(), ens[3].ancestral_paths())
    q = tmp_path / "f.npz"
    save_ensemble(back, q)
    assert p.read_bytes() == q.read_bytes()


def test_simulate_domain_errors():
    with pytest.raises(DomainError):
        simulate(identity_profile(1.0), replicas=0)
    with pytest.raises(DomainError):
        simulate(identity_profile(1.0), checkpoints=[2.0])
