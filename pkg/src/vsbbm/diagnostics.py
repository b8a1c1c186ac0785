"""Empirical checks on simulated runs: localisation envelopes, comparison, universality, extremes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .bbm_engine import BranchingRun, RunEnsemble, simulate
from .centering import CenteringTerm, m_minus
from .errors import DomainError, PreconditionError
from .speed_profiles import CaseBEnvelope, SpeedProfile, validate_case_b, validation_grid

__all__ = [
    "EnvelopeSpec",
    "EmpiricalLaw",
    "RateEstimate",
    "SlepianReport",
    "KSReport",
    "ExtremalReport",
    "LimitLawReport",
    "envelope_violation_rate",
    "slepian_dominance",
    "slepian_triple",
    "universality_check",
    "ks_permutation_test",
    "extremal_process_stats",
    "limit_law_fit",
    "log_slope",
]

SQRT2 = math.sqrt(2.0)
ENVELOPE_KINDS = ("barrier_A", "lower_B", "gate_G", "tube_T")
_TOL = 1e-9


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeSpec:
    """Path set used to localise ancestral trajectories.

    Times ``r1, r2`` are measured from ``origin``; ``X(s)`` is the path
    increment ``x(origin + s) - x(origin)``.

    * ``barrier_A``: ``X(s) + S <= sqrt2 sigma s`` for checkpoint ``s`` in ``[r1, r2]``
    * ``lower_B``: ``X(s) + S > -sqrt2 sigma s`` on the same times
    * ``gate_G``: ``X(r1) - sqrt2 sigma_k r1 + S`` lies in ``[-B, -D] / (sigma_k - sigma_{k+1})``
      with the velocities of piece ``k`` (1-based) of the run's profile
    * ``tube_T``: ``|x(s) + S - sqrt2 t A(s/t)| < (A ^ (1 - A))^gamma t^gamma`` on ``[r1, r2]``

    With ``beta`` and ``delta`` set, a barrier is lowered by ``t^(beta delta)``
    (the entropic-repulsion margin).
    """

    kind: str
    r1: float = 0.0
    r2: float = 0.0
    shift: float = 0.0
    sigma: float = 1.0
    gamma: float | None = None
    B: float | None = None
    D: float | None = None
    k: int = 1
    origin: float = 0.0
    beta: float | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in ENVELOPE_KINDS:
            raise DomainError(f"unknown envelope kind {self.kind!r}; known: {ENVELOPE_KINDS}")
        if self.r1 > self.r2:
            raise DomainError("envelope needs r1 <= r2")
        if self.kind == "gate_G":
            if self.B is None or self.D is None or not self.B > self.D > 0.0:
                raise DomainError("gate_G needs B > D > 0")
            if self.k < 1:
                raise DomainError("gate_G piece index k is 1-based")
        if self.kind == "tube_T":
            if self.gamma is None or not self.gamma > 0.5:
                raise DomainError("tube_T needs gamma > 1/2")
            if self.origin != 0.0:
                raise DomainError("tube_T is defined on the full path (origin 0)")
        if (self.beta is None) != (self.delta is None):
            raise DomainError("beta and delta come together")

    @classmethod
    def accept_all(cls) -> "EnvelopeSpec":
        return cls("barrier_A", 0.0, math.inf, shift=-math.inf)

    @classmethod
    def reject_all(cls) -> "EnvelopeSpec":
        return cls("lower_B", 0.0, math.inf, shift=-math.inf)

    def _shift(self, t: float) -> float:
        s = self.shift
        if self.beta is not None:
            s += t ** (self.beta * self.delta)
        return s

    def accepts(self, paths: NDArray, times: Sequence[float], run: BranchingRun) -> NDArray[np.bool_]:
        """Rows of ``paths`` (positions at ``times``) that lie in the envelope."""
        times = np.asarray(times, dtype=float)
        paths = np.atleast_2d(np.asarray(paths, dtype=float))
        n = paths.shape[0]
        if n == 0:
            return np.zeros(0, dtype=bool)
        t = run.horizon_t
        S = self._shift(t)
        if self.origin > 0.0:
            oi = _time_index(times, self.origin)
            base = paths[:, oi][:, None]
        else:
            base = np.zeros((n, 1))
        rel = times - self.origin
        if self.kind == "gate_G":
            gi = _time_index(times, self.origin + self.r1)
            sig = run.profile.sigmas
            if not 1 <= self.k < sig.size:
                raise PreconditionError(f"gate_G needs piece k < ell; profile has {sig.size} pieces")
            gap = float(sig[self.k - 1] - sig[self.k])
            if not gap > 0.0:
                raise PreconditionError("gate_G needs sigma_k > sigma_{k+1}")
            v = paths[:, gi] - base[:, 0] - SQRT2 * float(sig[self.k - 1]) * self.r1 + S
            return (v >= -self.B / gap) & (v <= -self.D / gap)
        sel = (rel >= self.r1 - _TOL) & (rel <= self.r2 + _TOL) & (rel >= 0.0)
        if self.r2 < math.inf and not np.any(sel):
            raise PreconditionError(
                f"no checkpoint inside [{self.origin + self.r1}, {self.origin + self.r2}]"
            )
        x = paths[:, sel] - base
        s = rel[sel]
        if self.kind == "barrier_A":
            return np.all(x + S <= SQRT2 * self.sigma * s, axis=1)
        if self.kind == "lower_B":
            return np.all(x + S > -SQRT2 * self.sigma * s, axis=1)
        a = run.profile.evaluate(np.clip((self.origin + s) / t, 0.0, 1.0))
        env = np.minimum(a, 1.0 - a) ** self.gamma * t ** self.gamma
        return np.all(np.abs(x + S - SQRT2 * t * a) < env, axis=1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("kind", "r1", "r2", "shift", "sigma", "gamma", "B", "D",
                                              "k", "origin", "beta", "delta")}


def _time_index(times: NDArray, s: float) -> int:
    hit = np.nonzero(np.abs(times - s) <= _TOL * max(1.0, abs(s)))[0]
    if hit.size == 0:
        raise PreconditionError(f"runs have no checkpoint at time {s}")
    return int(hit[0])


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    se: float
    n: int
    violations: int

    def to_dict(self) -> dict:
        return {"rate": self.rate, "se": self.se, "n": self.n, "violations": self.violations}


def _as_runs(runs) -> Iterable[BranchingRun]:
    if isinstance(runs, BranchingRun):
        return [runs]
    return runs


def envelope_violation_rate(runs, envelope: EnvelopeSpec, conditioning: str = "top",
                            centering: float | CenteringTerm | None = None, y: float = 1.0) -> RateEstimate:
    """Fraction of conditioned particles whose ancestral path leaves ``envelope``.

    ``conditioning="top"`` takes the maximal particle of each run;
    ``"above"`` takes every particle above ``centering - y``.
    """
    if conditioning not in ("top", "above"):
        raise DomainError("conditioning must be 'top' or 'above'")
    if conditioning == "above" and centering is None:
        raise DomainError("'above' conditioning needs a centering value")
    level = None if centering is None else float(centering) - y
    n = 0
    bad = 0
    for run in _as_runs(runs):
        if run.final_positions.size == 0:
            continue
        if conditioning == "top":
            sel = np.array([int(np.argmax(run.final_positions))])
        else:
            if run.retained_from > level:
                raise PreconditionError("runs were truncated above the conditioning level")
            sel = np.nonzero(run.final_positions > level)[0]
            if sel.size == 0:
                continue
        paths = run.ancestral_paths(sel)
        times = list(run.checkpoint_times) + [run.horizon_t]
        ok = envelope.accepts(paths, times, run)
        n += sel.size
        bad += int(np.count_nonzero(~ok))
    if n == 0:
        return RateEstimate(math.nan, math.nan, 0, 0)
    p = bad / n
    return RateEstimate(p, math.sqrt(p * (1.0 - p) / n), n, bad)


# ---------------------------------------------------------------------------
# Slepian comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlepianReport:
    y_grid: tuple[float, ...]
    survival_low: tuple[float, ...]
    survival_high: tuple[float, ...]
    diff_se: tuple[float, ...]
    z_scores: tuple[float, ...]
    flagged: tuple[float, ...]
    replicas: int
    threshold: float = 3.0

    @property
    def passed(self) -> bool:
        return not self.flagged

    def to_dict(self) -> dict:
        return {"y_grid": list(self.y_grid), "survival_low": list(self.survival_low),
                "survival_high": list(self.survival_high), "diff_se": list(self.diff_se),
                "z_scores": list(self.z_scores), "flagged": list(self.flagged),
                "replicas": self.replicas, "threshold": self.threshold, "passed": self.passed}


def _check_order(low, high, what: str) -> None:
    grid = validation_grid(low, high)
    if np.any(low.evaluate(grid) > high.evaluate(grid) + 1e-12):
        raise PreconditionError(f"{what}: profiles are not ordered pointwise")


def _compare_max(m_low: NDArray, m_high: NDArray, y_grid: NDArray, threshold: float) -> SlepianReport:
    a = (m_low[:, None] > y_grid[None, :]).astype(float)
    b = (m_high[:, None] > y_grid[None, :]).astype(float)
    d = a - b
    n = d.shape[0]
    se = d.std(axis=0, ddof=1) / math.sqrt(n)
    mean = d.mean(axis=0)
    z = np.where(se > 0, mean / np.where(se > 0, se, 1.0), np.where(mean < 0, -np.inf, 0.0))
    flagged = tuple(float(y) for y, zz in zip(y_grid, z) if zz < -threshold)
    return SlepianReport(tuple(y_grid.tolist()), tuple(a.mean(0).tolist()), tuple(b.mean(0).tolist()),
                         tuple(se.tolist()), tuple(np.asarray(z, float).tolist()), flagged, n, threshold)


def _default_y_grid(*samples) -> NDArray:
    allm = np.concatenate(samples)
    lo, hi = np.quantile(allm, [0.02, 0.98])
    return np.linspace(lo, hi, 25)


def slepian_dominance(profile_low: SpeedProfile, profile_high: SpeedProfile, t: float, replicas: int,
                      seed: int = 0, y_grid=None, threshold: float = 3.0, threads: int | None = None,
                      pruning=None) -> SlepianReport:
    """One-sided check that the lower speed function has the larger maximum.

    Both profiles are simulated with the same seed, so paired replicas share
    their branching structure and the paired-difference SE is used.
    """
    _check_order(profile_low, profile_high, "slepian_dominance")
    lo = simulate(profile_low, t, seed=seed, replicas=replicas, threads=threads, pruning=pruning,
                  include_speed_changes=False, keep_window=1e-9).max_positions
    hi = simulate(profile_high, t, seed=seed, replicas=replicas, threads=threads, pruning=pruning,
                  include_speed_changes=False, keep_window=1e-9).max_positions
    grid = _default_y_grid(lo, hi) if y_grid is None else np.asarray(y_grid, dtype=float)
    return _compare_max(lo, hi, grid, threshold)


def slepian_triple(lower: SpeedProfile, middle: SpeedProfile, upper: SpeedProfile, t: float,
                   replicas: int, seed: int = 0, y_grid=None, threshold: float = 3.0,
                   threads: int | None = None) -> tuple[SlepianReport, SlepianReport]:
    """Bracketing check ``P(max_lower > y) >= P(max_middle > y) >= P(max_upper > y)``."""
    _check_order(lower, middle, "slepian_triple (lower, middle)")
    _check_order(middle, upper, "slepian_triple (middle, upper)")
    sims = [simulate(p, t, seed=seed, replicas=replicas, threads=threads, include_speed_changes=False,
                     keep_window=1e-9).max_positions for p in (lower, middle, upper)]
    grid = _default_y_grid(*sims) if y_grid is None else np.asarray(y_grid, dtype=float)
    return _compare_max(sims[0], sims[1], grid, threshold), _compare_max(sims[1], sims[2], grid, threshold)


# ---------------------------------------------------------------------------
# universality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KSReport:
    statistic: float
    p_value: float
    permutations: int
    n_a: int
    n_b: int
    centering: float
    validation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "permutations": self.permutations,
                "n_a": self.n_a, "n_b": self.n_b, "centering": self.centering, "validation": self.validation}


def _ks_from_labels(labels: NDArray[np.bool_], n_a: int, n_b: int, last_of_run: NDArray[np.bool_]) -> NDArray:
    ca = np.cumsum(labels, axis=-1) / n_a
    cb = np.cumsum(~labels, axis=-1) / n_b
    diff = np.abs(ca - cb)
    return diff[..., last_of_run].max(axis=-1)


def ks_permutation_test(a, b, permutations: int = 1000, seed: int = 0) -> tuple[float, float]:
    """Two-sample KS statistic and permutation p-value ``(1 + #{D* >= D}) / (1 + P)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise DomainError("KS test needs two non-empty samples")
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    sorted_vals = pooled[order]
    last = np.ones(sorted_vals.size, dtype=bool)
    last[:-1] = sorted_vals[1:] != sorted_vals[:-1]  # evaluate only after the last of each tie
    labels = np.zeros(pooled.size, dtype=bool)
    labels[: a.size] = True
    d_obs = float(_ks_from_labels(labels[order], a.size, b.size, last))
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    ge = 0
    block = 50
    done = 0
    while done < permutations:
        m = min(block, permutations - done)
        perm = np.stack([gen.permutation(labels) for _ in range(m)])
        d = _ks_from_labels(perm, a.size, b.size, last)
        ge += int(np.count_nonzero(d >= d_obs - 1e-12))
        done += m
    return d_obs, (1 + ge) / (1 + permutations)


def _recentred_max(env: CaseBEnvelope, t: float, replicas: int, seed: int, centering: float,
                   threads, n_knots: int) -> NDArray:
    prof = env.to_profile(n_knots)
    ens = simulate(prof, t, seed=seed, replicas=replicas, threads=threads, include_speed_changes=False,
                   keep_window=1e-9)
    return ens.max_positions - centering


def universality_check(env_a: CaseBEnvelope, env_b: CaseBEnvelope, t: float, replicas: int, seed: int = 0,
                       permutations: int = 1000, require_same_alpha: bool = True,
                       require_valid: bool = True, threads: int | None = None,
                       n_knots: int = 65, seed_b: int | None = None) -> KSReport:
    """KS comparison of recentred maxima for two Case-B speed functions.

    Both samples are recentred by ``m^-`` of ``env_a`` at ``t``.  Each
    envelope is validated at its own horizon; the simulation itself runs at
    ``t``.  Replicas of the two samples use independent seeds.
    """
    same = (abs(env_a.alpha_begin - env_b.alpha_begin) < 1e-12
            and abs(env_a.alpha_end - env_b.alpha_end) < 1e-12)
    if require_same_alpha and not same:
        raise PreconditionError("envelopes must share (alpha_begin, alpha_end)")
    reports = {}
    for name, env in (("a", env_a), ("b", env_b)):
        rep = validate_case_b(env)
        reports[name] = rep.to_dict()
        if require_valid and not rep.passed:
            raise PreconditionError(
                f"envelope {name} fails validation: {[c.name for c in rep.failures()]}"
            )
    centre = m_minus(env_a.alpha_begin, env_a.alpha_end, t).value
    sb = seed + 1 if seed_b is None else seed_b
    xa = _recentred_max(env_a, t, replicas, seed, centre, threads, n_knots)
    xb = _recentred_max(env_b, t, replicas, sb, centre, threads, n_knots)
    d, p = ks_permutation_test(xa, xb, permutations, seed=seed)
    return KSReport(d, p, permutations, xa.size, xb.size, centre, reports)


# ---------------------------------------------------------------------------
# extremal process
# ---------------------------------------------------------------------------


def log_slope(y, counts) -> float:
    """Least-squares slope of ``log counts`` against ``y``."""
    y = np.asarray(y, dtype=float)
    c = np.asarray(counts, dtype=float)
    if np.any(c <= 0.0):
        raise DomainError("log-slope needs positive counts at every y")
    return float(np.polyfit(y, np.log(c), 1)[0])


@dataclass(frozen=True)
class ExtremalReport:
    y_grid: tuple[float, ...]
    mean_counts: tuple[float, ...]
    count_se: tuple[float, ...]
    slope: float
    slope_se: float
    mean_clusters: tuple[float, ...]
    cluster_slope: float | None
    gap_histogram: tuple[tuple[float, ...], tuple[int, ...]]
    replicas: int
    cluster_depth: float | None
    counts: NDArray = field(repr=False, default=None)
    cluster_counts: NDArray | None = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {"y_grid": list(self.y_grid), "mean_counts": list(self.mean_counts),
                "count_se": list(self.count_se), "slope": self.slope, "slope_se": self.slope_se,
                "mean_clusters": list(self.mean_clusters), "cluster_slope": self.cluster_slope,
                "gap_histogram": {"edges": list(self.gap_histogram[0]), "counts": list(self.gap_histogram[1])},
                "replicas": self.replicas, "cluster_depth": self.cluster_depth}


def extremal_process_stats(runs, y_min: float, recenter: float | CenteringTerm, y_grid=None,
                           cluster_depth: float | None = None, gap_bins: int = 20,
                           bootstrap: int = 200, seed: int = 0) -> ExtremalReport:
    """Counts above ``y`` of the recentred configuration and their log-slope.

    Clusters group particles sharing an ancestor at time ``t - cluster_depth``
    (their most recent common ancestor is younger than ``cluster_depth``).
    """
    centre = float(recenter)
    ys = np.linspace(y_min, y_min + 3.0, 13) if y_grid is None else np.asarray(y_grid, dtype=float)
    if np.any(ys < y_min):
        raise DomainError("y_grid must lie inside the window [y_min, inf)")
    runs = list(_as_runs(runs))
    counts = np.zeros((len(runs), ys.size))
    clusters = np.zeros_like(counts)
    gaps = []
    for i, run in enumerate(runs):
        if run.retained_from > centre + y_min:
            raise PreconditionError(
                f"run {run.replica_id} keeps positions only above {run.retained_from:.4g}, "
                f"window starts at {centre + y_min:.4g}"
            )
        x = run.final_positions - centre
        inside = np.nonzero(x >= y_min)[0]
        xs = x[inside]
        counts[i] = (xs[None, :] > ys[:, None]).sum(axis=1)
        if xs.size:
            gaps.append(xs.max() - xs)
        if cluster_depth is not None and xs.size:
            s = run.horizon_t - cluster_depth
            anc = run.ancestor_records(s, inside)
            order = np.argsort(-xs, kind="stable")
            _, first = np.unique(anc[order], return_index=True)
            leaders = xs[order][first]
            clusters[i] = (leaders[None, :] > ys[:, None]).sum(axis=1)
    n = len(runs)
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(ys.size, math.inf)
    slope = log_slope(ys, mean) if np.all(mean > 0) else math.nan
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    boots = []
    for _ in range(bootstrap if n > 1 and math.isfinite(slope) else 0):
        m = counts[gen.integers(0, n, n)].mean(axis=0)
        if np.all(m > 0):
            boots.append(log_slope(ys, m))
    slope_se = float(np.std(boots, ddof=1)) if len(boots) > 1 else math.nan
    cmean = clusters.mean(axis=0)
    cslope = None
    if cluster_depth is not None and np.all(cmean > 0):
        cslope = log_slope(ys, cmean)
    allgaps = np.concatenate(gaps) if gaps else np.empty(0)
    hist, edges = np.histogram(allgaps, bins=gap_bins, range=(0.0, max(float(allgaps.max()) if allgaps.size else 1.0, 1e-9)))
    return ExtremalReport(tuple(ys.tolist()), tuple(mean.tolist()), tuple(np.asarray(se).tolist()), slope,
                          slope_se, tuple(cmean.tolist()), cslope,
                          (tuple(edges.tolist()), tuple(int(h) for h in hist)), n, cluster_depth,
                          counts, clusters if cluster_depth is not None else None)


# ---------------------------------------------------------------------------
# limit law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalLaw:
    samples: NDArray[np.float64]
    metadata: dict
    weights: NDArray[np.float64] | None = None

    REQUIRED = ("profile", "t", "replicas")

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", x)
        if x.size == 0 or not np.all(np.isfinite(x)):
            raise DomainError("empirical law needs finite samples")
        missing = [k for k in self.REQUIRED if k not in self.metadata]
        if missing:
            raise DomainError(f"metadata misses {missing}")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != x.shape or np.any(w < 0) or not w.sum() > 0:
                raise DomainError("weights must be nonnegative, not all zero, one per sample")
            object.__setattr__(self, "weights", w)

    @classmethod
    def from_runs(cls, ens: RunEnsemble, centering: float | CenteringTerm, profile_id: str) -> "EmpiricalLaw":
        return cls(ens.max_positions - float(centering),
                   {"profile": profile_id, "t": ens.horizon_t, "replicas": len(ens)})

    def cdf(self, y) -> NDArray[np.float64]:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        w = np.ones_like(self.samples) if self.weights is None else self.weights
        order = np.argsort(self.samples)
        xs = self.samples[order]
        cw = np.cumsum(w[order]) / w.sum()
        idx = np.searchsorted(xs, y, side="right")
        return np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)


@dataclass(frozen=True)
class LimitLawReport:
    sup_distance: float
    argmax_y: float
    agreement_range: tuple[float, float] | None
    C: float
    nonpositive_Z_fraction: float
    y_grid: tuple[float, ...]
    empirical: tuple[float, ...]
    fitted: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"sup_distance": self.sup_distance, "argmax_y": self.argmax_y,
                "agreement_range": None if self.agreement_range is None else list(self.agreement_range),
                "C": self.C, "nonpositive_Z_fraction": self.nonpositive_Z_fraction,
                "y_grid": list(self.y_grid), "empirical": list(self.empirical), "fitted": list(self.fitted)}


def mixture_cdf(y, Z_samples, C: float) -> NDArray[np.float64]:
    """``mean_z exp(-C z exp(-sqrt2 y))`` with nonpositive ``z`` treated as 0."""
    if not C > 0.0:
        raise PreconditionError("C must be positive")
    z = np.maximum(np.asarray(Z_samples, dtype=float), 0.0)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return np.exp(-C * z[None, :] * np.exp(-SQRT2 * y)[:, None]).mean(axis=1)


def limit_law_fit(law: EmpiricalLaw, Z_samples, C: float, y_grid=None, tolerance: float = 0.05) -> LimitLawReport:
    """Sup-distance between the empirical CDF and the randomly shifted Gumbel mixture."""
    if not C > 0.0:
        raise PreconditionError("C must be positive")
    z = np.asarray(Z_samples, dtype=float)
    ys = np.linspace(*np.quantile(law.samples, [0.005, 0.995]), 200) if y_grid is None \
        else np.asarray(y_grid, dtype=float)
    emp = law.cdf(ys)
    fit = mixture_cdf(ys, z, C)
    dist = np.abs(emp - fit)
    j = int(np.argmax(dist))
    good = ys[dist <= tolerance]
    rng = (float(good.min()), float(good.max())) if good.size else None
    return LimitLawReport(float(dist[j]), float(ys[j]), rng, float(C), float(np.mean(z <= 0.0)),
                          tuple(ys.tolist()), tuple(emp.tolist()), tuple(fit.tolist()))
