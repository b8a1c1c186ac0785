"""Speed functions: piecewise-linear profiles, Case-B envelopes and validators.

A speed function ``A`` maps ``[0, 1]`` onto ``[0, 1]``, is nondecreasing and
satisfies ``A(0) = 0``, ``A(1) = 1``.  A particle system with horizon ``t``
has ancestral covariance ``t * A(d / t)`` where ``d`` is the time of the most
recent common ancestor.

Asymptotic relations ``f << g`` are checked at one finite horizon: the
achieved margin is ``log(g / f) / log(t)`` and a check passes when the margin
is at least ``eps``.  This is an engineering surrogate for a statement about
``t -> infinity`` and every report says so.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConstructionError, DomainError

__all__ = [
    "SpeedProfile",
    "CaseBEnvelope",
    "ProfilePair",
    "Check",
    "ValidationReport",
    "MIDDLE_FAMILIES",
    "identity_profile",
    "two_speed_profile",
    "profile_from_knots",
    "evaluate",
    "validate_case_a",
    "validate_case_b",
    "validate_piecewise_case_b",
    "sandwich",
    "concave_hull",
    "validation_grid",
    "profile_to_dict",
    "envelope_to_dict",
    "speed_function_from_dict",
    "load_speed_function",
    "save_speed_function",
]

NORMALIZATION_TOL = 1e-12
DEFAULT_GRID_POINTS = 1000
DEFAULT_EPS = 0.01

SURROGATE_NOTE = (
    "asymptotic '<<' relations checked at a single horizon with an epsilon "
    "margin; a pass is evidence, not a proof"
)


# ---------------------------------------------------------------------------
# piecewise-linear profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeedProfile:
    """Piecewise-linear speed function.

    ``velocities`` holds the squared velocities (the slopes of ``A``) and
    ``lengths`` the interval lengths as fractions of the horizon.
    """

    velocities: tuple[float, ...]
    lengths: tuple[float, ...]
    horizon_t: float = 1.0

    def __post_init__(self):
        v = tuple(float(x) for x in self.velocities)
        b = tuple(float(x) for x in self.lengths)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "lengths", b)
        object.__setattr__(self, "horizon_t", float(self.horizon_t))
        if len(v) == 0 or len(v) != len(b):
            raise DomainError(
                f"need matching non-empty velocities/lengths, got {len(v)} and {len(b)}"
            )
        if not all(math.isfinite(x) and x >= 0.0 for x in v):
            raise DomainError(f"velocities must be finite and nonnegative: {v}")
        if not all(math.isfinite(x) and 0.0 < x <= 1.0 for x in b):
            raise DomainError(f"interval lengths must lie in (0, 1]: {b}")
        if abs(math.fsum(b) - 1.0) > NORMALIZATION_TOL:
            raise DomainError(f"interval lengths sum to {math.fsum(b)!r}, not 1")
        total = math.fsum(s * l for s, l in zip(v, b))
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise DomainError(f"sum of velocity * length is {total!r}, not 1")
        if not (math.isfinite(self.horizon_t) and self.horizon_t > 0.0):
            raise DomainError(f"horizon_t must be positive, got {self.horizon_t}")

    @property
    def ell(self) -> int:
        return len(self.velocities)

    @property
    def sigmas(self) -> np.ndarray:
        return np.sqrt(np.asarray(self.velocities))

    @cached_property
    def breakpoints(self) -> np.ndarray:
        """``a_0 = 0 < a_1 < ... < a_ell = 1``."""
        a = np.concatenate([[0.0], np.cumsum(self.lengths)])
        a[-1] = 1.0
        return a

    @cached_property
    def knot_values(self) -> np.ndarray:
        vals = np.concatenate([[0.0], np.cumsum(np.multiply(self.velocities, self.lengths))])
        vals[-1] = 1.0
        return vals

    def evaluate(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(~np.isfinite(s_arr)) or np.any(s_arr < 0.0) or np.any(s_arr > 1.0):
            raise DomainError("speed functions are defined on [0, 1] only")
        out = np.interp(s_arr, self.breakpoints, self.knot_values)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def variance_knots(self, horizon_t: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Knots of the cumulative variance ``s -> t A(s / t)`` on ``[0, t]``."""
        t = self.horizon_t if horizon_t is None else float(horizon_t)
        return self.breakpoints * t, self.knot_values * t

    def with_horizon(self, horizon_t: float) -> "SpeedProfile":
        return SpeedProfile(self.velocities, self.lengths, horizon_t)

    def is_identity(self, tol: float = 1e-12) -> bool:
        return all(abs(v - 1.0) <= tol for v in self.velocities)


def evaluate(profile, s):
    """Evaluate a profile or an envelope at ``s`` in ``[0, 1]``."""
    return profile.evaluate(s)


def identity_profile(horizon_t: float = 1.0) -> SpeedProfile:
    return SpeedProfile((1.0,), (1.0,), horizon_t)


def two_speed_profile(t: float, alpha1: float, alpha2: float) -> SpeedProfile:
    """Case-A two-speed family with slopes ``1 + t^-alpha1`` then ``1 - t^-alpha2``.

    The first interval has length ``1 / (t^(alpha2 - alpha1) + 1)``, which
    makes the variance normalization exact.
    """
    if t <= 1.0:
        raise DomainError("two-speed family needs t > 1")
    b = 1.0 / (t ** (alpha2 - alpha1) + 1.0)
    return SpeedProfile((1.0 + t ** -alpha1, 1.0 - t ** -alpha2), (b, 1.0 - b), t)


def profile_from_knots(s_knots: Sequence[float], values: Sequence[float],
                       horizon_t: float = 1.0) -> SpeedProfile:
    """Piecewise-linear interpolant through ``(s_knots[i], values[i])``."""
    x = np.asarray(s_knots, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise DomainError("need at least two matching knots")
    if abs(x[0]) > 1e-15 or abs(x[-1] - 1.0) > 1e-15 or abs(y[0]) > 1e-15 or abs(y[-1] - 1.0) > 1e-12:
        raise DomainError("knots must run from (0, 0) to (1, 1)")
    if np.any(np.diff(x) <= 0.0):
        raise DomainError("knot positions must be strictly increasing")
    lengths = np.diff(x)
    velocities = np.diff(y) / lengths
    if np.any(velocities < 0.0):
        raise DomainError("knot values must be nondecreasing")
    # absorb rounding in the last piece so the normalization holds exactly
    lengths[-1] = 1.0 - math.fsum(lengths[:-1])
    velocities[-1] = (1.0 - math.fsum(velocities[:-1] * lengths[:-1])) / lengths[-1]
    return SpeedProfile(tuple(velocities), tuple(lengths), horizon_t)


@dataclass(frozen=True)
class ProfilePair:
    lower: SpeedProfile
    upper: SpeedProfile

    def __post_init__(self):
        grid = validation_grid(self.lower, self.upper)
        gap = self.upper.evaluate(grid) - self.lower.evaluate(grid)
        if np.min(gap) < -1e-10:
            s_bad = grid[int(np.argmin(gap))]
            raise ConstructionError(f"lower profile exceeds upper profile at s={s_bad:.6g}")


def validation_grid(*functions, n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform grid on [0, 1] plus every breakpoint of the given profiles."""
    pts = [np.linspace(0.0, 1.0, n)]
    for f in functions:
        if isinstance(f, SpeedProfile):
            pts.append(f.breakpoints)
        elif isinstance(f, CaseBEnvelope):
            pts.append(np.array([f.b_begin, 1.0 - f.b_end]))
    return np.unique(np.clip(np.concatenate(pts), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Case-B envelopes
# ---------------------------------------------------------------------------


def _base_gap(s, t, alpha_begin, alpha_end):
    # s(1-s) times a linear weight: slope 1 - t^-a_b at 0 and 1 + t^-a_e at 1
    return s * (1.0 - s) * (t ** -alpha_begin * (1.0 - s) + t ** -alpha_end * s)


def _family_quadratic_gap(s, t, alpha_begin, alpha_end):
    return s - _base_gap(s, t, alpha_begin, alpha_end)


def _family_sine_bump(s, t, alpha_begin, alpha_end, amplitude=0.01):
    # sin^2 leaves value and slope at both endpoints untouched
    return s - _base_gap(s, t, alpha_begin, alpha_end) - amplitude * np.sin(np.pi * s) ** 2


def _family_touching(s, t, alpha_begin, alpha_end, touch_at=0.5):
    c = touch_at
    rho = (s - c) ** 2 / (c * c * (1.0 - s) + (1.0 - c) ** 2 * s)
    return s - _base_gap(s, t, alpha_begin, alpha_end) * rho


def _family_piecewise_linear(s, t, alpha_begin, alpha_end, knots=((0.0, 0.0), (1.0, 1.0))):
    k = np.asarray(knots, dtype=float)
    return np.interp(s, k[:, 0], k[:, 1])


#: Builtin families for the Case-B speed function.  Each maps
#: ``(s, t, alpha_begin, alpha_end, **params)`` to ``A_t(s)``.
MIDDLE_FAMILIES: dict[str, Callable[..., np.ndarray]] = {
    "quadratic_gap": _family_quadratic_gap,
    "sine_bump": _family_sine_bump,
    "touching": _family_touching,
    "piecewise_linear": _family_piecewise_linear,
}

_FAMILY_PARAMS = {
    "quadratic_gap": set(),
    "sine_bump": {"amplitude"},
    "touching": {"touch_at"},
    "piecewise_linear": {"knots"},
}


def _freeze(value):
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


def _thaw(value):
    if isinstance(value, tuple):
        return [_thaw(v) for v in value]
    return value


_FD_STEP = 1e-4


@dataclass(frozen=True)
class CaseBEnvelope:
    """General speed function below the identity, given by a named family.

    The function itself is ``MIDDLE_FAMILIES[family]`` evaluated at the
    envelope's horizon.  On ``[0, b_begin]`` and ``[1 - b_end, 1]`` the
    function is its own twice differentiable bound, so the declared
    second-derivative bounds apply to it directly.
    """

    alpha_begin: float
    alpha_end: float
    b_begin: float
    b_end: float
    family: str = "quadratic_gap"
    params: tuple = ()
    bound_second_deriv_begin: float = 0.0
    bound_second_deriv_end: float = 0.0
    min_gap_exponent: float = 0.05
    horizon_t: float = 1e4

    def __post_init__(self):
        for name in ("alpha_begin", "alpha_end"):
            a = float(getattr(self, name))
            if not 0.0 < a < 0.5:
                raise DomainError(f"{name} must lie in (0, 1/2), got {a}")
            object.__setattr__(self, name, a)
        for name in ("b_begin", "b_end"):
            b = float(getattr(self, name))
            if not 0.0 < b < 1.0:
                raise DomainError(f"{name} must lie in (0, 1), got {b}")
            object.__setattr__(self, name, b)
        if self.b_begin + self.b_end >= 1.0:
            raise DomainError("b_begin + b_end must be < 1")
        for name in ("bound_second_deriv_begin", "bound_second_deriv_end"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0.0):
                raise DomainError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, v)
        if not self.min_gap_exponent > 0.0:
            raise DomainError("min_gap_exponent must be positive")
        if not self.horizon_t > 1.0:
            raise DomainError("Case-B envelopes need a horizon t > 1")
        if self.family not in MIDDLE_FAMILIES:
            raise DomainError(
                f"unknown family {self.family!r}; known: {sorted(MIDDLE_FAMILIES)}"
            )
        params = dict(self.params) if not isinstance(self.params, Mapping) else dict(self.params)
        unknown = set(params) - _FAMILY_PARAMS[self.family]
        if unknown:
            raise DomainError(f"family {self.family!r} does not take {sorted(unknown)}")
        object.__setattr__(self, "params", tuple(sorted((k, _freeze(v)) for k, v in params.items())))

    @classmethod
    def build(cls, alpha_begin, alpha_end, b_begin, b_end, family="quadratic_gap",
              params=None, horizon_t=1e4, min_gap_exponent=0.05,
              bound_second_deriv_begin=None, bound_second_deriv_end=None) -> "CaseBEnvelope":
        """Construct an envelope, measuring missing curvature bounds numerically."""
        env = cls(alpha_begin, alpha_end, b_begin, b_end, family, tuple((params or {}).items()),
                  0.0, 0.0, min_gap_exponent, horizon_t)
        kb, ke = env.measured_curvature()
        return cls(
            alpha_begin, alpha_end, b_begin, b_end, family, env.params,
            kb * (1 + 1e-6) + 1e-12 if bound_second_deriv_begin is None else bound_second_deriv_begin,
            ke * (1 + 1e-6) + 1e-12 if bound_second_deriv_end is None else bound_second_deriv_end,
            min_gap_exponent, horizon_t,
        )

    @property
    def param_dict(self) -> dict:
        return {k: _thaw(v) for k, v in self.params}

    def evaluate(self, s, t: float | None = None):
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < 0.0) or np.any(s_arr > 1.0):
            raise DomainError("speed functions are defined on [0, 1] only")
        t = self.horizon_t if t is None else float(t)
        out = MIDDLE_FAMILIES[self.family](s_arr, t, self.alpha_begin, self.alpha_end, **self.param_dict)
        out = np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def slope_at(self, s: float, t: float | None = None) -> float:
        h = _FD_STEP
        f = lambda x: self.evaluate(x, t)  # noqa: E731
        if s <= h:
            return (-3 * f(s) + 4 * f(s + h) - f(s + 2 * h)) / (2 * h)
        if s >= 1 - h:
            return (3 * f(s) - 4 * f(s - h) + f(s - 2 * h)) / (2 * h)
        return (f(s + h) - f(s - h)) / (2 * h)

    def second_derivative(self, s, t: float | None = None):
        h = _FD_STEP
        s = np.asarray(s, dtype=float)
        return (self.evaluate(s + h, t) - 2 * self.evaluate(s, t) + self.evaluate(s - h, t)) / (h * h)

    def measured_curvature(self, t: float | None = None, n: int = 400) -> tuple[float, float]:
        """sup |A''| over the begin and end segments (finite differences)."""
        h = _FD_STEP
        sb = np.linspace(2 * h, self.b_begin - 2 * h, n)
        se = np.linspace(1 - self.b_end + 2 * h, 1 - 2 * h, n)
        return (float(np.max(np.abs(self.second_derivative(sb, t)))),
                float(np.max(np.abs(self.second_derivative(se, t)))))

    def to_profile(self, n_knots: int = 65, t: float | None = None) -> SpeedProfile:
        """Piecewise-linear interpolant used to simulate this speed function."""
        s = np.unique(np.concatenate([np.linspace(0.0, 1.0, n_knots),
                                      [self.b_begin, 1.0 - self.b_end]]))
        vals = np.maximum.accumulate(np.clip(self.evaluate(s, t), 0.0, 1.0))
        vals[0], vals[-1] = 0.0, 1.0
        return profile_from_knots(s, vals, self.horizon_t if t is None else t)


# ---------------------------------------------------------------------------
# validation reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": _jsonable(self.value),
                "threshold": _jsonable(self.threshold), "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    kind: str
    horizon_t: float
    eps: float
    checks: tuple[Check, ...] = field(default_factory=tuple)
    note: str = SURROGATE_NOTE

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self) -> list[str]:
        return [c.name for c in self.checks]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "horizon_t": self.horizon_t, "eps": self.eps,
                "passed": self.passed, "note": self.note,
                "checks": [c.to_dict() for c in self.checks]}


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _margin(small: float, large: float, t: float) -> float:
    """Largest eps with ``t^eps * small <= large``; inf when ``small == 0``."""
    if small <= 0.0:
        return math.inf
    if large <= 0.0:
        return -math.inf
    return (math.log(large) - math.log(small)) / math.log(t)


def _margin_check(name, small, large, t, eps, detail) -> Check:
    m = _margin(small, large, t)
    return Check(name, m >= eps, m, eps, detail)


def validate_case_a(profile: SpeedProfile, beta: float, eps: float = DEFAULT_EPS,
                    grid_points: int = DEFAULT_GRID_POINTS) -> ValidationReport:
    """Check the piecewise-linear concave case above the identity."""
    if not 0.0 < beta < 0.5:
        raise DomainError(f"beta must lie in (0, 1/2), got {beta}")
    t = profile.horizon_t
    if t <= 1.0:
        raise DomainError("asymptotic checks need horizon_t > 1")
    checks = []
    grid = validation_grid(profile, n=grid_points)
    interior = grid[(grid > 0.0) & (grid < 1.0)]
    excess = profile.evaluate(interior) - interior
    min_excess = float(np.min(excess)) if interior.size else -math.inf
    checks.append(Check("above_identity", min_excess > 0.0, min_excess, 0.0,
                        "min over interior grid of A(s) - s"))
    sig = profile.sigmas
    b = profile.lengths
    for k in range(profile.ell - 1):
        gap = float(sig[k] - sig[k + 1])
        checks.append(Check(f"concave[{k + 1}]", gap > 0.0, gap, 0.0, "sigma_k - sigma_{k+1}"))
        inv_gap = 1.0 / gap if gap > 0.0 else math.inf
        root = math.sqrt(min(b[k] * t, b[k + 1] * t))
        if math.isinf(inv_gap):
            checks.append(Check(f"separation_upper[{k + 1}]", False, -math.inf, eps,
                                "velocities not strictly decreasing"))
            checks.append(Check(f"separation_lower[{k + 1}]", False, -math.inf, eps,
                                "velocities not strictly decreasing"))
            continue
        checks.append(_margin_check(f"separation_upper[{k + 1}]", inv_gap, root, t, eps,
                                    "sqrt(min(b_k t, b_{k+1} t)) >> 1/(sigma_k - sigma_{k+1})"))
        checks.append(_margin_check(f"separation_lower[{k + 1}]", t ** beta, inv_gap, t, eps,
                                    "1/(sigma_k - sigma_{k+1}) >> t^beta"))
    return ValidationReport("case_a", t, eps, tuple(checks))


def _length_checks(prefix, b, alpha, t, eps):
    return [
        _margin_check(f"{prefix}_length_small", b, 1.0, t, eps, f"1 >> {prefix} length"),
        _margin_check(f"{prefix}_length_large", t ** (alpha - 0.5), b, t, eps,
                      f"{prefix} length >> t^(alpha - 1/2)"),
    ]


def validate_piecewise_case_b(profile: SpeedProfile, alpha_1: float, alpha_l: float,
                              eps: float = DEFAULT_EPS,
                              grid_points: int = DEFAULT_GRID_POINTS) -> ValidationReport:
    """Check a piecewise-linear profile below the identity with end rates ``alpha_1``, ``alpha_l``."""
    for a in (alpha_1, alpha_l):
        if not 0.0 < a < 0.5:
            raise DomainError(f"alpha must lie in (0, 1/2), got {a}")
    t = profile.horizon_t
    if t <= 1.0:
        raise DomainError("asymptotic checks need horizon_t > 1")
    checks = []
    grid = validation_grid(profile, n=grid_points)
    interior = grid[(grid > 0.0) & (grid < 1.0)]
    deficit = interior - profile.evaluate(interior)
    checks.append(Check("below_identity", float(np.min(deficit)) > 0.0, float(np.min(deficit)), 0.0,
                        "min over interior grid of s - A(s)"))
    v = profile.velocities
    b = profile.lengths
    checks.append(_margin_check("first_velocity", abs(v[0] - (1 - t ** -alpha_1)), t ** -alpha_1, t, eps,
                                "sigma_1^2 = 1 - t^-alpha_1 + o(t^-alpha_1)"))
    checks.append(_margin_check("last_velocity", abs(v[-1] - (1 + t ** -alpha_l)), t ** -alpha_l, t, eps,
                                "sigma_l^2 = 1 + t^-alpha_l + o(t^-alpha_l)"))
    checks += _length_checks("first", b[0], alpha_1, t, eps)
    checks += _length_checks("last", b[-1], alpha_l, t, eps)
    mid = grid[(grid >= b[0]) & (grid <= 1.0 - b[-1])]
    gap = float(np.min(mid - profile.evaluate(mid))) if mid.size else -math.inf
    checks.append(_margin_check("middle_gap", t ** -0.5, gap, t, eps,
                                "min_{[b_1, 1-b_l]} (s - A(s)) >> t^-1/2")
                  if gap > 0 else Check("middle_gap", False, -math.inf, eps, "gap is not positive"))
    return ValidationReport("case_b_piecewise", t, eps, tuple(checks))


def validate_case_b(env: CaseBEnvelope, t: float | None = None, eps: float = DEFAULT_EPS,
                    grid_points: int = DEFAULT_GRID_POINTS) -> ValidationReport:
    """Check a general speed function below the identity."""
    t = env.horizon_t if t is None else float(t)
    if t <= 1.0:
        raise DomainError("asymptotic checks need t > 1")
    checks = []
    ab, ae = env.alpha_begin, env.alpha_end
    slope0 = env.slope_at(0.0, t)
    slope1 = env.slope_at(1.0, t)
    checks.append(Check("begin_slope", abs(slope0 - (1 - t ** -ab)) < 1e-6, slope0, 1 - t ** -ab,
                        "A'(0) = 1 - t^-alpha_begin"))
    checks.append(Check("end_slope", abs(slope1 - (1 + t ** -ae)) < 1e-6, slope1, 1 + t ** -ae,
                        "A'(1) = 1 + t^-alpha_end"))
    checks += _length_checks("begin", env.b_begin, ab, t, eps)
    checks += _length_checks("end", env.b_end, ae, t, eps)
    kb, ke = env.measured_curvature(t)
    for name, measured, bound, alpha, b in (
        ("begin", kb, env.bound_second_deriv_begin, ab, env.b_begin),
        ("end", ke, env.bound_second_deriv_end, ae, env.b_end),
    ):
        checks.append(Check(f"{name}_curvature_bound", measured <= bound + 1e-9, measured, bound,
                            f"sup |A''| on the {name} segment within the declared bound"))
        checks.append(_margin_check(f"{name}_curvature_rate", bound, t ** -alpha / b, t, eps,
                                    f"declared bound << t^-alpha_{name} / b_{name}"))
    grid = validation_grid(env, n=grid_points)
    vals = env.evaluate(grid, t)
    incr = float(np.min(np.diff(vals)))
    checks.append(Check("monotone", incr >= -1e-12, incr, 0.0, "A nondecreasing on the grid"))
    interior = grid[(grid > 0.0) & (grid < 1.0)]
    deficit = interior - env.evaluate(interior, t)
    checks.append(Check("below_identity", float(np.min(deficit)) > 0.0, float(np.min(deficit)), 0.0,
                        "min over interior grid of s - A(s)"))
    mid = grid[(grid >= env.b_begin) & (grid <= 1.0 - env.b_end)]
    gap = float(np.min(mid - env.evaluate(mid, t)))
    declared = t ** (-0.5 + env.min_gap_exponent)
    checks.append(Check("middle_gap_declared", gap >= declared, gap, declared,
                        "min gap >= t^(-1/2 + min_gap_exponent)"))
    checks.append(_margin_check("middle_gap", t ** -0.5, gap, t, eps,
                                "min_{[b_begin, 1-b_end]} (s - A(s)) >> t^-1/2")
                  if gap > 0 else Check("middle_gap", False, -math.inf, eps, "gap is not positive"))
    return ValidationReport("case_b", t, eps, tuple(checks))


# ---------------------------------------------------------------------------
# sandwich construction
# ---------------------------------------------------------------------------


def _chord_limit_right(x0, y0, x1, s, a):
    """Largest y1 such that the chord (x0, y0)-(x1, y1) stays below ``a`` at points ``s``."""
    inside = (s > x0) & (s <= x1)
    if not np.any(inside):
        return math.inf
    lam = (s[inside] - x0) / (x1 - x0)
    return float(np.min(y0 + (a[inside] - y0) / lam))


def _chord_limit_left(x0, x1, y1, s, a):
    """Largest y0 such that the chord (x0, y0)-(x1, y1) stays below ``a`` at points ``s``."""
    inside = (s >= x0) & (s < x1)
    if not np.any(inside):
        return math.inf
    lam = (x1 - s[inside]) / (x1 - x0)
    return float(np.min(y1 + (a[inside] - y1) / lam))


def sandwich(env: CaseBEnvelope, t: float | None = None,
             grid_points: int = DEFAULT_GRID_POINTS) -> ProfilePair:
    """Five-piece lower and upper profiles bracketing ``env``.

    Outer pieces use the Taylor bounds from the endpoint slopes and the
    declared curvature bounds on half of each end segment.  The upper middle
    is ``s - t^(-1/2 + eps)`` with ``eps`` half the begin-gap exponent, glued
    to the outer pieces by two chords.  The lower middle is the largest
    pair of interior knot values keeping every chord below ``env``.
    """
    t = env.horizon_t if t is None else float(t)
    bb, be = env.b_begin, env.b_end
    ab, ae = env.alpha_begin, env.alpha_end
    kb, ke = env.bound_second_deriv_begin, env.bound_second_deriv_end
    knots = np.array([0.0, bb / 2, bb, 1 - be, 1 - be / 2, 1.0])

    # upper profile
    up1 = 1 - t ** -ab + bb / 2 * kb
    up5 = 1 + t ** -ae - be / 2 * ke
    offset = t ** (-0.5 + env.min_gap_exponent / 2)
    y_up = np.array([0.0, up1 * bb / 2, bb - offset, 1 - be - offset, 1 - up5 * be / 2, 1.0])
    up2 = (y_up[2] - y_up[1]) / (bb / 2)
    up4 = (y_up[4] - y_up[3]) / (be / 2)
    if not up2 > 1.0:
        raise ConstructionError(
            f"upper gluing slope on (b_begin/2, b_begin) is {up2:.6g}, must lie in (1, inf): "
            "b_begin too small relative to t^(-1/2+eps)"
        )
    if not 0.0 < up4 < 1.0:
        raise ConstructionError(
            f"upper gluing slope on (1-b_end, 1-b_end/2) is {up4:.6g}, must lie in (0, 1): "
            "b_end too small relative to t^(-1/2+eps)"
        )
    if not up1 > 0.0:
        raise ConstructionError(f"upper first slope {up1:.6g} must be positive")

    # lower profile
    lo1 = 1 - t ** -ab - bb / 2 * kb
    lo5 = 1 + t ** -ae + be / 2 * ke
    if lo1 < 0.0:
        raise ConstructionError(f"lower first slope {lo1:.6g} is negative: curvature bound too large")
    grid = validation_grid(env, n=grid_points)
    grid = np.unique(np.concatenate([grid, knots]))
    a = env.evaluate(grid, t)
    y1 = lo1 * bb / 2
    y4 = 1 - lo5 * be / 2
    y2 = min(_chord_limit_right(knots[1], y1, knots[2], grid, a), env.evaluate(knots[2], t))
    y2 = max(y2, y1)
    y3 = min(
        _chord_limit_left(knots[3], knots[4], y4, grid, a),
        _chord_limit_right(knots[2], y2, knots[3], grid, a),
        env.evaluate(knots[3], t),
        y4,
    )
    if y3 < y2:
        raise ConstructionError("lower middle knots are not monotone; env too steep in the middle")
    y_lo = np.array([0.0, y1, y2, y3, y4, 1.0])
    if np.any(np.diff(y_lo) < 0):
        raise ConstructionError("lower profile would decrease")

    lower = profile_from_knots(knots, y_lo, t)
    upper = profile_from_knots(knots, y_up, t)
    lo_vals, up_vals = lower.evaluate(grid), upper.evaluate(grid)
    if np.max(lo_vals - a) > 1e-10:
        raise ConstructionError("lower profile exceeds env on the grid; curvature bound too small")
    if np.max(a - up_vals) > 1e-10:
        raise ConstructionError("upper profile falls below env on the grid; curvature or gap bound invalid")
    return ProfilePair(lower, upper)


# ---------------------------------------------------------------------------
# concave hull
# ---------------------------------------------------------------------------


def concave_hull(profile: SpeedProfile) -> SpeedProfile:
    """Least concave majorant; collinear knots are kept so concave input is returned unchanged."""
    xs, ys = profile.breakpoints, profile.knot_values
    hull: list[int] = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            o, m = hull[-2], hull[-1]
            cross = (xs[m] - xs[o]) * (ys[i] - ys[o]) - (ys[m] - ys[o]) * (xs[i] - xs[o])
            if cross > 1e-15:  # middle point strictly below the chord
                hull.pop()
            else:
                break
        hull.append(i)
    if len(hull) == len(xs):
        return profile
    return profile_from_knots(xs[hull], ys[hull], profile.horizon_t)


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def profile_to_dict(profile: SpeedProfile) -> dict:
    return {"kind": "speed_profile", "ell": profile.ell, "velocities": list(profile.velocities),
            "lengths": list(profile.lengths), "horizon_t": profile.horizon_t}


def envelope_to_dict(env: CaseBEnvelope) -> dict:
    return {
        "kind": "case_b_envelope",
        "alpha_begin": env.alpha_begin,
        "alpha_end": env.alpha_end,
        "b_begin": env.b_begin,
        "b_end": env.b_end,
        "middle_fn": {"family": env.family, "params": env.param_dict},
        "bound_second_deriv_begin": env.bound_second_deriv_begin,
        "bound_second_deriv_end": env.bound_second_deriv_end,
        "min_gap_exponent": env.min_gap_exponent,
        "horizon_t": env.horizon_t,
    }


def speed_function_from_dict(doc: Mapping) -> SpeedProfile | CaseBEnvelope:
    kind = doc.get("kind", "speed_profile")
    if kind == "speed_profile":
        prof = SpeedProfile(tuple(doc["velocities"]), tuple(doc["lengths"]), doc.get("horizon_t", 1.0))
        if "ell" in doc and int(doc["ell"]) != prof.ell:
            raise DomainError(f"ell={doc['ell']} does not match {prof.ell} pieces")
        return prof
    if kind == "case_b_envelope":
        mf = doc.get("middle_fn", {})
        kwargs = dict(
            alpha_begin=doc["alpha_begin"], alpha_end=doc["alpha_end"],
            b_begin=doc["b_begin"], b_end=doc["b_end"],
            family=mf.get("family", "quadratic_gap"), params=mf.get("params", {}),
            horizon_t=doc.get("horizon_t", 1e4), min_gap_exponent=doc.get("min_gap_exponent", 0.05),
            bound_second_deriv_begin=doc.get("bound_second_deriv_begin"),
            bound_second_deriv_end=doc.get("bound_second_deriv_end"),
        )
        return CaseBEnvelope.build(**kwargs)
    raise DomainError(f"unknown speed-function kind {kind!r}")


def load_speed_function(path: str | Path) -> SpeedProfile | CaseBEnvelope:
    with open(path, "r", encoding="utf-8") as fh:
        return speed_function_from_dict(json.load(fh))


def save_speed_function(obj: SpeedProfile | CaseBEnvelope, path: str | Path) -> None:
    doc = profile_to_dict(obj) if isinstance(obj, SpeedProfile) else envelope_to_dict(obj)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
