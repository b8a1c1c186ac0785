"""Explicit finite-difference solver for the F-KPP equation and tail-constant estimation.

Solves ``u_t = u_xx / 2 + F(u)`` with ``F(u) = (1 - u) - sum_k p_k (1 - u)^k``
on a uniform window that follows the front.  For the Heaviside datum
``u(0, x) = 1{x <= 0}`` the solution is ``P(max_j x_j(t) >= x)`` for
standard branching Brownian motion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit
from numpy.typing import NDArray
from scipy import integrate

from .bbm_engine import OffspringLaw
from .centering import m_standard
from .errors import DomainError, EstimationError, NumericalError
from .speed_profiles import Check

__all__ = [
    "FkppState",
    "TailConstants",
    "InitialCondition",
    "ICReport",
    "SolveResult",
    "heaviside",
    "initial_state",
    "step",
    "solve",
    "front_position",
    "compensated_tail",
    "estimate_tail_constant",
    "check_initial_conditions",
    "fit_log_coefficient",
    "bramson_increments",
    "compare_solutions",
    "count_monotonicity_violations",
    "STABILITY_SAFETY",
    "DEFAULT_DT_FACTOR",
]

SQRT2 = math.sqrt(2.0)
STABILITY_SAFETY = 0.9
DEFAULT_DT_FACTOR = 0.1
CLAMP_TOL = 1e-12
DEFAULT_BEHIND = 40.0
MIN_AHEAD = 40.0
MONOTONE_TOL = 1e-10


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _reaction(u, probs):
    # probs[k] = p_{k+1}; probs.size == 0 encodes the binary law u - u^2
    if probs.size == 0:
        return u - u * u
    v = 1.0 - u
    out = v
    vk = 1.0
    for k in range(probs.size):
        vk *= v
        out -= probs[k] * vk
    return out


@njit(cache=True, nogil=True)
def _euler(u, work, nsteps, dt, r, probs, reaction_on, left_flat):
    """Advance ``nsteps`` explicit steps in place; returns the worst overshoot."""
    n = u.size
    worst = 0.0
    for _ in range(nsteps):
        for i in range(1, n - 1):
            val = u[i] + r * (u[i + 1] - 2.0 * u[i] + u[i - 1])
            if reaction_on:
                val += dt * _reaction(u[i], probs)
            work[i] = val
        if left_flat:
            work[0] = u[0] + (dt * _reaction(u[0], probs) if reaction_on else 0.0)
        else:
            work[0] = u[0]
        work[n - 1] = u[n - 1]
        for i in range(n):
            val = work[i]
            if val < 0.0:
                if -val > worst:
                    worst = -val
                val = 0.0
            elif val > 1.0:
                if val - 1.0 > worst:
                    worst = val - 1.0
                val = 1.0
            u[i] = val
        if worst > 1e-12:
            return worst
    return worst


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FkppState:
    """Solution snapshot on the window ``x_min + dx * arange(n)``."""

    x_min: float
    dx: float
    u: NDArray[np.float64]
    time: float = 0.0
    offspring: OffspringLaw = field(default_factory=OffspringLaw.binary)
    reaction: bool = True
    front_history: tuple[tuple[float, float], ...] = ()

    @property
    def x_max(self) -> float:
        return self.x_min + self.dx * (self.u.size - 1)

    @property
    def grid(self) -> NDArray[np.float64]:
        return self.x_min + self.dx * np.arange(self.u.size)

    def _probs(self) -> NDArray[np.float64]:
        if self.offspring.is_binary():
            return np.empty(0)
        return np.asarray(self.offspring.probabilities, dtype=float)

    def value_at(self, x):
        """Log-linear interpolation of ``u`` (exact on the exponential leading edge)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.x_min) or np.any(x > self.x_max):
            raise DomainError("requested positions lie outside the solver window")
        with np.errstate(divide="ignore"):
            lu = np.log(self.u)
        return np.exp(np.interp(x, self.grid, lu))


@dataclass(frozen=True)
class InitialCondition:
    """Sampled initial datum with declared tail behaviour.

    ``right_tail`` is ``"compact"`` (zero beyond the grid) or
    ``"exponential"`` (decays like ``exp(-right_rate * x)`` beyond the grid).
    ``left_tail`` is ``"constant"``: the leftmost value continues to minus infinity.
    """

    x: NDArray[np.float64]
    values: NDArray[np.float64]
    right_tail: str = "compact"
    right_rate: float | None = None
    left_tail: str = "constant"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)
        if x.ndim != 1 or x.shape != v.shape or x.size < 3:
            raise DomainError("initial condition needs matching x and values with >= 3 points")
        d = np.diff(x)
        if np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
            raise DomainError("initial condition must be sampled on a uniform increasing grid")
        if self.right_tail not in ("compact", "exponential"):
            raise DomainError(f"unknown right_tail tag {self.right_tail!r}")
        if self.right_tail == "exponential" and not (self.right_rate and self.right_rate > 0):
            raise DomainError("exponential right tail needs a positive right_rate")
        if self.left_tail != "constant":
            raise DomainError(f"unknown left_tail tag {self.left_tail!r}")

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @classmethod
    def from_dict(cls, doc: dict) -> "InitialCondition":
        return cls(np.asarray(doc["x"], float), np.asarray(doc["u"], float),
                   doc.get("right_tail", "compact"), doc.get("right_rate"), doc.get("left_tail", "constant"))

    @classmethod
    def load(cls, path: str | Path) -> "InitialCondition":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def heaviside(dx: float, x_min: float = -DEFAULT_BEHIND, x_max: float = MIN_AHEAD,
              shift: float = 0.0) -> InitialCondition:
    """``1{x <= shift}`` on a grid; the node at the jump takes the midpoint value 1/2."""
    n = int(round((x_max - x_min) / dx)) + 1
    x = x_min + dx * np.arange(n)
    k = np.rint((x - shift) / dx)
    u = np.where(k < 0, 1.0, 0.0)
    u[k == 0] = 0.5
    return InitialCondition(x, u, "compact", None)


def initial_state(ic: InitialCondition, ahead: float = MIN_AHEAD, behind: float = DEFAULT_BEHIND,
                  offspring: OffspringLaw | None = None, reaction: bool = True) -> FkppState:
    """Embed the datum in a window extending at least ``behind``/``ahead`` beyond it."""
    dx = ic.dx
    n_left = int(math.ceil((ic.x[0] + behind) / dx - 1e-9)) if ic.x[0] > -behind else 0
    n_right = int(math.ceil((ahead - ic.x[-1]) / dx - 1e-9)) if ic.x[-1] < ahead else 0
    # constant tail on the left, zeros on the right
    u = np.concatenate([np.full(n_left, ic.values[0]), ic.values, np.zeros(n_right)])
    x_min = ic.x[0] - dx * n_left
    return FkppState(float(x_min), dx, u, 0.0, offspring or OffspringLaw.binary(), reaction, ())


def _check_dt(state: FkppState, dt: float) -> None:
    limit = STABILITY_SAFETY * state.dx * state.dx
    if not (dt > 0.0 and dt <= limit * (1 + 1e-12)):
        raise DomainError(
            f"dt={dt:.6g} violates the explicit stability bound dt <= {STABILITY_SAFETY} dx^2 = {limit:.6g}"
        )


def step(state: FkppState, dt: float) -> FkppState:
    """One explicit Euler step with central second differences."""
    _check_dt(state, dt)
    u = state.u.copy()
    worst = _euler(u, np.empty_like(u), 1, dt, 0.5 * dt / state.dx ** 2, state._probs(),
                   state.reaction, True)
    if worst > CLAMP_TOL:
        raise NumericalError(f"scheme left [0, 1] by {worst:.3g}")
    return replace(state, u=u, time=state.time + dt)


def front_position(state: FkppState, level: float = 0.5) -> float:
    """Rightmost crossing of ``level`` by linear interpolation."""
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    u = state.u
    above = np.nonzero(u >= level)[0]
    if above.size == 0 or above[-1] == u.size - 1:
        raise DomainError("front not inside the solver window; enlarge the domain")
    i = int(above[-1])
    u0, u1 = u[i], u[i + 1]
    frac = 0.0 if u0 == u1 else (u0 - level) / (u0 - u1)
    return state.x_min + state.dx * (i + frac)


def _shift_window(u: NDArray, x_min: float, dx: float, front: float, behind: float):
    k = int(math.floor((front - x_min - behind) / dx))
    if k <= 0:
        return u, x_min
    out = np.empty_like(u)
    out[: u.size - k] = u[k:]
    out[u.size - k:] = 0.0
    return out, x_min + k * dx


@dataclass(frozen=True)
class SolveResult:
    state: FkppState
    times: NDArray[np.float64]
    fronts: NDArray[np.float64]
    snapshots: dict[float, FkppState]
    dt: float
    monotonicity_violations: int = 0


def solve(ic: InitialCondition, t_final: float, dt_factor: float = DEFAULT_DT_FACTOR,
          record_every: float = 0.5, level: float = 0.5, behind: float = DEFAULT_BEHIND,
          ahead: float | None = None, snapshot_times: Sequence[float] = (),
          offspring: OffspringLaw | None = None, reaction: bool = True,
          track_front: bool = True, monotone: bool = True) -> SolveResult:
    """Evolve ``ic`` to ``t_final`` on a window that follows the front.

    ``dt`` is the largest value not exceeding ``dt_factor * dx^2`` that
    divides ``record_every``.  The window keeps ``behind`` units behind the
    front and at least ``ahead`` units in front (default ``40 + 4 sqrt(t_final)``).
    """
    if not t_final > 0.0:
        raise DomainError("t_final must be positive")
    if not 0.0 < dt_factor <= STABILITY_SAFETY:
        raise DomainError(f"dt_factor must lie in (0, {STABILITY_SAFETY}]")
    dx = ic.dx
    ahead = MIN_AHEAD + 4.0 * math.sqrt(t_final) if ahead is None else max(float(ahead), MIN_AHEAD)
    state = initial_state(ic, ahead=ahead, behind=behind, offspring=offspring, reaction=reaction)
    per = max(1, int(math.ceil(record_every / (dt_factor * dx * dx))))
    dt = record_every / per
    _check_dt(state, dt)
    r = 0.5 * dt / (dx * dx)
    probs = state._probs()
    u = state.u.copy()
    work = np.empty_like(u)
    x_min = state.x_min
    n_rec = int(math.floor(t_final / record_every + 1e-9))
    tail = t_final - n_rec * record_every
    times, fronts = [0.0], []
    snaps: dict[float, FkppState] = {}
    wanted = sorted(float(s) for s in snapshot_times)
    current = FkppState(x_min, dx, u, 0.0, state.offspring, reaction)
    fronts.append(front_position(current, level) if track_front else math.nan)
    if 0.0 in wanted:
        snaps[0.0] = replace(current, u=u.copy())

    def advance(nsteps, sub_dt, sub_r):
        worst = _euler(u, work, nsteps, sub_dt, sub_r, probs, reaction, True)
        if worst > CLAMP_TOL:
            raise NumericalError(f"scheme left [0, 1] by {worst:.3g}")

    mono_bad = 0
    for j in range(1, n_rec + 1):
        advance(per, dt, r)
        t_now = j * record_every
        if monotone:
            mono_bad += count_monotonicity_violations(u)
        cur = FkppState(x_min, dx, u, t_now, state.offspring, reaction)
        if track_front:
            f = front_position(cur, level)
            times.append(t_now)
            fronts.append(f)
            new_u, x_min = _shift_window(u, x_min, dx, f, behind)
            if new_u is not u:
                u[:] = new_u
        for s in wanted:
            if abs(s - t_now) < 1e-9:
                snaps[s] = FkppState(x_min, dx, u.copy(), t_now, state.offspring, reaction)
    t_now = n_rec * record_every
    if tail > 1e-12:
        m = max(1, int(math.ceil(tail / (dt_factor * dx * dx))))
        advance(m, tail / m, 0.5 * (tail / m) / (dx * dx))
        t_now = t_final
        if track_front:
            cur = FkppState(x_min, dx, u, t_now, state.offspring, reaction)
            times.append(t_now)
            fronts.append(front_position(cur, level))
    hist = tuple(zip(times, fronts)) if track_front else ()
    final = FkppState(x_min, dx, u.copy(), t_now, state.offspring, reaction, hist)
    return SolveResult(final, np.asarray(times), np.asarray(fronts) if track_front else np.empty(0),
                       snaps, dt, mono_bad)


def count_monotonicity_violations(u, tol: float = MONOTONE_TOL) -> int:
    """Node pairs where ``u`` increases by more than ``tol``."""
    return int(np.count_nonzero(np.diff(u) > tol))


def compare_solutions(ic_low: InitialCondition, ic_high: InitialCondition, t_final: float,
                      dt_factor: float = DEFAULT_DT_FACTOR, record_every: float = 0.5,
                      behind: float = DEFAULT_BEHIND, ahead: float | None = None,
                      tol: float = 1e-12) -> int:
    """Evolve two ordered data in lockstep and count nodes where the order breaks.

    Both windows shift together, following the front of the lower solution
    less ``behind``, so the grids stay aligned.
    """
    if ic_low.x.shape != ic_high.x.shape or np.any(np.abs(ic_low.x - ic_high.x) > 1e-12):
        raise DomainError("compared initial conditions must share their grid")
    if np.any(ic_low.values > ic_high.values + tol):
        raise DomainError("initial conditions are not ordered")
    dx = ic_low.dx
    ahead = MIN_AHEAD + 4.0 * math.sqrt(t_final) if ahead is None else max(float(ahead), MIN_AHEAD)
    lo = initial_state(ic_low, ahead=ahead, behind=behind)
    hi = initial_state(ic_high, ahead=ahead, behind=behind)
    per = max(1, int(math.ceil(record_every / (dt_factor * dx * dx))))
    dt = record_every / per
    _check_dt(lo, dt)
    r = 0.5 * dt / (dx * dx)
    a, b = lo.u.copy(), hi.u.copy()
    wa, wb = np.empty_like(a), np.empty_like(b)
    probs = lo._probs()
    x_min = lo.x_min
    bad = 0
    for _ in range(int(math.floor(t_final / record_every + 1e-9))):
        for u, w in ((a, wa), (b, wb)):
            if _euler(u, w, per, dt, r, probs, True, True) > CLAMP_TOL:
                raise NumericalError("scheme left [0, 1]")
        bad += int(np.count_nonzero(a > b + tol))
        f = front_position(FkppState(x_min, dx, a, 0.0), 0.5)
        k = int(math.floor((f - x_min - behind) / dx))
        if k > 0:
            for u in (a, b):
                u[: u.size - k] = u[k:].copy()
                u[u.size - k:] = 0.0
            x_min += k * dx
    return bad


# ---------------------------------------------------------------------------
# front analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogFit:
    coefficient: float
    intercept: float
    extra: float
    model: str
    residual_rms: float

    def to_dict(self) -> dict:
        return {"coefficient": self.coefficient, "intercept": self.intercept, "extra": self.extra,
                "model": self.model, "residual_rms": self.residual_rms}


def fit_log_coefficient(times, fronts, t_min: float = 50.0, t_max: float = 400.0,
                        model: str = "plain") -> LogFit:
    """Least-squares fit of ``sqrt2 t - front(t)`` against ``log t``.

    ``model="plain"`` fits ``c log t + d``; ``"sqrt_correction"`` adds the
    ``t^-1/2`` relaxation term of pulled fronts, ``c log t + d + f / sqrt t``.
    """
    t = np.asarray(times, dtype=float)
    f = np.asarray(fronts, dtype=float)
    sel = (t >= t_min) & (t <= t_max)
    if np.count_nonzero(sel) < 4:
        raise DomainError("need at least four front samples inside the fit window")
    t, f = t[sel], f[sel]
    y = SQRT2 * t - f
    cols = [np.log(t), np.ones_like(t)]
    if model == "sqrt_correction":
        cols.append(1.0 / np.sqrt(t))
    elif model != "plain":
        raise DomainError(f"unknown fit model {model!r}")
    a = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    res = y - a @ coef
    return LogFit(float(coef[0]), float(coef[1]), float(coef[2]) if coef.size > 2 else 0.0, model,
                  float(np.sqrt(np.mean(res * res))))


def bramson_increments(times, fronts, dyadic: Sequence[float]) -> list[dict]:
    """``front(t) - front(t/2) - [m(t) - m(t/2)]`` at each requested ``t``."""
    t = np.asarray(times, dtype=float)
    f = np.asarray(fronts, dtype=float)
    out = []
    for s in dyadic:
        a = float(np.interp(s, t, f))
        b = float(np.interp(s / 2, t, f))
        out.append({"t": float(s), "increment": a - b - (m_standard(s) - m_standard(s / 2))})
    return out


# ---------------------------------------------------------------------------
# tail constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailConstants:
    C_estimate: float
    ci_low: float
    ci_high: float
    C_prime_bound: float
    time: float
    z_grid: tuple[float, ...]
    compensated: tuple[float, ...]

    @property
    def relative_spread(self) -> float:
        return (self.ci_high - self.ci_low) / self.C_estimate

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> dict:
        return {"C_estimate": self.C_estimate, "ci": [self.ci_low, self.ci_high],
                "relative_spread": self.relative_spread, "C_prime_bound": self.C_prime_bound,
                "time": self.time, "z_grid": list(self.z_grid), "compensated": list(self.compensated)}


def compensated_tail(state: FkppState, z_grid) -> NDArray[np.float64]:
    """``exp(sqrt2 z) exp(z^2 / 2t) u(t, z + m(t)) / z`` at each ``z``."""
    t = state.time
    z = np.asarray(z_grid, dtype=float)
    if np.any(z <= 0.0):
        raise DomainError("z values must be positive")
    vals = state.value_at(z + m_standard(t))
    return np.exp(SQRT2 * z + z * z / (2.0 * t)) * vals / z


def estimate_tail_constant(state: FkppState, z_grid=None, max_spread: float = 0.5) -> TailConstants:
    """Plateau of the compensated tail; the interval is the min/max over ``z_grid``."""
    z = np.arange(3.0, 12.0 + 1e-9, 0.25) if z_grid is None else np.asarray(z_grid, dtype=float)
    q = compensated_tail(state, z)
    if not np.all(np.isfinite(q)) or np.any(q <= 0.0):
        raise EstimationError("compensated tail is not positive and finite",
                              {"z": z.tolist(), "compensated": q.tolist()})
    c = float(np.median(q))
    spread = float((q.max() - q.min()) / c)
    u = state.value_at(z + m_standard(state.time))
    c_prime = float(np.max(u * np.exp(SQRT2 * z) / z))
    if spread > max_spread:
        raise EstimationError(
            f"no plateau: relative spread {spread:.3f} exceeds {max_spread}",
            {"z": z.tolist(), "compensated": q.tolist(), "time": state.time, "spread": spread},
        )
    return TailConstants(c, float(q.min()), float(q.max()), c_prime, state.time,
                         tuple(z.tolist()), tuple(q.tolist()))


# ---------------------------------------------------------------------------
# initial-condition checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ICReport:
    checks: tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, key: str) -> Check:
        for c in self.checks:
            if c.name == key:
                return c
        raise KeyError(key)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def check_initial_conditions(ic: InitialCondition, window: float = 1.0) -> ICReport:
    """Conditions (i)-(iv) for the tail asymptotics.

    (i) and (iv) are evaluated numerically on the samples; (ii) and (iii)
    combine the samples with the declared tail tags.
    """
    x, u = ic.x, ic.values
    dx = ic.dx
    lo, hi = float(u.min()), float(u.max())
    c1 = Check("i_bounded", lo >= 0.0 and hi <= 1.0, hi if hi > 1.0 else lo, 0.0, "0 <= u(0, x) <= 1")

    # (ii): exponential decay rate at least sqrt 2 on the right
    if ic.right_tail == "compact":
        c2 = Check("ii_right_decay", bool(u[-1] == 0.0), math.inf if u[-1] == 0.0 else 0.0, SQRT2,
                   "compact right support")
    else:
        rate = float(ic.right_rate)
        c2 = Check("ii_right_decay", rate >= SQRT2, rate, SQRT2, "declared exponential rate >= sqrt 2")

    # (iii): a window of length N carries mass > c everywhere to the far left
    n = max(1, int(round(window / dx)))
    left = u[: max(n + 1, u.size // 4)]
    csum = np.concatenate([[0.0], np.cumsum(left) * dx])
    masses = csum[n:] - csum[:-n]
    c_min = float(masses.min()) if masses.size else 0.0
    c3 = Check("iii_left_mass", c_min > 0.0 and u[0] > 0.0, c_min, 0.0,
               f"min over left windows of length {window} of the integral of u, with constant left tail")

    # (iv): integral of u y e^{2y} over y > 0
    pos = x >= 0.0
    integrand = u[pos] * x[pos] * np.exp(2.0 * x[pos])
    integral = float(integrate.trapezoid(integrand, x[pos])) if np.count_nonzero(pos) > 1 else 0.0
    if ic.right_tail == "compact":
        finite = bool(u[-1] == 0.0) and math.isfinite(integral)
        detail = "numerical integral on the samples, compact right support"
    else:
        finite = float(ic.right_rate) > 2.0 and math.isfinite(integral)
        detail = "numerical integral on the samples, tail rate must exceed 2"
    c4 = Check("iv_weighted_integral", finite, integral if finite else math.inf, math.inf, detail)
    return ICReport((c1, c2, c3, c4))
