"""Brownian bridges: exact grid sampling and line-crossing probabilities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError

__all__ = [
    "BridgeSpec",
    "MCEstimate",
    "stay_below_line_prob",
    "stay_below_line_bound",
    "sample_bridge",
    "sample_bridges",
    "stay_below_line_mc",
    "fluctuation_envelope_prob",
    "fluctuation_envelope_curve",
]

_CHUNK = 8192


@dataclass(frozen=True)
class BridgeSpec:
    start: float = 0.0
    end: float = 0.0
    span: float = 1.0
    variance_scale: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.span) and self.span > 0.0):
            raise DomainError(f"span must be positive, got {self.span}")
        if not (math.isfinite(self.variance_scale) and self.variance_scale > 0.0):
            raise DomainError(f"variance_scale must be positive, got {self.variance_scale}")

    def mean(self, s):
        s = np.asarray(s, dtype=float)
        return self.start + (self.end - self.start) * s / self.span

    def covariance(self, s, u):
        s, u = np.asarray(s, dtype=float), np.asarray(u, dtype=float)
        return self.variance_scale * np.minimum(s, u) * (self.span - np.maximum(s, u)) / self.span


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    n: int

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "n": self.n}


def _binomial(hits: int, n: int) -> MCEstimate:
    p = hits / n
    return MCEstimate(p, math.sqrt(max(p * (1.0 - p), 0.0) / n), n)


def stay_below_line_prob(x: float, y: float, span: float) -> float:
    """P(bridge 0 -> 0 on [0, span] stays below the line from y at 0 to x at span)."""
    if not (x > 0.0 and y > 0.0):
        raise DomainError(f"x and y must be positive, got x={x}, y={y}")
    if not span > 0.0:
        raise DomainError(f"span must be positive, got {span}")
    return -math.expm1(-2.0 * x * y / span)


def stay_below_line_bound(x: float, y: float, span: float) -> float:
    stay_below_line_prob(x, y, span)
    return 2.0 * x * y / span


def _check_grid(spec: BridgeSpec, grid) -> NDArray[np.float64]:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise DomainError("grid must be a non-empty 1-d sequence of times")
    if np.any(np.diff(g) < 0.0):
        raise DomainError("grid must be sorted")
    if g[0] < 0.0 or g[-1] > spec.span:
        raise DomainError(f"grid must lie in [0, {spec.span}]")
    return g


def _walk(spec: BridgeSpec, grid: NDArray, gen: np.random.Generator, n: int):
    """Yield (time, values) along the grid by sequential conditional Gaussians."""
    span, var = spec.span, spec.variance_scale
    prev_t = 0.0
    cur = np.full(n, float(spec.start))
    for s in grid:
        if s == prev_t:
            yield s, cur
            continue
        if s >= span:
            cur = np.full(n, float(spec.end))
        else:
            frac = (s - prev_t) / (span - prev_t)
            mean = cur + frac * (spec.end - cur)
            sd = math.sqrt(var * (s - prev_t) * (span - s) / (span - prev_t))
            cur = mean + sd * gen.standard_normal(n)
        prev_t = s
        yield s, cur


def sample_bridges(spec: BridgeSpec, grid, n: int, seed=None) -> NDArray[np.float64]:
    """``n`` independent bridge paths at the grid times, shape ``(n, len(grid))``."""
    g = _check_grid(spec, grid)
    gen = np.random.default_rng(seed)
    out = np.empty((int(n), g.size))
    for j, (_, vals) in enumerate(_walk(spec, g, gen, int(n))):
        out[:, j] = vals
    return out


def sample_bridge(spec: BridgeSpec, grid, seed=None) -> NDArray[np.float64]:
    """One exact bridge sample at the grid times; endpoints are pinned."""
    return sample_bridges(spec, grid, 1, seed)[0]


def stay_below_line_mc(x: float, y: float, span: float, samples: int, seed=None,
                       grid_points: int = 1000, refine: bool = True) -> MCEstimate:
    """Monte Carlo counterpart of :func:`stay_below_line_prob`.

    With ``refine`` the event between consecutive grid times is resolved by
    the exact bridge crossing probability for a linear barrier; without it
    only grid times are monitored and the estimate is biased upward.
    """
    stay_below_line_prob(x, y, span)
    spec = BridgeSpec(0.0, 0.0, span, 1.0)
    grid = np.linspace(0.0, span, grid_points + 1)
    line = y + (x - y) * grid / span
    gen = np.random.default_rng(seed)
    hits = 0
    remaining = int(samples)
    while remaining > 0:
        n = min(_CHUNK, remaining)
        alive = np.ones(n, dtype=bool)
        log_survive = np.zeros(n)
        prev_gap = None
        prev_t = 0.0
        for j, (s, vals) in enumerate(_walk(spec, grid, gen, n)):
            gap = line[j] - vals
            alive &= gap > 0.0
            if refine and prev_gap is not None:
                with np.errstate(invalid="ignore", divide="ignore"):
                    log_survive += np.log1p(-np.exp(-2.0 * np.maximum(prev_gap, 0.0)
                                                    * np.maximum(gap, 0.0) / (s - prev_t)))
            prev_gap, prev_t = gap, s
        if refine:
            u = gen.random(n)
            alive &= np.log(u) < log_survive
        hits += int(np.count_nonzero(alive))
        remaining -= n
    return _binomial(hits, int(samples))


def fluctuation_envelope_prob(gamma: float, r: float, span: float, samples: int, seed=None,
                              grid_points: int = 1000) -> MCEstimate:
    """P(|bridge(s)| < (s ^ (span - s))^gamma for all grid s in [r, span - r]) for a 0 -> 0 bridge."""
    return fluctuation_envelope_curve(gamma, [r], span, samples, seed, grid_points)[0]


def fluctuation_envelope_curve(gamma: float, rs, span: float, samples: int, seed=None,
                               grid_points: int = 1000) -> list[MCEstimate]:
    """Envelope probabilities for several ``r`` from one common set of paths."""
    if not gamma > 0.5:
        raise DomainError(f"gamma must exceed 1/2, got {gamma}")
    if not span > 0.0:
        raise DomainError(f"span must be positive, got {span}")
    rs = np.asarray(rs, dtype=float)
    if np.any(rs <= 0.0) or np.any(rs >= span / 2):
        raise DomainError("need 0 < r < span / 2")
    grid = np.unique(np.concatenate([np.linspace(0.0, span, grid_points + 1), rs, span - rs]))
    env = np.minimum(grid, span - grid) ** gamma
    # violation time index -> smallest r whose window contains it
    spec = BridgeSpec(0.0, 0.0, span, 1.0)
    gen = np.random.default_rng(seed)
    hits = np.zeros(rs.size, dtype=np.int64)
    remaining = int(samples)
    dist = np.minimum(grid, span - grid)
    while remaining > 0:
        n = min(_CHUNK, remaining)
        # deepest (largest distance from the ends) violation per path
        worst = np.full(n, -np.inf)
        for j, (_, vals) in enumerate(_walk(spec, grid, gen, n)):
            bad = np.abs(vals) >= env[j]
            if dist[j] > 0.0:
                worst = np.where(bad, np.maximum(worst, dist[j]), worst)
        # a path survives window r when every violation sits closer than r to an end
        hits += np.count_nonzero(worst[None, :] < rs[:, None], axis=1)
        remaining -= n
    return [_binomial(int(h), int(samples)) for h in hits]
