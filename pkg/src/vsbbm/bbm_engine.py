"""Exact simulation of variable-speed branching Brownian motion.

Particles branch at rate one.  Between branch events a particle's position
moves by a centred Gaussian whose variance is the increment of the
cumulative variance ``V(s) = t A(s / t)``, so there is no time
discretisation anywhere.  Replicas are grouped in fixed-size chunks, each
chunk driven by its own PCG64 stream derived from the run seed; results do
not depend on the number of worker threads.
"""

from __future__ import annotations

import io
import json
import math
import os
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import integrate

from . import _kernels
from .errors import DomainError, PreconditionError, ResourceError
from .speed_profiles import SpeedProfile, profile_to_dict, speed_function_from_dict

__all__ = [
    "OffspringLaw",
    "PruningPolicy",
    "BranchingRun",
    "RunEnsemble",
    "MartingaleEstimate",
    "MartingaleSeries",
    "ManyToOneReport",
    "TEST_FUNCTIONS",
    "REPLICAS_PER_CHUNK",
    "simulate",
    "many_to_one_check",
    "martingale_series",
    "localized_derivative_sum",
    "mean_with_se",
    "save_ensemble",
    "load_ensemble",
]

SQRT2 = math.sqrt(2.0)
REPLICAS_PER_CHUNK = 64
DEFAULT_POPULATION_CAP = 10_000_000
_TIME_TOL = 1e-12


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring distribution ``p_k`` for ``k = 1, 2, ...`` (``probabilities[0]`` is ``p_1``)."""

    probabilities: tuple[float, ...] = (0.0, 1.0)

    def __post_init__(self):
        p = tuple(float(x) for x in self.probabilities)
        object.__setattr__(self, "probabilities", p)
        if not p or any(not math.isfinite(x) or x < 0.0 for x in p):
            raise DomainError("offspring probabilities must be finite and nonnegative")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise DomainError(f"offspring probabilities sum to {math.fsum(p)!r}, not 1")
        mean = math.fsum((k + 1) * x for k, x in enumerate(p))
        if abs(mean - 2.0) > 1e-12:
            raise DomainError(f"offspring mean is {mean!r}, must be 2")

    @classmethod
    def binary(cls) -> "OffspringLaw":
        return cls((0.0, 1.0))

    @property
    def support(self) -> NDArray[np.int64]:
        return np.array([k + 1 for k, x in enumerate(self.probabilities) if x > 0.0], dtype=np.int64)

    @property
    def second_factorial_moment(self) -> float:
        return math.fsum((k + 1) * k * x for k, x in enumerate(self.probabilities))

    def cumulative(self) -> NDArray[np.float64]:
        w = np.array([x for x in self.probabilities if x > 0.0])
        c = np.cumsum(w)
        c[-1] = 1.0
        return c

    def nonlinearity(self, u):
        """``F(u) = (1 - u) - sum_k p_k (1 - u)^k``."""
        u = np.asarray(u, dtype=float)
        v = 1.0 - u
        out = v.copy()
        for k, x in enumerate(self.probabilities):
            if x > 0.0:
                out = out - x * v ** (k + 1)
        return out

    def is_binary(self) -> bool:
        return self.probabilities == (0.0, 1.0)


@dataclass(frozen=True)
class PruningPolicy:
    """Cull particles more than ``depth`` below the current maximum every ``every`` time units."""

    depth: float = 30.0
    every: float = 0.5

    def __post_init__(self):
        if not self.depth > 0.0:
            raise DomainError("prune depth must be positive")
        if not self.every > 0.0:
            raise DomainError("prune interval must be positive")


@dataclass(frozen=True)
class MartingaleEstimate:
    time: float
    derivative_value: float
    mckean_value: float


# ---------------------------------------------------------------------------
# run containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchingRun:
    """One replica: final positions plus the path-compressed ancestral records.

    ``record_parent[j]`` points at the record of the same lineage at the
    previous checkpoint (or ``-1``); ``final_ancestor[i]`` points at the
    final particle's record at the last checkpoint.
    """

    replica_id: int
    horizon_t: float
    profile: SpeedProfile
    checkpoint_times: tuple[float, ...]
    final_positions: NDArray[np.float64]
    final_ancestor: NDArray[np.int64]
    record_position: NDArray[np.float64]
    record_parent: NDArray[np.int64]
    record_checkpoint: NDArray[np.int64]
    stats: NDArray[np.float64]  # (4, n_checkpoints + 1): count, max, Z, W
    boundary_times: tuple[float, ...]
    n_alive: NDArray[np.int64]
    pruned: int
    prune_depth: float | None
    seed: int
    retained_from: float = -math.inf

    @property
    def n_final(self) -> int:
        return int(self.stats[0, -1])

    @property
    def max_position(self) -> float:
        return float(self.stats[1, -1])

    @property
    def Z(self) -> float:
        return float(self.stats[2, -1])

    @property
    def W(self) -> float:
        return float(self.stats[3, -1])

    def checkpoint_index(self, s: float) -> int:
        for i, c in enumerate(self.checkpoint_times):
            if abs(c - s) <= _TIME_TOL * max(1.0, abs(s)):
                return i
        raise PreconditionError(f"no checkpoint at time {s}; available: {list(self.checkpoint_times)}")

    def has_checkpoint(self, s: float) -> bool:
        try:
            self.checkpoint_index(s)
        except PreconditionError:
            return False
        return True

    def martingales(self, s: float) -> MartingaleEstimate:
        if abs(s - self.horizon_t) <= _TIME_TOL * max(1.0, s):
            col = -1
        else:
            col = self.checkpoint_index(s)
        return MartingaleEstimate(float(s), float(self.stats[2, col]), float(self.stats[3, col]))

    def ancestor_records(self, s: float, finals: NDArray | None = None) -> NDArray[np.int64]:
        """Record index at checkpoint ``s`` of every (or the selected) final particle."""
        target = self.checkpoint_index(s)
        idx = self.final_ancestor if finals is None else self.final_ancestor[np.asarray(finals)]
        idx = idx.copy()
        for _ in range(len(self.checkpoint_times)):
            cps = self.record_checkpoint[idx]
            step = cps > target
            if not np.any(step):
                break
            idx[step] = self.record_parent[idx[step]]
        return idx

    def ancestral_positions(self, s: float, finals: NDArray | None = None) -> NDArray[np.float64]:
        return self.record_position[self.ancestor_records(s, finals)]

    def ancestral_paths(self, finals: NDArray | None = None) -> NDArray[np.float64]:
        """Matrix of ancestral positions, one row per final, one column per checkpoint, then the final."""
        sel = np.arange(self.final_positions.size) if finals is None else np.asarray(finals)
        n_cp = len(self.checkpoint_times)
        out = np.empty((sel.size, n_cp + 1))
        out[:, n_cp] = self.final_positions[sel]
        idx = self.final_ancestor[sel].copy()
        for c in range(n_cp - 1, -1, -1):
            out[:, c] = self.record_position[idx]
            idx = self.record_parent[idx]
        return out

    @property
    def checkpoints(self) -> dict[float, NDArray[np.float64]]:
        return {s: self.ancestral_positions(s) for s in self.checkpoint_times}


@dataclass(frozen=True)
class RunEnsemble:
    """Many replicas stored as concatenated arrays with offsets."""

    horizon_t: float
    profile: SpeedProfile
    checkpoint_times: tuple[float, ...]
    boundary_times: tuple[float, ...]
    seed: int
    prune: PruningPolicy | None
    keep_window: float | None
    final_positions: NDArray[np.float64]
    final_ancestor: NDArray[np.int64]
    final_offsets: NDArray[np.int64]
    record_position: NDArray[np.float64]
    record_parent: NDArray[np.int64]
    record_checkpoint: NDArray[np.int64]
    record_offsets: NDArray[np.int64]
    stats: NDArray[np.float64]  # (replicas, 4, n_checkpoints + 1)
    n_alive: NDArray[np.int64]  # (replicas, n_boundaries)
    pruned: NDArray[np.int64]
    offspring: OffspringLaw = field(default_factory=OffspringLaw.binary)

    def __len__(self) -> int:
        return self.stats.shape[0]

    def __getitem__(self, i: int) -> BranchingRun:
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        f0, f1 = self.final_offsets[i], self.final_offsets[i + 1]
        r0, r1 = self.record_offsets[i], self.record_offsets[i + 1]
        st = self.stats[i]
        retained = -math.inf if not self.keep_window else float(st[1, -1]) - self.keep_window
        return BranchingRun(
            i, self.horizon_t, self.profile, self.checkpoint_times,
            self.final_positions[f0:f1], self.final_ancestor[f0:f1],
            self.record_position[r0:r1], self.record_parent[r0:r1], self.record_checkpoint[r0:r1],
            st, self.boundary_times, self.n_alive[i], int(self.pruned[i]),
            None if self.prune is None else self.prune.depth, self.seed, retained,
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def max_positions(self) -> NDArray[np.float64]:
        return self.stats[:, 1, -1]

    @property
    def n_final(self) -> NDArray[np.int64]:
        return self.stats[:, 0, -1].astype(np.int64)

    @property
    def Z(self) -> NDArray[np.float64]:
        return self.stats[:, 2, -1]

    @property
    def W(self) -> NDArray[np.float64]:
        return self.stats[:, 3, -1]

    def checkpoint_stats(self, s: float) -> NDArray[np.float64]:
        """``(replicas, 4)`` array of count, max, Z, W at checkpoint ``s`` or the horizon."""
        if abs(s - self.horizon_t) <= _TIME_TOL * max(1.0, s):
            return self.stats[:, :, -1]
        for i, c in enumerate(self.checkpoint_times):
            if abs(c - s) <= _TIME_TOL * max(1.0, abs(s)):
                return self.stats[:, :, i]
        raise PreconditionError(f"no checkpoint at time {s}")

    def table(self) -> tuple[list[str], NDArray[np.float64]]:
        """Per-replica summary rows: id, max, count, Z, W, then max/count/Z/W per checkpoint."""
        cols = ["replica_id", "max_position", "n_final", "Z", "W"]
        blocks = [np.arange(len(self), dtype=float)[:, None], self.stats[:, [1, 0, 2, 3], -1]]
        for i, c in enumerate(self.checkpoint_times):
            tag = f"{c:.12g}"
            cols += [f"max@{tag}", f"n@{tag}", f"Z@{tag}", f"W@{tag}"]
            blocks.append(self.stats[:, [1, 0, 2, 3], i])
        return cols, np.hstack(blocks)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def _chunk_generator(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _boundaries(t: float, checkpoints: Sequence[float], prune: PruningPolicy | None):
    pts = {float(c): 1 for c in checkpoints}
    if prune is not None:
        k = 1
        while k * prune.every < t - _TIME_TOL:
            pts[k * prune.every] = pts.get(k * prune.every, 0) | 2
            k += 1
    times = sorted(pts)
    bounds = np.array(times + [t])
    is_cp = np.array([bool(pts[s] & 1) for s in times] + [False])
    is_prune = np.array([bool(pts[s] & 2) for s in times] + [False])
    return bounds, is_cp, is_prune


def _resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
    return int(threads)


def simulate(profile: SpeedProfile, horizon_t: float | None = None, checkpoints: Sequence[float] = (),
             pruning: PruningPolicy | None = None, seed: int = 0, replicas: int = 1,
             offspring: OffspringLaw | None = None, population_cap: int = DEFAULT_POPULATION_CAP,
             keep_window: float | None = None, threads: int | None = None,
             include_speed_changes: bool = True) -> RunEnsemble:
    """Simulate ``replicas`` independent copies up to ``horizon_t``.

    Checkpoints default to the speed-change times ``a_k t``; extra times are
    merged in.  ``keep_window`` keeps only final particles within that
    distance of each replica's maximum (and the records they need).
    """
    t = float(profile.horizon_t if horizon_t is None else horizon_t)
    if not (math.isfinite(t) and t > 0.0):
        raise DomainError(f"horizon_t must be positive, got {t}")
    replicas = int(replicas)
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    if keep_window is not None and not keep_window > 0.0:
        raise DomainError("keep_window must be positive")
    offspring = offspring or OffspringLaw.binary()
    cps = set()
    if include_speed_changes:
        cps.update(float(a * t) for a in profile.breakpoints[1:-1])
    for c in checkpoints:
        c = float(c)
        if not 0.0 < c < t:
            raise DomainError(f"checkpoint {c} must lie strictly inside (0, {t})")
        cps.add(c)
    cp_times = sorted(cps)
    bounds, is_cp, is_prune = _boundaries(t, cp_times, pruning)
    kt, kv = profile.variance_knots(t)
    cum = offspring.cumulative()
    kvals = offspring.support
    depth = pruning.depth if pruning is not None else math.inf
    window = float(keep_window) if keep_window else 0.0

    n_chunks = -(-replicas // REPLICAS_PER_CHUNK)

    def work(c: int):
        n = min(REPLICAS_PER_CHUNK, replicas - c * REPLICAS_PER_CHUNK)
        out = _kernels.run_chunk(_chunk_generator(seed, c), n, kt, kv, bounds, is_cp, is_prune,
                                 depth, int(population_cap), cum, kvals, window)
        if out[0] == _kernels.STATUS_CAP:
            raise ResourceError(
                f"population cap of {population_cap} particles exceeded in chunk {c}; "
                "enable pruning or raise population_cap"
            )
        return out

    nthreads = min(_resolve_threads(threads), n_chunks)
    if nthreads == 1:
        parts = [work(c) for c in range(n_chunks)]
    else:
        with ThreadPoolExecutor(nthreads) as pool:
            parts = list(pool.map(work, range(n_chunks)))
    return _assemble(parts, t, profile, tuple(cp_times), tuple(bounds.tolist()), seed, pruning,
                     keep_window, offspring)


def _assemble(parts, t, profile, cp_times, bounds, seed, pruning, keep_window, offspring) -> RunEnsemble:
    def offsets(idx):
        acc, out = 0, [np.zeros(1, dtype=np.int64)]
        for p in parts:
            out.append(p[idx][1:] + acc)
            acc += int(p[idx][-1])
        return np.concatenate(out)

    return RunEnsemble(
        horizon_t=t, profile=profile, checkpoint_times=cp_times, boundary_times=bounds, seed=seed,
        prune=pruning, keep_window=keep_window,
        final_positions=np.concatenate([p[1] for p in parts]),
        final_ancestor=np.concatenate([p[2] for p in parts]),
        final_offsets=offsets(3),
        record_position=np.concatenate([p[4] for p in parts]),
        record_parent=np.concatenate([p[5] for p in parts]),
        record_checkpoint=np.concatenate([p[6] for p in parts]),
        record_offsets=offsets(7),
        stats=np.concatenate([p[8] for p in parts]),
        n_alive=np.concatenate([p[9] for p in parts]),
        pruned=np.concatenate([p[10] for p in parts]),
        offspring=offspring,
    )


# ---------------------------------------------------------------------------
# many-to-one and martingales
# ---------------------------------------------------------------------------


def mean_with_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf


def _f_exp_tilt(x, t, level):
    return np.exp(SQRT2 * x - 2.0 * t)


def _f_derivative(x, t, level):
    return (SQRT2 * t - x) * np.exp(SQRT2 * x - 2.0 * t)


def _f_indicator(x, t, level):
    return (np.asarray(x) > level).astype(float)


def _f_linear(x, t, level):
    return np.asarray(x, dtype=float)


def _f_count(x, t, level):
    return np.ones_like(np.asarray(x, dtype=float))


#: Functionals accepted by :func:`many_to_one_check`; each is ``f(x, t, level)``.
TEST_FUNCTIONS: dict[str, Callable] = {
    "exp_tilt_sqrt2": _f_exp_tilt,
    "derivative_summand": _f_derivative,
    "indicator_above_level": _f_indicator,
    "linear": _f_linear,
    "count": _f_count,
}


@dataclass(frozen=True)
class ManyToOneReport:
    functional: str
    horizon_t: float
    replicas: int
    estimate: float
    se: float
    expected: float

    @property
    def z_score(self) -> float:
        if self.se == 0.0:
            return 0.0 if self.estimate == self.expected else math.inf
        return (self.estimate - self.expected) / self.se

    def to_dict(self) -> dict:
        return {"functional": self.functional, "horizon_t": self.horizon_t, "replicas": self.replicas,
                "estimate": self.estimate, "se": self.se, "expected": self.expected,
                "z_score": self.z_score}


def many_to_one_check(horizon_t: float, test_function: str, replicas: int, seed: int = 0,
                      level: float = 0.0, profile: SpeedProfile | None = None,
                      threads: int | None = None) -> ManyToOneReport:
    """Compare the MC mean of ``sum_j f(x_j(t))`` with ``e^t E f(N(0, t))``."""
    if test_function not in TEST_FUNCTIONS:
        raise DomainError(f"unknown functional {test_function!r}; known: {sorted(TEST_FUNCTIONS)}")
    t = float(horizon_t)
    f = TEST_FUNCTIONS[test_function]
    prof = profile if profile is not None else SpeedProfile((1.0,), (1.0,), t)
    ens = simulate(prof, t, seed=seed, replicas=replicas, threads=threads, include_speed_changes=False)
    sums = np.add.reduceat(f(ens.final_positions, t, level), ens.final_offsets[:-1]) \
        if ens.final_positions.size else np.zeros(len(ens))
    est, se = mean_with_se(sums)
    sd = math.sqrt(t)  # the variance at the horizon is t A(1) = t for every profile
    dens = lambda y: f(np.array([y]), t, level)[0] * math.exp(-y * y / (2 * t)) / (sd * math.sqrt(2 * math.pi))  # noqa: E731
    if test_function == "indicator_above_level":
        gauss = float(integrate.quad(lambda y: math.exp(-y * y / (2 * t)) / (sd * math.sqrt(2 * math.pi)),
                                     level, np.inf)[0])
    else:
        centre = SQRT2 * t if test_function in ("exp_tilt_sqrt2", "derivative_summand") else 0.0
        gauss = float(integrate.quad(dens, centre - 12 * sd, centre + 12 * sd, points=[centre],
                                     limit=200, epsabs=1e-13)[0])
    return ManyToOneReport(test_function, t, replicas, est, se, math.exp(t) * gauss)


@dataclass(frozen=True)
class MartingaleSeries:
    """Per-replica values of Z and W at each requested time."""

    times: tuple[float, ...]
    Z: NDArray[np.float64]  # (replicas, len(times))
    W: NDArray[np.float64]

    def summary(self) -> list[dict]:
        out = []
        for j, s in enumerate(self.times):
            zm, zse = mean_with_se(self.Z[:, j])
            wm, wse = mean_with_se(self.W[:, j])
            out.append({"time": s, "Z_mean": zm, "Z_se": zse, "Z_median": float(np.median(self.Z[:, j])),
                        "W_mean": wm, "W_se": wse, "W_median": float(np.median(self.W[:, j]))})
        return out

    def increments(self) -> NDArray[np.float64]:
        """Mean absolute change of Z between consecutive times, on the same paths."""
        return np.mean(np.abs(np.diff(self.Z, axis=1)), axis=0)

    def estimates(self, replica: int) -> list[MartingaleEstimate]:
        return [MartingaleEstimate(s, float(self.Z[replica, j]), float(self.W[replica, j]))
                for j, s in enumerate(self.times)]


def martingale_series(times: Sequence[float], replicas: int, seed: int = 0,
                      profile: SpeedProfile | None = None, pruning: PruningPolicy | None = None,
                      threads: int | None = None) -> MartingaleSeries:
    """Z(s) and W(s) at increasing ``times`` on shared paths (standard BBM by default)."""
    times = tuple(float(s) for s in times)
    if not times or any(b <= a for a, b in zip(times, times[1:])) or times[0] <= 0.0:
        raise DomainError("times must be positive and strictly increasing")
    t = times[-1]
    prof = profile if profile is not None else SpeedProfile((1.0,), (1.0,), t)
    ens = simulate(prof, t, checkpoints=times[:-1], pruning=pruning, seed=seed, replicas=replicas,
                   threads=threads, include_speed_changes=False, keep_window=1e-9)
    cols = [ens.checkpoint_stats(s) for s in times]
    return MartingaleSeries(times, np.stack([c[:, 2] for c in cols], axis=1),
                            np.stack([c[:, 3] for c in cols], axis=1))


def localized_derivative_sum(run: BranchingRun, s: float, envelope) -> float:
    """``sum_j 1{path_j in envelope} (sqrt2 sigma_1 s - x_j(s)) exp(-sqrt2 (sigma_1/sigma_2)... )``.

    Each particle alive at checkpoint ``s`` contributes
    ``(sqrt2 sigma_1 s - x) exp(-sqrt2 (1/sigma_2)(sqrt2 sigma_1 s - x))``
    when its ancestral path up to ``s`` lies in the envelope.  With
    ``sigma_1 = sigma_2 = 1`` and an all-accepting envelope this is Z(s).
    """
    ci = run.checkpoint_index(s)
    recs = np.nonzero(run.record_checkpoint == ci)[0]
    if run.retained_from > -math.inf:
        raise PreconditionError("run was truncated with keep_window; localized sums need every particle")
    x = run.record_position[recs]
    sig = run.profile.sigmas
    s1 = float(sig[0])
    s2 = float(sig[1]) if sig.size > 1 else 1.0
    paths = _record_paths(run, recs)
    accept = envelope.accepts(paths, run.checkpoint_times[: ci + 1], run)
    d = SQRT2 * s1 * s - x
    terms = d * np.exp(-SQRT2 * d / s2)
    return float(np.sum(terms[accept]))


def _record_paths(run: BranchingRun, recs: NDArray[np.int64]) -> NDArray[np.float64]:
    """Ancestral positions at checkpoints ``0..c`` for records at checkpoint ``c``."""
    if recs.size == 0:
        return np.empty((0, 0))
    c = int(run.record_checkpoint[recs[0]])
    out = np.empty((recs.size, c + 1))
    idx = recs.copy()
    for j in range(c, -1, -1):
        out[:, j] = run.record_position[idx]
        idx = run.record_parent[idx]
    return out


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_ARRAYS = ("final_positions", "final_ancestor", "final_offsets", "record_position", "record_parent",
           "record_checkpoint", "record_offsets", "stats", "n_alive", "pruned")


def save_ensemble(ens: RunEnsemble, path) -> None:
    """Write every array of ``ens`` plus a JSON header to an ``.npz`` file."""
    header = {
        "schema": "vsbbm.ensemble/1",
        "horizon_t": ens.horizon_t,
        "profile": profile_to_dict(ens.profile),
        "checkpoint_times": list(ens.checkpoint_times),
        "boundary_times": list(ens.boundary_times),
        "seed": ens.seed,
        "prune": None if ens.prune is None else {"depth": ens.prune.depth, "every": ens.prune.every},
        "keep_window": ens.keep_window,
        "offspring": list(ens.offspring.probabilities),
    }
    arrays = {"header": np.array(json.dumps(header, sort_keys=True))}
    arrays.update((k, np.ascontiguousarray(getattr(ens, k))) for k in _ARRAYS)
    # fixed member timestamps keep the archive byte-reproducible
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(info, buf.getvalue())


def load_ensemble(path) -> RunEnsemble:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("schema") != "vsbbm.ensemble/1":
            raise DomainError(f"{path}: not a saved ensemble")
        arrays = {k: data[k] for k in _ARRAYS}
    prune = header["prune"]
    return RunEnsemble(
        horizon_t=float(header["horizon_t"]), profile=speed_function_from_dict(header["profile"]),
        checkpoint_times=tuple(header["checkpoint_times"]), boundary_times=tuple(header["boundary_times"]),
        seed=int(header["seed"]), prune=None if prune is None else PruningPolicy(prune["depth"], prune["every"]),
        keep_window=header["keep_window"], offspring=OffspringLaw(tuple(header["offspring"])), **arrays,
    )
