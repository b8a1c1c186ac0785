"""Command-line entry point: ``vsbbm {center,simulate,fkpp,diagnose,compare}``.

Settings come from built-in defaults, then an optional ``--config`` JSON
file, then explicit flags (flags win).  Every artifact is written next to a
``<artifact>.manifest.json`` holding the resolved config, its hash and the
library versions; no wall-clock data enters an artifact, so a manifest is
enough to reproduce it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numba
import numpy as np
import scipy

from . import __version__
from .bbm_engine import PruningPolicy, load_ensemble, save_ensemble, simulate
from .centering import CenteringTerm, m_minus, m_plus, standard_term
from .diagnostics import (
    EmpiricalLaw,
    EnvelopeSpec,
    envelope_violation_rate,
    extremal_process_stats,
    limit_law_fit,
    slepian_dominance,
    universality_check,
)
from .errors import EstimationError, NumericalError, ResourceError, VsbbmError
from .fkpp import (
    InitialCondition,
    compensated_tail,
    estimate_tail_constant,
    fit_log_coefficient,
    heaviside,
    solve,
)
from .speed_profiles import (
    CaseBEnvelope,
    SpeedProfile,
    envelope_to_dict,
    identity_profile,
    load_speed_function,
    profile_to_dict,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3
EXIT_NUMERICAL = 4

SCHEMA_VERSION = 1


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# option tables: name -> (converter, default, help)
# ---------------------------------------------------------------------------


def _float_list(v) -> list[float]:
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    v = str(v).strip()
    return [float(x) for x in v.split(",") if x.strip()] if v else []


def _opt_float(v):
    return None if v is None or v == "" else float(v)


def _nonneg_int(v) -> int:
    i = int(v)
    if i < 0 or float(v) != i:
        raise ValueError("expected a nonnegative integer")
    return i


def _pos_int(v) -> int:
    i = _nonneg_int(v)
    if i < 1:
        raise ValueError("expected a positive integer")
    return i


def _pos_float(v) -> float:
    x = float(v)
    if not (x > 0.0 and math.isfinite(x)):
        raise ValueError("expected a positive number")
    return x


COMMON = {
    "seed": (_nonneg_int, 0, "base seed of the replica streams"),
    "out": (str, None, "output path (stdout when omitted, JSON reports only)"),
}

OPTIONS: dict[str, dict[str, tuple[Callable, Any, str]]] = {
    "center": {
        "profile": (str, None, "speed function JSON (identity when omitted)"),
        "t": (_pos_float, None, "horizon t"),
        "alpha_begin": (_opt_float, None, "treat the profile as Case B with this alpha near 0"),
        "alpha_end": (_opt_float, None, "treat the profile as Case B with this alpha near 1"),
    },
    "simulate": {
        "profile": (str, None, "speed function JSON (identity when omitted)"),
        "t": (_pos_float, None, "horizon t"),
        "replicas": (_pos_int, 1, "number of independent replicas"),
        "prune_depth": (_opt_float, None, "cull particles this far below the running max"),
        "prune_every": (_pos_float, 0.5, "pruning mesh spacing"),
        "checkpoints": (_float_list, [], "comma-separated extra checkpoint times"),
        "no_speed_changes": (bool, False, "do not add speed-change times as checkpoints"),
        "keep_window": (_opt_float, None, "keep only final particles this close to the max"),
        "records": (str, None, "also write the full ensemble (.npz) here"),
        "population_cap": (_pos_int, 10_000_000, "abort a chunk beyond this many particles"),
    },
    "fkpp": {
        "t_final": (_pos_float, None, "final time"),
        "dx": (_pos_float, 0.05, "grid spacing"),
        "ic": (str, "heaviside", "'heaviside' or an initial-condition JSON file"),
        "dt_factor": (_pos_float, 0.1, "dt as a multiple of dx^2"),
        "record_every": (_pos_float, 0.5, "front recording interval"),
        "z_grid": (_float_list, [], "z values of the compensated tail (default 3..12 step 0.25)"),
        "fit_t_min": (_pos_float, 50.0, "start of the log-fit window"),
        "fit_t_max": (_pos_float, 400.0, "end of the log-fit window"),
    },
    "diagnose": {
        "runs": (str, None, "CSV written by 'simulate'"),
        "profile": (str, None, "speed function JSON used for centering"),
        "records": (str, None, "ensemble .npz written by 'simulate --records'"),
        "envelope": (str, None, "envelope JSON for a violation rate (needs --records)"),
        "conditioning": (str, "top", "'top' or 'above'"),
        "y": (float, 1.0, "level below the centering for 'above' conditioning"),
        "y_min": (_opt_float, None, "window start of the extremal statistics (needs --records)"),
        "cluster_depth": (_opt_float, None, "cluster split depth d (default t/2)"),
        "C": (_opt_float, None, "tail constant for the limit-law fit"),
        "alpha_begin": (_opt_float, None, "Case-B alpha near 0 for centering"),
        "alpha_end": (_opt_float, None, "Case-B alpha near 1 for centering"),
    },
    "compare": {
        "kind": (str, "slepian", "'slepian' or 'universality'"),
        "low": (str, None, "lower profile (slepian) or first envelope (universality)"),
        "high": (str, None, "upper profile (slepian) or second envelope (universality)"),
        "t": (_pos_float, None, "horizon t"),
        "replicas": (_pos_int, 1000, "replicas per speed function"),
        "permutations": (_pos_int, 1000, "KS permutations"),
        "allow_alpha_mismatch": (bool, False, "compare envelopes with different alphas"),
    },
}

REQUIRED = {"center": ("t",), "simulate": ("t", "out"), "fkpp": ("t_final", "out"),
            "diagnose": ("runs",), "compare": ("low", "high", "t")}


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str
    seed: int
    params: dict = field(default_factory=dict)
    threads: int | None = None

    @property
    def horizon_t(self) -> float | None:
        return self.params.get("t", self.params.get("t_final"))

    @property
    def replicas(self) -> int | None:
        return self.params.get("replicas")

    @property
    def profile(self) -> str | None:
        return self.params.get("profile")

    @property
    def out(self) -> str | None:
        return self.params.get("out")

    @property
    def pruning(self) -> PruningPolicy | None:
        d = self.params.get("prune_depth")
        return None if d is None else PruningPolicy(d, self.params.get("prune_every", 0.5))

    def to_dict(self) -> dict:
        """Output-affecting settings only (thread count is excluded)."""
        return {"subcommand": self.subcommand, "seed": self.seed, **self.params}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_config(subcommand: str, flags: dict, config_file: str | None = None,
                 threads: int | None = None) -> ExperimentConfig:
    """Merge defaults, config file and flags; validate every field."""
    table = {**COMMON, **OPTIONS[subcommand]}
    raw = {k: v[1] for k, v in table.items()}
    if config_file is not None:
        doc = _read_json(config_file, "config")
        if not isinstance(doc, dict):
            raise CliError(f"config file {config_file}: top level must be an object")
        doc = dict(doc)
        doc.pop("subcommand", None)
        for k, v in doc.items():
            key = k.replace("-", "_")
            if key == "threads":
                threads = v if threads is None else threads
                continue
            if key not in table:
                raise CliError(f"config file {config_file}: unknown field '{k}' for '{subcommand}'")
            raw[key] = v
    raw.update({k: v for k, v in flags.items() if k in table})
    params = {}
    for k, (conv, default, _) in table.items():
        v = raw[k]
        if v is None:
            params[k] = None
            continue
        try:
            params[k] = bool(v) if conv is bool else conv(v)
        except (TypeError, ValueError) as exc:
            raise CliError(f"invalid value for '{k}': {v!r} ({exc})") from None
    for k in REQUIRED[subcommand]:
        if params.get(k) is None:
            raise CliError(f"missing required field '{k}' for '{subcommand}'")
    _resolve_paths(subcommand, params)
    if threads is not None:
        try:
            threads = _pos_int(threads)
        except (TypeError, ValueError):
            raise CliError(f"invalid value for 'threads': {threads!r}") from None
    seed = params.pop("seed")
    return ExperimentConfig(subcommand, seed, params, threads)


def _resolve_paths(subcommand: str, params: dict) -> None:
    for k in ("profile", "runs", "envelope", "low", "high"):
        if params.get(k) is not None and not Path(params[k]).is_file():
            raise CliError(f"{k} file not found: {params[k]}")
    if subcommand == "diagnose" and params.get("records") is not None and not Path(params["records"]).is_file():
        raise CliError(f"records file not found: {params['records']}")
    if subcommand == "fkpp" and params["ic"] != "heaviside" and not Path(params["ic"]).is_file():
        raise CliError(f"ic file not found: {params['ic']}")
    outs = ["out"] + (["records"] if subcommand == "simulate" else [])
    for k in outs:
        if params.get(k) is not None:
            parent = Path(params[k]).resolve().parent
            if not parent.is_dir():
                raise CliError(f"output directory for '{k}' does not exist: {parent}")


def _read_json(path: str, what: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} file {path} is not valid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def csv_text(schema: str, columns: list[str], rows, int_columns=()) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema}/{SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    ints = {columns.index(c) for c in int_columns if c in columns}
    for row in rows:
        w.writerow([_fmt(int(v)) if j in ints else _fmt(v) for j, v in enumerate(row)])
    return buf.getvalue()


def read_csv(path: str) -> tuple[str, list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# schema:"):
            raise CliError(f"{path}: missing schema line")
        schema = first.split(":", 1)[1].strip()
        reader = csv.reader(fh)
        cols = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    return schema, cols, data.reshape(-1, len(cols))


def manifest(cfg: ExperimentConfig, artifacts: list[str], inputs: dict | None = None) -> dict:
    return {
        "schema": f"vsbbm.manifest/{SCHEMA_VERSION}",
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "artifacts": [Path(a).name for a in artifacts],
        "inputs": inputs or {},
        "versions": {"vsbbm": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__, "python": platform.python_version()},
    }


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _emit(cfg: ExperimentConfig, report: dict, inputs: dict, extra: dict[str, str] | None = None) -> None:
    """Write the JSON report (and any extra text artifacts) plus the manifest, or print them."""
    extra = extra or {}
    if cfg.out is None:
        sys.stdout.write(dumps({"result": report, "manifest": manifest(cfg, [], inputs)}))
        return
    for p, text in extra.items():
        _write(p, text)
    _write(cfg.out, dumps(report))
    arts = [cfg.out, *extra]
    _write(cfg.out + ".manifest.json", dumps(manifest(cfg, arts, inputs)))


def _inputs(cfg: ExperimentConfig) -> dict:
    """Embed input speed functions so the manifest alone reproduces the run."""
    out = {}
    for k in ("profile", "low", "high"):
        p = cfg.params.get(k)
        if p is not None:
            obj = load_speed_function(p)
            out[k] = envelope_to_dict(obj) if isinstance(obj, CaseBEnvelope) else profile_to_dict(obj)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _load_profile(path: str | None, t: float) -> SpeedProfile | CaseBEnvelope:
    if path is None:
        return identity_profile(t)
    return load_speed_function(path)


def _centering(obj, t: float, alpha_begin=None, alpha_end=None) -> CenteringTerm:
    if (alpha_begin is None) != (alpha_end is None):
        raise CliError("alpha_begin and alpha_end come together")
    if alpha_begin is not None:
        return m_minus(alpha_begin, alpha_end, t)
    if isinstance(obj, CaseBEnvelope):
        return m_minus(obj.alpha_begin, obj.alpha_end, t)
    if obj.is_identity():
        return standard_term(t)
    return m_plus(obj, t)


def _as_profile(obj, t: float) -> SpeedProfile:
    return obj.to_profile() if isinstance(obj, CaseBEnvelope) else obj.with_horizon(t)


def cmd_center(cfg: ExperimentConfig) -> None:
    p = cfg.params
    obj = _load_profile(p["profile"], p["t"])
    term = _centering(obj, p["t"], p["alpha_begin"], p["alpha_end"])
    _emit(cfg, {"schema": f"vsbbm.center/{SCHEMA_VERSION}", **term.to_dict()}, _inputs(cfg))


def cmd_simulate(cfg: ExperimentConfig) -> None:
    p = cfg.params
    prof = _as_profile(_load_profile(p["profile"], p["t"]), p["t"])
    ens = simulate(prof, p["t"], checkpoints=p["checkpoints"], pruning=cfg.pruning, seed=cfg.seed,
                   replicas=p["replicas"], population_cap=p["population_cap"], keep_window=p["keep_window"],
                   threads=cfg.threads, include_speed_changes=not p["no_speed_changes"])
    cols, mat = ens.table()
    ints = ["replica_id", "n_final"] + [c for c in cols if c.startswith("n@")]
    _write(p["out"], csv_text("vsbbm.simulate", cols, mat, ints))
    arts = [p["out"]]
    if p["records"] is not None:
        save_ensemble(ens, p["records"])
        arts.append(p["records"])
    _write(p["out"] + ".manifest.json", dumps(manifest(cfg, arts, _inputs(cfg))))


def cmd_fkpp(cfg: ExperimentConfig) -> None:
    p = cfg.params
    ic = heaviside(p["dx"]) if p["ic"] == "heaviside" else InitialCondition.load(p["ic"])
    if p["ic"] != "heaviside" and abs(ic.dx - p["dx"]) > 1e-12:
        raise CliError(f"ic file {p['ic']} has dx={ic.dx}, but --dx is {p['dx']}")
    res = solve(ic, p["t_final"], dt_factor=p["dt_factor"], record_every=p["record_every"])
    z = np.asarray(p["z_grid"]) if p["z_grid"] else np.arange(3.0, 12.0 + 1e-9, 0.25)
    rows = [(t, f, math.sqrt(2.0) * t - f) for t, f in zip(res.times, res.fronts)]
    front_csv = csv_text("vsbbm.fkpp.front", ["time", "front", "lag"], rows)
    comp = compensated_tail(res.state, z)
    tail_csv = csv_text("vsbbm.fkpp.tail", ["z", "compensated"], zip(z, comp))
    report: dict = {"schema": f"vsbbm.fkpp/{SCHEMA_VERSION}", "t_final": res.state.time, "dt": res.dt,
                    "monotonicity_violations": res.monotonicity_violations}
    t_max = min(p["fit_t_max"], res.state.time)
    if t_max > p["fit_t_min"]:
        report["log_fit"] = fit_log_coefficient(res.times, res.fronts, p["fit_t_min"], t_max).to_dict()
    try:
        report["tail_constant"] = estimate_tail_constant(res.state, z).to_dict()
    except EstimationError as exc:
        report["tail_constant"] = {"error": str(exc), "diagnostics": exc.diagnostics}
    base = str(Path(p["out"]).with_suffix(""))
    tail_path = base + ".tail.csv"
    summary_path = base + ".summary.json"
    _write(p["out"], front_csv)
    _write(tail_path, tail_csv)
    _write(summary_path, dumps(report))
    _write(p["out"] + ".manifest.json", dumps(manifest(cfg, [p["out"], tail_path, summary_path])))


def _summary(x: np.ndarray) -> dict:
    x = np.asarray(x, dtype=float)
    q = np.quantile(x, [0.05, 0.25, 0.5, 0.75, 0.95]) if x.size else [math.nan] * 5
    return {"n": int(x.size), "mean": float(x.mean()) if x.size else math.nan,
            "se": float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan,
            "quantiles": dict(zip(("q05", "q25", "q50", "q75", "q95"), map(float, q)))}


def cmd_diagnose(cfg: ExperimentConfig) -> None:
    p = cfg.params
    schema, cols, data = read_csv(p["runs"])
    if not schema.startswith("vsbbm.simulate/"):
        raise CliError(f"{p['runs']}: expected a 'simulate' CSV, found schema {schema!r}")
    ens = load_ensemble(p["records"]) if p["records"] else None
    t = ens.horizon_t if ens is not None else None
    obj = None
    if p["profile"] is not None:
        obj = load_speed_function(p["profile"])
        t = t if t is not None else obj.horizon_t
    if t is None:
        raise CliError("diagnose needs --profile or --records to know the horizon t")
    obj = obj if obj is not None else (ens.profile if ens is not None else identity_profile(t))
    centre = _centering(obj, t, p["alpha_begin"], p["alpha_end"])
    mx = data[:, cols.index("max_position")]
    report: dict = {"schema": f"vsbbm.diagnose/{SCHEMA_VERSION}", "horizon_t": t,
                    "centering": centre.to_dict(), "recentred_max": _summary(mx - centre.value),
                    "Z": _summary(data[:, cols.index("Z")]), "W": _summary(data[:, cols.index("W")])}
    if p["C"] is not None:
        law = EmpiricalLaw(mx - centre.value, {"profile": p["profile"] or "identity", "t": t,
                                               "replicas": int(mx.size)})
        report["limit_law"] = limit_law_fit(law, data[:, cols.index("Z")], p["C"]).to_dict()
    if p["envelope"] is not None or p["y_min"] is not None:
        if ens is None:
            raise CliError("envelope rates and extremal statistics need --records")
    if p["envelope"] is not None:
        doc = _read_json(p["envelope"], "envelope")
        try:
            env = EnvelopeSpec(**doc)
        except TypeError as exc:
            raise CliError(f"envelope file {p['envelope']}: {exc}") from None
        rate = envelope_violation_rate(ens, env, p["conditioning"], centre, p["y"])
        report["envelope"] = {"spec": env.to_dict(), "conditioning": p["conditioning"], **rate.to_dict()}
    if p["y_min"] is not None:
        d = p["cluster_depth"] if p["cluster_depth"] is not None else t / 2.0
        if not ens.checkpoint_times or all(abs(c - (t - d)) > 1e-9 for c in ens.checkpoint_times):
            d = None
            report["cluster_note"] = "no checkpoint at t - d; clusters skipped"
        report["extremal"] = extremal_process_stats(ens, p["y_min"], centre, cluster_depth=d).to_dict()
    _emit(cfg, report, _inputs(cfg))


def cmd_compare(cfg: ExperimentConfig) -> None:
    p = cfg.params
    a = load_speed_function(p["low"])
    b = load_speed_function(p["high"])
    if p["kind"] == "slepian":
        rep = slepian_dominance(_as_profile(a, p["t"]), _as_profile(b, p["t"]), p["t"], p["replicas"],
                                cfg.seed, threads=cfg.threads)
    elif p["kind"] == "universality":
        if not (isinstance(a, CaseBEnvelope) and isinstance(b, CaseBEnvelope)):
            raise CliError("universality needs two Case-B envelope files")
        rep = universality_check(a, b, p["t"], p["replicas"], cfg.seed, p["permutations"],
                                 require_same_alpha=not p["allow_alpha_mismatch"], threads=cfg.threads)
    else:
        raise CliError(f"invalid value for 'kind': {p['kind']!r} (slepian or universality)")
    _emit(cfg, {"schema": f"vsbbm.compare/{SCHEMA_VERSION}", "kind": p["kind"], **rep.to_dict()},
          _inputs(cfg))


COMMANDS = {"center": cmd_center, "simulate": cmd_simulate, "fkpp": cmd_fkpp,
            "diagnose": cmd_diagnose, "compare": cmd_compare}


def run(cfg: ExperimentConfig) -> int:
    """Execute a validated config; returns the exit status."""
    try:
        COMMANDS[cfg.subcommand](cfg)
    except CliError as exc:
        print(f"vsbbm: error: {exc}", file=sys.stderr)
        return exc.code
    except ResourceError as exc:
        print(f"vsbbm: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NumericalError, EstimationError) as exc:
        print(f"vsbbm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (VsbbmError, ValueError) as exc:
        print(f"vsbbm: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"vsbbm: error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vsbbm", description="Variable-speed BBM experiments")
    parser.add_argument("--version", action="version", version=f"vsbbm {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, table in OPTIONS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="JSON config (flags override it)")
        sp.add_argument("--threads", default=None, help="worker threads (default: all available)")
        for key, (conv, default, help_) in {**COMMON, **table}.items():
            flag = "--" + key.replace("_", "-")
            if conv is bool:
                sp.add_argument(flag, dest=key, action="store_true", default=argparse.SUPPRESS, help=help_)
            else:
                sp.add_argument(flag, dest=key, default=argparse.SUPPRESS, help=help_)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    sub = ns.pop("subcommand")
    config_file = ns.pop("config")
    threads = ns.pop("threads")
    try:
        cfg = build_config(sub, ns, config_file, threads)
    except CliError as exc:
        print(f"vsbbm: error: {exc}", file=sys.stderr)
        return exc.code
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
