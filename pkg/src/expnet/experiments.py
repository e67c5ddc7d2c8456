"""Benchmark instances, sweeps, and the results-CSV contract.

A single JSON-style config dict drives instance construction and solver
runs. The exact key names are part of the external interface (consumed by
the plotting package and the CLI):

``topology``
    ``{"kind": ..., "size": {...}, "seed": null | int}`` — kinds are the
    generators of :func:`expnet.topology.generate` plus ``"file"`` (with
    ``"path"``) and the packaged backbone names ``"geant"``, ``"abilene"``,
    ``"dtelekom"``. A null seed means "use the per-cell seed", so each
    experiment seed gets an independent topology realization.
``placement``
    ``{"num_sources": int, "num_learners": int, "num_types": int}``.
``stats``
    ``{"d", "T", "rate_range", "cap_range", "noise_range",
    "wellknown_var_range", "poorknown_var_range", "prior_hi_range",
    "prior_lo_range"}``. Source feature variances are drawn per dimension
    from the well-known range with probability 1/2 and from the
    poorly-known range otherwise; learner priors similarly use the low
    (interested, mean 1) or high (indifferent, mean 0) variance range.
    ``noise_range`` bounds the noise *variance*; the stored noise level is
    its square root.
``solver``
    ``{"solvers": [...], "K", "N1", "N2", "rounds", "theta", "stepsizes",
    "pga_gamma", "metric_N1", "metric_N2", "est_reps_data",
    "est_reps_model", "seeds"}``.
``benchmark`` (alternative to ``topology``)
    ``{"profile": "full" | "desk", "rows": [...]}`` — expands to one cell
    per named benchmark row, recorded with ``sweep_var = "none"`` and the
    row name in ``sweep_value``.

Results are written to a CSV with the fixed column set
``solver, sweep_var, sweep_value, seed, utility, utility_stderr,
infeasibility, est_error, runtime_s``; reruns resume by skipping cells
already present in the output file.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from ._rng import stream
from .gradient import EstimatorParams
from .instance import Instance, ProblemConfig, build_instance, infeasibility
from .objective import estimation_error, utility_mc
from .solvers_central import fw_solve, maxfair_solve, maxtp_solve, pga_solve
from .solvers_distributed import Stepsizes, dfw_solve, dmax_solve, dpga_solve
from .topology import (fill_capacities, generate, load_edge_list,
                       place_and_route)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("solver", "sweep_var", "sweep_value", "seed", "utility",
               "utility_stderr", "infeasibility", "est_error", "runtime_s")

SOLVER_NAMES = ("fw", "pga", "maxtp", "maxfair", "dfw", "dpga", "dmaxtp",
                "dmaxfair")

SWEEP_VARS = ("none", "source_rate", "num_sources", "num_learners",
              "stepsize")


class ConfigError(ValueError):
    """Raised on missing or malformed configuration entries."""


_PACKAGED_FILES = {"geant": "geant.edges", "abilene": "abilene.edges",
                   "dtelekom": "dtelekom.edges"}

_SYNTH_PLACEMENT = {"num_sources": 10, "num_learners": 5, "num_types": 3}
_BACKBONE_PLACEMENT = {"num_sources": 3, "num_learners": 3, "num_types": 2}
_DESK_PLACEMENT = {"num_sources": 3, "num_learners": 3, "num_types": 2}

_FULL_ROWS = {
    "er": {"topology": {"kind": "er", "size": {"nodes": 100, "p": 0.1053}},
           "placement": _SYNTH_PLACEMENT, "cap_range": [5.0, 10.0]},
    "bt": {"topology": {"kind": "bt", "size": {"branching": 4, "depth": 4}},
           "placement": _SYNTH_PLACEMENT, "cap_range": [5.0, 10.0]},
    "hc": {"topology": {"kind": "hc", "size": {"dim": 7}},
           "placement": _SYNTH_PLACEMENT, "cap_range": [5.0, 10.0]},
    "star": {"topology": {"kind": "star", "size": {"nodes": 100}},
             "placement": _SYNTH_PLACEMENT, "cap_range": [5.0, 10.0]},
    "grid": {"topology": {"kind": "grid", "size": {"rows": 10, "cols": 10}},
             "placement": _SYNTH_PLACEMENT, "cap_range": [5.0, 10.0]},
    "sw": {"topology": {"kind": "sw",
                        "size": {"nodes": 100, "k": 4, "p": 0.2}},
           "placement": _SYNTH_PLACEMENT, "cap_range": [5.0, 10.0]},
    "geant": {"topology": {"kind": "geant", "size": {}},
              "placement": _BACKBONE_PLACEMENT, "cap_range": [5.0, 8.0]},
    "abilene": {"topology": {"kind": "abilene", "size": {}},
                "placement": _BACKBONE_PLACEMENT, "cap_range": [5.0, 8.0]},
    "dtelekom": {"topology": {"kind": "dtelekom", "size": {}},
                 "placement": _BACKBONE_PLACEMENT, "cap_range": [5.0, 8.0]},
}

_DESK_ROWS = {
    "er": {"topology": {"kind": "er", "size": {"nodes": 20, "p": 0.25}},
           "placement": _DESK_PLACEMENT, "cap_range": [5.0, 10.0]},
    "bt": {"topology": {"kind": "bt", "size": {"branching": 2, "depth": 3}},
           "placement": _DESK_PLACEMENT, "cap_range": [5.0, 10.0]},
    "hc": {"topology": {"kind": "hc", "size": {"dim": 4}},
           "placement": _DESK_PLACEMENT, "cap_range": [5.0, 10.0]},
    "star": {"topology": {"kind": "star", "size": {"nodes": 16}},
             "placement": _DESK_PLACEMENT, "cap_range": [5.0, 10.0]},
    "grid": {"topology": {"kind": "grid", "size": {"rows": 4, "cols": 4}},
             "placement": _DESK_PLACEMENT, "cap_range": [5.0, 10.0]},
    "sw": {"topology": {"kind": "sw", "size": {"nodes": 16, "k": 4, "p": 0.2}},
           "placement": _DESK_PLACEMENT, "cap_range": [5.0, 10.0]},
    "geant": {"topology": {"kind": "geant", "size": {}},
              "placement": _BACKBONE_PLACEMENT, "cap_range": [5.0, 8.0]},
    "abilene": {"topology": {"kind": "abilene", "size": {}},
                "placement": _BACKBONE_PLACEMENT, "cap_range": [5.0, 8.0]},
}

_FULL_STATS = {"d": 100, "T": 1.0, "rate_range": [5.0, 8.0],
               "cap_range": [5.0, 10.0], "noise_range": [0.5, 1.0],
               "wellknown_var_range": [0.0, 0.01],
               "poorknown_var_range": [10.0, 20.0],
               "prior_hi_range": [1.0, 2.0], "prior_lo_range": [0.0, 0.01]}

_DESK_STATS = dict(_FULL_STATS, d=10)

_FULL_SOLVER = {"solvers": ["fw", "dfw"], "K": 50, "N1": 50, "N2": 50,
                "rounds": 1000, "theta": 10.0,
                "stepsizes": {"primal": 0.01, "edge": 0.01, "group": 0.01,
                              "nonneg": 0.01},
                "pga_gamma": None, "metric_N1": 100, "metric_N2": 100,
                "est_reps_data": 2500, "est_reps_model": 20,
                "seeds": [1, 2, 3, 4, 5]}

_DESK_SOLVER = dict(_FULL_SOLVER, metric_N1=32, metric_N2=32,
                    est_reps_data=250, est_reps_model=10, seeds=[1, 2, 3])

PROFILES = {
    "full": {"rows": _FULL_ROWS, "stats": _FULL_STATS, "solver": _FULL_SOLVER},
    "desk": {"rows": _DESK_ROWS, "stats": _DESK_STATS, "solver": _DESK_SOLVER},
}


def benchmark_rows(profile: str = "full") -> tuple:
    """Names of the benchmark topology rows available under ``profile``."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    return tuple(PROFILES[profile]["rows"])


def benchmark_config(row: str, profile: str = "full",
                     overrides: Optional[dict] = None) -> dict:
    """Full config dict for one named benchmark topology row."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    rows = PROFILES[profile]["rows"]
    if row not in rows:
        raise ConfigError(f"unknown benchmark row {row!r} for {profile!r}")
    entry = rows[row]
    config = {
        "topology": copy.deepcopy(entry["topology"]) | {"seed": None},
        "placement": dict(entry["placement"]),
        "stats": dict(PROFILES[profile]["stats"],
                      cap_range=list(entry["cap_range"])),
        "solver": copy.deepcopy(PROFILES[profile]["solver"]),
    }
    for section, values in (overrides or {}).items():
        config.setdefault(section, {}).update(values)
    return config


def load_config(path) -> dict:
    """Parse a JSON config file, filling solver/stats defaults."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if "benchmark" not in raw and "topology" not in raw:
        raise ConfigError("config needs a 'topology' or 'benchmark' section")
    profile = raw.get("benchmark", {}).get("profile", "full")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    merged = copy.deepcopy(raw)
    merged["stats"] = dict(PROFILES[profile]["stats"], **raw.get("stats", {}))
    merged["solver"] = dict(PROFILES[profile]["solver"],
                            **raw.get("solver", {}))
    return merged


def _read_packaged_edges(name: str) -> str:
    return resources.files("expnet.data").joinpath(
        _PACKAGED_FILES[name]).read_text()


def _build_graph(topology: dict, stats: dict, seed: int):
    kind = topology.get("kind")
    if kind is None:
        raise ConfigError("topology.kind is required")
    topo_seed = topology.get("seed")
    topo_seed = seed if topo_seed is None else int(topo_seed)
    cap_range = tuple(stats["cap_range"])
    if kind in _PACKAGED_FILES:
        graph = load_edge_list(_read_packaged_edges(kind))
        return fill_capacities(graph, cap_range, topo_seed)
    if kind == "file":
        path = topology.get("path")
        if not path:
            raise ConfigError("topology.kind 'file' requires topology.path")
        graph = load_edge_list(Path(path).read_text())
        if any(c is None for c in graph.capacities):
            graph = fill_capacities(graph, cap_range, topo_seed)
        return graph
    size = topology.get("size")
    if not isinstance(size, dict):
        raise ConfigError("topology.size must be an object")
    return generate(kind, size, topo_seed, cap_range=cap_range)


def _draw_statistics(graph, placement, pathset, stats: dict,
                     seed: int) -> ProblemConfig:
    d = int(stats["d"])
    group_keys = sorted(pathset.paths, key=repr)
    rate_rng = stream(seed, "stats-rates")
    lo, hi = stats["rate_range"]
    rates = {g: float(rate_rng.uniform(lo, hi)) for g in group_keys}

    feat_rng = stream(seed, "stats-features")
    source_cov = {}
    for s in sorted(placement.sources, key=repr):
        wellknown = feat_rng.random() < 0.5
        lo, hi = (stats["wellknown_var_range"] if wellknown
                  else stats["poorknown_var_range"])
        source_cov[s] = feat_rng.uniform(lo, hi, size=d)

    noise_rng = stream(seed, "stats-noise")
    nlo, nhi = stats["noise_range"]
    noise_std = {g: float(np.sqrt(noise_rng.uniform(nlo, nhi)))
                 for g in group_keys}

    prior_rng = stream(seed, "stats-priors")
    prior_mean, prior_cov = {}, {}
    for l in sorted(placement.learners, key=repr):
        interested = prior_rng.random() < 0.5
        lo, hi = (stats["prior_lo_range"] if interested
                  else stats["prior_hi_range"])
        prior_cov[l] = prior_rng.uniform(lo, hi, size=d)
        prior_mean[l] = (np.ones(d) if interested else np.zeros(d))

    beta_true = {}
    for t in sorted(set(placement.learner_type.values())):
        anchor = min(placement.learners_of_type(t), key=repr)
        brng = stream(seed, "stats-beta", int(t))
        beta_true[t] = (prior_mean[anchor]
                        + np.sqrt(prior_cov[anchor]) * brng.standard_normal(d))

    return ProblemConfig(d=d, T=float(stats["T"]), rates=rates,
                         source_cov=source_cov, noise_std=noise_std,
                         prior_mean=prior_mean, prior_cov=prior_cov,
                         beta_true=beta_true, seed=seed)


def instance_from_config(config: dict, seed: int) -> Instance:
    """Build a problem instance from a config dict and an experiment seed."""
    for section in ("topology", "placement", "stats"):
        if section not in config:
            raise ConfigError(f"config is missing the {section!r} section")
    placement_cfg = config["placement"]
    try:
        n_s = int(placement_cfg["num_sources"])
        n_l = int(placement_cfg["num_learners"])
        n_t = int(placement_cfg["num_types"])
    except KeyError as exc:
        raise ConfigError(f"placement is missing {exc}") from exc
    graph = _build_graph(config["topology"], config["stats"], seed)
    placement, pathset = place_and_route(graph, n_s, n_l, n_t, seed)
    problem = _draw_statistics(graph, placement, pathset, config["stats"],
                               seed)
    return build_instance(graph, placement, pathset, problem)


def benchmark_instance(row: str, seed: int, profile: str = "full",
                       overrides: Optional[dict] = None) -> Instance:
    """Instance for one named benchmark row (convenience wrapper)."""
    return instance_from_config(benchmark_config(row, profile, overrides),
                                seed)


# ---------------------------------------------------------------------------
# sweeps and the experiment runner
# ---------------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """One experiment campaign: a base config plus an optional sweep."""

    config: dict
    sweep_var: str = "none"
    sweep_values: Optional[list] = None
    out: Optional[Path] = None
    trace: bool = False

    def __post_init__(self) -> None:
        if self.sweep_var not in SWEEP_VARS:
            raise ConfigError(f"unknown sweep variable {self.sweep_var!r}")
        if self.sweep_var != "none" and not self.sweep_values:
            raise ConfigError("sweep_values required for a non-trivial sweep")
        if self.sweep_var != "none" and "benchmark" in self.config:
            raise ConfigError("sweeps need a single 'topology' config, "
                              "not a 'benchmark' section")


@dataclass
class ExperimentResult:
    """All rows produced (or resumed) by :func:`run`."""

    rows: list = field(default_factory=list)
    path: Optional[Path] = None

    def cells(self) -> set:
        return {(r["solver"], r["sweep_var"], str(r["sweep_value"]),
                 int(r["seed"])) for r in self.rows}


def apply_sweep(config: dict, sweep_var: str, value) -> dict:
    """Return a copy of ``config`` with one sweep variable overridden."""
    out = copy.deepcopy(config)
    if sweep_var == "none":
        return out
    if sweep_var == "source_rate":
        out["stats"]["rate_range"] = [float(value), float(value)]
    elif sweep_var == "num_sources":
        out["placement"]["num_sources"] = int(value)
    elif sweep_var == "num_learners":
        out["placement"]["num_learners"] = int(value)
    elif sweep_var == "stepsize":
        out["solver"]["stepsizes"] = {k: float(value) for k in
                                      ("primal", "edge", "group", "nonneg")}
    else:
        raise ConfigError(f"unknown sweep variable {sweep_var!r}")
    return out


def _solver_callable(name: str, solver_cfg: dict, seed: int, trace_cb=None):
    params = EstimatorParams(N1=int(solver_cfg["N1"]),
                             N2=int(solver_cfg["N2"]), seed=seed)
    K = int(solver_cfg["K"])
    theta = float(solver_cfg["theta"])
    rounds = int(solver_cfg["rounds"])
    steps = Stepsizes(**solver_cfg["stepsizes"])
    gamma = solver_cfg.get("pga_gamma")
    gamma = None if gamma is None else float(gamma)

    if name == "fw":
        return lambda inst: fw_solve(inst, params, K=K)[0]
    if name == "pga":
        return lambda inst: pga_solve(inst, params, K=K, gamma=gamma)[0]
    if name == "maxtp":
        return lambda inst: maxtp_solve(inst)
    if name == "maxfair":
        return lambda inst: maxfair_solve(inst)
    if name == "dfw":
        return lambda inst: dfw_solve(inst, params, K=K, theta=theta,
                                      rounds=rounds, stepsizes=steps,
                                      trace=trace_cb)[0]
    if name == "dpga":
        return lambda inst: dpga_solve(inst, params, K=K, gamma=gamma,
                                       theta=theta, rounds=rounds,
                                       stepsizes=steps, trace=trace_cb)[0]
    if name == "dmaxtp":
        return lambda inst: dmax_solve(inst, objective="tp", theta=theta,
                                       rounds=rounds, stepsizes=steps,
                                       trace=trace_cb)
    if name == "dmaxfair":
        return lambda inst: dmax_solve(inst, objective="fair", theta=theta,
                                       rounds=rounds, stepsizes=steps,
                                       trace=trace_cb)
    raise ConfigError(f"unknown solver {name!r}")


def read_results(path) -> list:
    """Parse a results CSV back into row dicts (numeric fields as floats)."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return rows
        missing = set(CSV_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise ConfigError(
                f"results file {path} lacks columns {sorted(missing)}")
        for rec in reader:
            row = {"solver": rec["solver"], "sweep_var": rec["sweep_var"],
                   "sweep_value": rec["sweep_value"], "seed": int(rec["seed"])}
            for col in ("utility", "utility_stderr", "infeasibility",
                        "est_error", "runtime_s"):
                row[col] = float(rec[col])
            rows.append(row)
    return rows


def _format_row(row: dict) -> dict:
    out = dict(row)
    for col in ("utility", "utility_stderr", "infeasibility", "est_error",
                "runtime_s"):
        out[col] = repr(float(row[col]))
    return out


def _sweep_cells(spec: ExperimentSpec) -> list:
    """Expand an ExperimentSpec into (sweep_var, sweep_value, cell_config) triples."""
    config = spec.config
    if "benchmark" in config:
        bench = config["benchmark"]
        profile = bench.get("profile", "full")
        rows = bench.get("rows") or list(benchmark_rows(profile))
        cells = []
        for row in rows:
            cell = benchmark_config(row, profile)
            cell["stats"] = dict(cell["stats"],
                                 **{k: v for k, v in config.get("stats", {})
                                    .items() if k != "cap_range"})
            cell["solver"] = dict(cell["solver"], **config.get("solver", {}))
            if "placement" in config:
                cell["placement"] = dict(config["placement"])
            cells.append(("none", row, cell))
        return cells
    if spec.sweep_var == "none":
        label = config["topology"].get("kind", "topology")
        return [("none", label, copy.deepcopy(config))]
    return [(spec.sweep_var, value, apply_sweep(config, spec.sweep_var, value))
            for value in spec.sweep_values]


def run(spec: ExperimentSpec) -> ExperimentResult:
    """Run every (cell, seed, solver) combination and write the results CSV.

    Cells already present in the output file are skipped, so interrupted
    campaigns resume. A failing cell is recorded with NaN metrics and the
    campaign continues.
    """
    solver_cfg = spec.config.get("solver") or copy.deepcopy(_FULL_SOLVER)
    solvers = list(solver_cfg.get("solvers", []))
    for name in solvers:
        if name not in SOLVER_NAMES:
            raise ConfigError(f"unknown solver {name!r}")
    if not solvers:
        raise ConfigError("solver.solvers must name at least one solver")
    seeds = [int(s) for s in solver_cfg.get("seeds", [1])]

    out_path = Path(spec.out) if spec.out is not None else None
    existing: list = []
    done: set = set()
    if out_path is not None and out_path.exists():
        existing = read_results(out_path)
        done = {(r["solver"], r["sweep_var"], str(r["sweep_value"]),
                 r["seed"]) for r in existing}
        log.info("resuming: %d cells already in %s", len(done), out_path)

    result = ExperimentResult(rows=list(existing), path=out_path)
    writer = None
    fh = None
    if out_path is not None:
        fresh = not out_path.exists()
        fh = out_path.open("a", newline="")
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        if fresh:
            writer.writeheader()
            fh.flush()
    try:
        for sweep_var, sweep_value, cell_config in _sweep_cells(spec):
            cell_solver_cfg = dict(solver_cfg, **cell_config.get("solver", {}))
            for seed in seeds:
                instance = None
                for name in solvers:
                    key = (name, sweep_var, str(sweep_value), seed)
                    if key in done:
                        continue
                    trace_cb = _make_trace(spec, name, sweep_value, seed)
                    row = {"solver": name, "sweep_var": sweep_var,
                           "sweep_value": sweep_value, "seed": seed}
                    tic = time.perf_counter()
                    try:
                        if instance is None:
                            instance = instance_from_config(cell_config, seed)
                        alloc = _solver_callable(name, cell_solver_cfg, seed,
                                                 trace_cb)(instance)
                        runtime = time.perf_counter() - tic
                        util = utility_mc(instance, alloc,
                                          N1=int(cell_solver_cfg["metric_N1"]),
                                          N2=int(cell_solver_cfg["metric_N2"]),
                                          rng=seed)
                        err = estimation_error(
                            instance, alloc,
                            reps_data=int(cell_solver_cfg["est_reps_data"]),
                            reps_model=int(cell_solver_cfg["est_reps_model"]),
                            rng=seed)
                        row.update(utility=util.value,
                                   utility_stderr=util.stderr,
                                   infeasibility=infeasibility(
                                       instance, alloc.vector),
                                   est_error=err,
                                   runtime_s=runtime)
                    except Exception:
                        log.exception("cell %s failed", key)
                        row.update(utility=math.nan, utility_stderr=math.nan,
                                   infeasibility=math.nan, est_error=math.nan,
                                   runtime_s=time.perf_counter() - tic)
                    result.rows.append(row)
                    done.add(key)
                    if writer is not None:
                        writer.writerow(_format_row(row))
                        fh.flush()
                    log.info("cell %s: utility=%s", key, row["utility"])
    finally:
        if fh is not None:
            fh.close()
    return result


def _make_trace(spec: ExperimentSpec, solver: str, sweep_value, seed: int):
    if not spec.trace or spec.out is None:
        return None
    if solver not in ("dfw", "dpga", "dmaxtp", "dmaxfair"):
        return None
    base = Path(spec.out)
    trace_path = base.with_name(
        f"{base.stem}_trace_{solver}_{sweep_value}_{seed}.csv")
    trace_fh = trace_path.open("w", newline="")
    trace_writer = csv.writer(trace_fh)
    trace_writer.writerow(("round", "entity", "variable", "value"))

    def _cb(round_idx: int, rows: list) -> None:
        for entity, variable, value in rows:
            trace_writer.writerow((round_idx, entity, variable, repr(value)))
        trace_fh.flush()

    return _cb
