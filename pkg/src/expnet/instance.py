"""Problem instances: topology + statistics + the feasible rate region.

An :class:`Instance` bundles a directed graph, a placement, per-(source,
type) path sets, and the statistical parameters into an immutable object
with flat coordinate indexing for the rate vector. The feasible region is

* per edge ``e``:   sum over (s, t) of  max over paths p in P_{s,t} through e
  of lambda_p  <=  capacity(e)   (shared multicast bandwidth per group),
* per (s, t):       max over paths p in P_{s,t} of lambda_p <= rate(s, t),
* nonnegativity:    lambda >= 0 coordinatewise.

The smooth l_theta surrogate replaces each max with a theta-norm over the
same terms, which upper-bounds the max and converges to it as theta grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .topology import Graph, PathSet, Placement, TopologyError


class InstanceError(ValueError):
    """Raised for inconsistent instance components."""


def _as_diag(name: str, value, d: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (d,):
        raise InstanceError(f"{name} must have shape ({d},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InstanceError(f"{name} contains non-finite entries")
    return arr


@dataclass
class ProblemConfig:
    """Statistical parameters of a learning network.

    Parameters
    ----------
    d : int
        Feature dimension.
    T : float
        Data acquisition horizon.
    rates : dict
        ``(source, type) -> `` maximum generation rate (the per-group cap).
    source_cov : dict
        ``source -> (d,)`` diagonal of the feature covariance.
    noise_std : dict
        ``(source, type) -> `` label noise standard deviation (> 0).
    prior_mean : dict
        ``learner -> (d,)`` prior mean.
    prior_cov : dict
        ``learner -> (d,)`` diagonal of the prior covariance.
    beta_true : dict
        ``type -> (d,)`` nominal ground-truth model (metrics may redraw
        ground truths from the priors; this field is the fixed reference).
    seed : int
        Base seed for everything derived from this configuration.
    """

    d: int
    T: float
    rates: dict
    source_cov: dict
    noise_std: dict
    prior_mean: dict
    prior_cov: dict
    beta_true: dict
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 1:
            raise InstanceError("feature dimension must be >= 1")
        if not (self.T > 0):
            raise InstanceError("horizon T must be > 0")
        self.rates = {k: float(v) for k, v in self.rates.items()}
        for k, v in self.rates.items():
            if not (v >= 0):
                raise InstanceError(f"rate {k!r} must be >= 0, got {v}")
        self.source_cov = {s: _as_diag(f"source_cov[{s!r}]", v, self.d)
                           for s, v in self.source_cov.items()}
        for s, v in self.source_cov.items():
            if np.any(v < 0):
                raise InstanceError(f"source_cov[{s!r}] must be >= 0")
        self.noise_std = {k: float(v) for k, v in self.noise_std.items()}
        for k, v in self.noise_std.items():
            if not (v > 0):
                raise InstanceError(f"noise_std[{k!r}] must be > 0, got {v}")
        self.prior_mean = {l: _as_diag(f"prior_mean[{l!r}]", v, self.d)
                           for l, v in self.prior_mean.items()}
        self.prior_cov = {l: _as_diag(f"prior_cov[{l!r}]", v, self.d)
                          for l, v in self.prior_cov.items()}
        for l, v in self.prior_cov.items():
            if np.any(v < 0):
                raise InstanceError(f"prior_cov[{l!r}] must be >= 0")
        self.beta_true = {t: _as_diag(f"beta_true[{t!r}]", v, self.d)
                          for t, v in self.beta_true.items()}


@dataclass
class PathCoord:
    """Flat-index metadata for one path coordinate of the rate vector."""

    index: int
    source: object
    type_id: object
    learner: object
    nodes: tuple
    edges: tuple


@dataclass
class Instance:
    """Immutable bundle of graph, placement, paths, and statistics.

    Built via :func:`build_instance`; precomputes the coordinate layout and
    the per-edge membership lists the constraint system and the distributed
    engine both rely on.
    """

    graph: Graph
    placement: Placement
    pathset: PathSet
    config: ProblemConfig
    coords: tuple = field(default_factory=tuple)
    groups: dict = field(default_factory=dict)
    edge_members: dict = field(default_factory=dict)
    coord_by_pair: dict = field(default_factory=dict)
    learner_feeds: dict = field(default_factory=dict)

    @property
    def n_coords(self) -> int:
        """Total number of path coordinates (the rate-vector length)."""
        return len(self.coords)

    def zero_rates(self) -> np.ndarray:
        """Return the all-zero rate vector."""
        return np.zeros(self.n_coords)

    def learner_rates(self, vector: np.ndarray) -> dict:
        """Split a rate vector into per-learner incoming rates by source."""
        out: dict = {}
        for l in self.placement.learners:
            out[l] = {s: float(vector[j]) for s, j in self.learner_feeds[l]}
        return out


@dataclass
class RateAllocation:
    """A rate vector tied to its instance, with per-learner accessors."""

    instance: Instance
    vector: np.ndarray

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=float).reshape(-1)
        if self.vector.shape != (self.instance.n_coords,):
            raise InstanceError(
                f"rate vector must have length {self.instance.n_coords}")
        if np.any(self.vector < 0):
            raise InstanceError("rate vector must be nonnegative")

    def rate(self, source, learner) -> float:
        """Return the rate delivered from ``source`` to ``learner``."""
        return float(self.vector[self.instance.coord_by_pair[(source, learner)]])

    def per_learner(self) -> dict:
        """Return ``learner -> {source: rate}`` for all learners."""
        return self.instance.learner_rates(self.vector)


def build_instance(graph: Graph, placement: Placement, pathset: PathSet,
                   config: ProblemConfig) -> Instance:
    """Assemble and validate an Instance.

    Raises
    ------
    InstanceError
        On dangling path references (edges absent from the graph, paths not
        ending at a learner of the right type), unset capacities, or missing
        statistical parameters.
    """
    edge_set = set(graph.edges)
    cap_map = graph.capacity_map()
    for e, cap in cap_map.items():
        if cap is None:
            raise InstanceError(f"edge {e!r} has no capacity; fill capacities first")
    coords: list[PathCoord] = []
    groups: dict = {}
    edge_members: dict = {}
    coord_by_pair: dict = {}
    learner_feeds: dict = {l: [] for l in placement.learners}
    learner_set = set(placement.learners)
    for (s, t), plist in sorted(pathset.paths.items(), key=repr):
        seen_terminals: set = set()
        for nodes in plist:
            if nodes[0] != s:
                raise InstanceError(f"path {nodes!r} does not start at source {s!r}")
            terminal = nodes[-1]
            if terminal not in learner_set:
                raise InstanceError(f"path {nodes!r} does not end at a learner")
            if placement.learner_type[terminal] != t:
                raise InstanceError(
                    f"path {nodes!r} ends at learner {terminal!r} of wrong type")
            if terminal in seen_terminals:
                raise InstanceError(
                    f"duplicate path terminal {terminal!r} in group ({s!r}, {t!r})")
            seen_terminals.add(terminal)
            path_edges = tuple(zip(nodes[:-1], nodes[1:]))
            for e in path_edges:
                if e not in edge_set:
                    raise InstanceError(f"path {nodes!r} uses unknown edge {e!r}")
            j = len(coords)
            coords.append(PathCoord(index=j, source=s, type_id=t,
                                    learner=terminal, nodes=tuple(nodes),
                                    edges=path_edges))
            groups.setdefault((s, t), []).append(j)
            coord_by_pair[(s, terminal)] = j
            learner_feeds[terminal].append((s, j))
            for e in path_edges:
                edge_members.setdefault(e, {}).setdefault((s, t), []).append(j)
    for key in groups:
        if key not in config.rates:
            raise InstanceError(f"config.rates missing group {key!r}")
        if key not in config.noise_std:
            raise InstanceError(f"config.noise_std missing group {key!r}")
    for s in placement.sources:
        if s not in config.source_cov:
            raise InstanceError(f"config.source_cov missing source {s!r}")
    for l in placement.learners:
        if l not in config.prior_mean or l not in config.prior_cov:
            raise InstanceError(f"config prior missing learner {l!r}")
    for l in placement.learners:
        learner_feeds[l] = sorted(learner_feeds[l], key=repr)
    return Instance(graph=graph, placement=placement, pathset=pathset,
                    config=config, coords=tuple(coords),
                    groups={k: tuple(v) for k, v in groups.items()},
                    edge_members={e: {g: tuple(js) for g, js in sorted(m.items(), key=repr)}
                                  for e, m in sorted(edge_members.items(), key=repr)},
                    coord_by_pair=coord_by_pair, learner_feeds=learner_feeds)


def _theta_norm(values: np.ndarray, theta: float) -> float:
    """Overflow-safe theta-norm of a nonnegative vector."""
    top = float(np.max(values, initial=0.0))
    if top <= 0.0:
        return 0.0
    scaled = values / top
    return top * float(np.sum(scaled ** theta) ** (1.0 / theta))


def _group_loads(instance: Instance, lam: np.ndarray, relaxed: bool,
                 theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge and per-group left-hand sides of the capacity system."""
    lam = np.asarray(lam, dtype=float)
    edge_lhs = np.zeros(len(instance.graph.edges))
    for i, e in enumerate(instance.graph.edges):
        members = instance.edge_members.get(e)
        if not members:
            continue
        total = 0.0
        for js in members.values():
            vals = lam[list(js)]
            total += _theta_norm(vals, theta) if relaxed else float(np.max(vals))
        edge_lhs[i] = total
    group_keys = sorted(instance.groups, key=repr)
    group_lhs = np.zeros(len(group_keys))
    for i, g in enumerate(group_keys):
        vals = lam[list(instance.groups[g])]
        group_lhs[i] = _theta_norm(vals, theta) if relaxed else float(np.max(vals))
    return edge_lhs, group_lhs


def residuals(instance: Instance, lam: np.ndarray, relaxed: bool = False,
              theta: float = 10.0) -> np.ndarray:
    """Per-constraint violation amounts ``max(0, lhs - rhs)``.

    Order: edge constraints (graph edge order), per-(source, type)
    constraints (sorted), then nonnegativity (coordinate order). With
    ``relaxed=True`` each max is replaced by the l_theta norm of the same
    terms, so relaxed residuals dominate exact ones.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (instance.n_coords,):
        raise InstanceError(f"rate vector must have length {instance.n_coords}")
    edge_lhs, group_lhs = _group_loads(instance, lam, relaxed, theta)
    caps = np.array([instance.graph.capacity_map()[e] for e in instance.graph.edges],
                    dtype=float) if instance.graph.edges else np.zeros(0)
    group_keys = sorted(instance.groups, key=repr)
    bars = np.array([instance.config.rates[g] for g in group_keys], dtype=float)
    res = np.concatenate([
        np.maximum(0.0, edge_lhs - caps),
        np.maximum(0.0, group_lhs - bars),
        np.maximum(0.0, -lam),
    ])
    return res


def infeasibility(instance: Instance, lam: np.ndarray) -> float:
    """Average exact constraint violation per constraint (0 if none exist)."""
    res = residuals(instance, np.asarray(lam, dtype=float), relaxed=False)
    if res.size == 0:
        return 0.0
    return float(np.sum(res) / res.size)


@dataclass
class LinearProgram:
    """Inequality description ``A x <= b`` with ``x >= 0``.

    The first ``n_lambda`` columns are the rate coordinates; the remaining
    columns are auxiliary max-replacement variables. The projection of the
    feasible set onto the rate coordinates equals the exact region.
    """

    A: np.ndarray
    b: np.ndarray
    n_lambda: int
    edge_aux: dict
    source_aux: dict

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]


def lp_linearize(instance: Instance) -> LinearProgram:
    """Linearize the max-form constraint system with auxiliary variables.

    Per traversed edge ``e`` and group ``(s, t)`` an auxiliary column
    ``m[e, (s, t)]`` dominates each member rate, and the per-edge sum of
    auxiliaries is capped by the capacity. Per group, an auxiliary
    ``m'[(s, t)]`` dominates each member rate and is capped by the group
    rate. All variables are nonnegative.
    """
    n_lambda = instance.n_coords
    edge_aux: dict = {}
    for e in sorted(instance.edge_members, key=repr):
        for g in sorted(instance.edge_members[e], key=repr):
            edge_aux[(e, g)] = n_lambda + len(edge_aux)
    source_aux: dict = {}
    group_keys = sorted(instance.groups, key=repr)
    for g in group_keys:
        source_aux[g] = n_lambda + len(edge_aux) + len(source_aux)
    n_vars = n_lambda + len(edge_aux) + len(source_aux)
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    cap_map = instance.graph.capacity_map()
    for (e, g), col in edge_aux.items():
        for j in instance.edge_members[e][g]:
            row = np.zeros(n_vars)
            row[j] = 1.0
            row[col] = -1.0
            rows.append(row)
            rhs.append(0.0)
    for e in sorted(instance.edge_members, key=repr):
        row = np.zeros(n_vars)
        for g in instance.edge_members[e]:
            row[edge_aux[(e, g)]] = 1.0
        rows.append(row)
        rhs.append(float(cap_map[e]))
    for g in group_keys:
        col = source_aux[g]
        for j in instance.groups[g]:
            row = np.zeros(n_vars)
            row[j] = 1.0
            row[col] = -1.0
            rows.append(row)
            rhs.append(0.0)
        row = np.zeros(n_vars)
        row[col] = 1.0
        rows.append(row)
        rhs.append(float(instance.config.rates[g]))
    A = np.vstack(rows) if rows else np.zeros((0, n_vars))
    return LinearProgram(A=A, b=np.asarray(rhs, dtype=float), n_lambda=n_lambda,
                         edge_aux=edge_aux, source_aux=source_aux)


def snap_into_feasible(instance: Instance, lam: np.ndarray,
                       margin: float = 1e-12) -> np.ndarray:
    """Map a near-feasible rate vector into the exact region.

    Clips negatives, zeroes coordinates forced to zero by zero-capacity
    edges or zero group rates, then scales the whole vector down by the
    worst constraint overshoot. Safe because the region is down-closed.
    """
    lam = np.maximum(np.asarray(lam, dtype=float), 0.0)
    cap_map = instance.graph.capacity_map()
    for e, members in instance.edge_members.items():
        if cap_map[e] == 0.0:
            for js in members.values():
                lam[list(js)] = 0.0
    for g, js in instance.groups.items():
        if instance.config.rates[g] == 0.0:
            lam[list(js)] = 0.0
    edge_lhs, group_lhs = _group_loads(instance, lam, relaxed=False, theta=1.0)
    scale = 1.0
    for i, e in enumerate(instance.graph.edges):
        cap = cap_map[e]
        if edge_lhs[i] > 0 and cap > 0:
            scale = max(scale, edge_lhs[i] / cap)
    for i, g in enumerate(sorted(instance.groups, key=repr)):
        bar = instance.config.rates[g]
        if group_lhs[i] > 0 and bar > 0:
            scale = max(scale, group_lhs[i] / bar)
    if scale > 1.0:
        lam = lam / (scale * (1.0 + margin))
    return lam
