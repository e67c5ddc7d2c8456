"""Distributed primal-dual solvers on the smoothed feasible region.

The exact per-edge and per-group constraints use max terms, which do not
decompose across network entities. These solvers replace each max with a
theta-norm upper bound (theta = 10 by default) and run a synchronous
primal-dual iteration in which every update depends only on information a
real deployment could deliver along the paths themselves:

* sources hold the rates of their own paths and the duals of their own
  group constraints,
* edges hold one dual per edge and aggregate only rates of paths that
  traverse them,
* learners observe only their incoming rates and send feedback upstream.

Two interchangeable engines implement the same arithmetic:

* ``mode="fast"`` — vectorized with precomputed incidence index maps that
  are derived solely from path adjacency, so locality holds by
  construction;
* ``mode="entities"`` — an explicit simulation with source/edge/learner
  node objects exchanging payload messages through a :class:`Router` that
  rejects any delivery not matching the declared adjacency, with an
  optional :class:`LocalityAudit` log of every cross-entity read.

Both engines are deterministic (no randomness inside the iteration) and
produce identical floating-point trajectories, which the tests assert.

Each round runs five synchronous phases from a single start-of-round
snapshot of the primal rates:

1. sources advertise per-path rates downstream,
2. edges aggregate per-group traffic and evaluate their constraint slack,
3. learners send feedback messages upstream collecting per-edge state,
4. edges update their duals,
5. sources update group/nonnegativity duals and the primal rates.

The penalized engine (used by the Frank-Wolfe style outer loop and the
throughput baseline) exponentiates constraint slacks; the plain engine
(used by projected gradient and the fairness baseline) uses the slacks
directly. Dual increments pass through a positive projection: the raw
derivative is kept where the dual is strictly positive and clipped at
zero otherwise, and duals never go negative.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .gradient import EstimatorParams, estimate_gradient
from .instance import Instance, RateAllocation

PRIMAL_FLOOR = 1e-6
_EXP_GUARD = 700.0


class StepsizeInstabilityError(RuntimeError):
    """Raised when the primal-dual iteration overflows (stepsizes too large)."""


class LocalityError(RuntimeError):
    """Raised when a message or read violates path adjacency."""


@dataclass(frozen=True)
class Stepsizes:
    """Stepsizes of the primal-dual iteration.

    ``primal`` scales rate updates; ``edge``, ``group`` and ``nonneg``
    scale the edge-capacity, group-rate and nonnegativity dual updates.
    """

    primal: float = 0.01
    edge: float = 0.01
    group: float = 0.01
    nonneg: float = 0.01

    def __post_init__(self) -> None:
        for name in ("primal", "edge", "group", "nonneg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"stepsize {name} must be > 0")


@dataclass
class LocalityAudit:
    """Log of cross-entity reads performed by the entity engine.

    Every entry is ``(round, reader, datum)`` where ``reader`` identifies
    the entity and ``datum`` describes the message field it consumed.
    ``violations`` stays empty unless a read outside the declared
    adjacency is attempted (the Router additionally raises on such reads).
    """

    reads: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    def record(self, round_idx: int, reader: str, datum: tuple) -> None:
        self.reads.append((round_idx, reader, datum))

    def flag(self, round_idx: int, reader: str, datum: tuple) -> None:
        self.violations.append((round_idx, reader, datum))

    @property
    def clean(self) -> bool:
        return not self.violations


@dataclass
class PDState:
    """Final state of a primal-dual run."""

    v: np.ndarray
    q: np.ndarray
    r: np.ndarray
    u: np.ndarray
    rounds: int
    edges: tuple
    groups: tuple


# ---------------------------------------------------------------------------
# shared structure and arithmetic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Structure:
    """Index maps derived from path adjacency (traffic-carrying only)."""

    n_coords: int
    coord_source: tuple
    coord_learner: tuple
    coord_group: np.ndarray          # group index per coordinate
    coord_edges: tuple               # tuple of edge-index tuples, path order
    edges: tuple                     # traffic edges, sorted by repr
    caps: np.ndarray
    groups: tuple                    # group keys, sorted by repr
    group_rate: np.ndarray
    group_members: tuple             # ascending coordinate tuples
    eg_edge: np.ndarray              # edge index per (edge, group) pair
    eg_group: tuple                  # group key per (edge, group) pair
    eg_members: tuple                # ascending coordinate tuples
    eg_members_flat: np.ndarray
    eg_offsets: np.ndarray
    edge_offsets: np.ndarray         # start of each edge's eg-pair range
    group_members_flat: np.ndarray
    group_offsets: np.ndarray
    inc_coord: np.ndarray            # coordinate-major, path-edge order
    inc_eg: np.ndarray
    learners: tuple                  # sorted by repr
    learner_coords: tuple            # ascending coordinate tuples
    sources: tuple                   # sorted by repr
    source_coords: tuple
    source_groups: tuple             # group-index tuples per source


def _build_structure(instance: Instance) -> _Structure:
    groups = tuple(sorted(instance.groups, key=repr))
    group_index = {g: i for i, g in enumerate(groups)}
    group_members = tuple(tuple(sorted(instance.groups[g])) for g in groups)
    group_rate = np.array([instance.config.rates[g] for g in groups])
    coord_group = np.empty(instance.n_coords, dtype=np.intp)
    for g, members in zip(groups, group_members):
        for j in members:
            coord_group[j] = group_index[g]

    edges = tuple(sorted(instance.edge_members, key=repr))
    edge_index = {e: i for i, e in enumerate(edges)}
    cap_map = instance.graph.capacity_map()
    caps = np.array([cap_map[e] for e in edges])

    eg_edge, eg_group, eg_members = [], [], []
    edge_offsets = []
    eg_index: dict = {}
    for ei, e in enumerate(edges):
        edge_offsets.append(len(eg_edge))
        for g in sorted(instance.edge_members[e], key=repr):
            eg_index[(ei, g)] = len(eg_edge)
            eg_edge.append(ei)
            eg_group.append(g)
            eg_members.append(tuple(sorted(instance.edge_members[e][g])))

    coord_edges = []
    inc_coord, inc_eg = [], []
    for j, coord in enumerate(instance.coords):
        path_eg = tuple(edge_index[e] for e in coord.edges)
        coord_edges.append(path_eg)
        g = (coord.source, coord.type_id)
        for ei in path_eg:
            inc_coord.append(j)
            inc_eg.append(eg_index[(ei, g)])

    learners = tuple(sorted(instance.placement.learners, key=repr))
    learner_coords = tuple(
        tuple(j for _s, j in instance.learner_feeds[l]) for l in learners)
    sources = tuple(sorted(instance.placement.sources, key=repr))
    source_coords = tuple(
        tuple(j for j, c in enumerate(instance.coords) if c.source == s)
        for s in sources)
    source_groups = tuple(
        tuple(gi for gi, g in enumerate(groups) if g[0] == s) for s in sources)

    def _flat(parts):
        flat = np.array([j for part in parts for j in part], dtype=np.intp)
        offsets = np.zeros(len(parts), dtype=np.intp)
        pos = 0
        for i, part in enumerate(parts):
            offsets[i] = pos
            pos += len(part)
        return flat, offsets

    eg_flat, eg_off = _flat(eg_members)
    gm_flat, gm_off = _flat(group_members)
    return _Structure(
        n_coords=instance.n_coords,
        coord_source=tuple(c.source for c in instance.coords),
        coord_learner=tuple(c.learner for c in instance.coords),
        coord_group=coord_group,
        coord_edges=tuple(coord_edges),
        edges=edges, caps=caps,
        groups=groups, group_rate=group_rate, group_members=group_members,
        eg_edge=np.array(eg_edge, dtype=np.intp), eg_group=tuple(eg_group),
        eg_members=tuple(eg_members),
        eg_members_flat=eg_flat, eg_offsets=eg_off,
        edge_offsets=np.array(edge_offsets, dtype=np.intp),
        group_members_flat=gm_flat, group_offsets=gm_off,
        inc_coord=np.array(inc_coord, dtype=np.intp),
        inc_eg=np.array(inc_eg, dtype=np.intp),
        learners=learners, learner_coords=learner_coords,
        sources=sources, source_coords=source_coords,
        source_groups=source_groups)


@dataclass(frozen=True)
class _Objective:
    """Per-round primal gradient of the inner objective."""

    kind: str                       # "linear" | "projection" | "fair"
    gradient: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    floor: float = PRIMAL_FLOOR


def _dual_increment(value, slack):
    """Positive projection of a dual derivative: raw where the dual is
    strictly positive, clipped at zero otherwise."""
    return np.where(value > 0, slack, np.maximum(slack, 0.0))


def _segment_sums(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    if offsets.size == 0:
        return np.zeros(0)
    return np.add.reduceat(values, offsets)


# ---------------------------------------------------------------------------
# fast engine
# ---------------------------------------------------------------------------


def _fair_gradient_fast(structure: _Structure, v: np.ndarray,
                        floor: float) -> np.ndarray:
    intake = np.zeros(len(structure.learners))
    learner_of = np.empty(structure.n_coords, dtype=np.intp)
    for li, coords in enumerate(structure.learner_coords):
        for j in coords:
            learner_of[j] = li
    np.add.at(intake, learner_of, v)
    eff = np.maximum(intake, floor)
    return 1.0 / eff[learner_of] ** 2


def _objective_gradient_fast(structure: _Structure, objective: _Objective,
                             v: np.ndarray) -> np.ndarray:
    if objective.kind == "linear":
        return objective.gradient
    if objective.kind == "projection":
        return -2.0 * (v - objective.target)
    if objective.kind == "fair":
        return _fair_gradient_fast(structure, v, objective.floor)
    raise ValueError(f"unknown objective kind {objective.kind!r}")


def _run_fast(structure: _Structure, objective: _Objective, theta: float,
              rounds: int, steps: Stepsizes, penalized: bool, v0: np.ndarray,
              trace: Optional[Callable] = None) -> PDState:
    v = v0.copy()
    q = np.zeros(len(structure.edges))
    r = np.zeros(len(structure.groups))
    u = np.zeros(structure.n_coords)
    inc_edge = structure.eg_edge[structure.inc_eg]
    for t in range(rounds):
        v_theta = v ** theta
        agg = _segment_sums(v_theta[structure.eg_members_flat],
                            structure.eg_offsets)
        norm_eg = agg ** (1.0 / theta)
        edge_load = _segment_sums(norm_eg, structure.edge_offsets)
        ge = edge_load - structure.caps
        gsum = _segment_sums(v_theta[structure.group_members_flat],
                             structure.group_offsets)
        norm_g = gsum ** (1.0 / theta)
        gst = norm_g - structure.group_rate
        if penalized:
            worst = max(float(np.max(ge, initial=-np.inf)),
                        float(np.max(gst, initial=-np.inf)))
            if worst > _EXP_GUARD:
                raise StepsizeInstabilityError(
                    f"constraint slack {worst:.3g} overflows exp at round {t}; "
                    "reduce the stepsizes")
            expge = np.exp(ge)
            expgst = np.exp(gst)
            edge_scale = q * expge
            group_scale = r * expgst
            dq, dr, du = expge - 1.0, expgst - 1.0, np.exp(-v) - 1.0
            u_term = u * np.exp(-v)
        else:
            edge_scale = q
            group_scale = r
            dq, dr, du = ge, gst, -v
            u_term = u
        contrib = (edge_scale[inc_edge]
                   * (v[structure.inc_coord] / norm_eg[structure.inc_eg])
                   ** (theta - 1.0))
        edge_pull = np.zeros(structure.n_coords)
        np.add.at(edge_pull, structure.inc_coord, contrib)
        group_pull = (group_scale[structure.coord_group]
                      * (v / norm_g[structure.coord_group]) ** (theta - 1.0))
        grad = _objective_gradient_fast(structure, objective, v)
        v_new = np.maximum(
            v + steps.primal * (grad - edge_pull - group_pull + u_term),
            PRIMAL_FLOOR)
        q = np.maximum(q + steps.edge * _dual_increment(q, dq), 0.0)
        r = np.maximum(r + steps.group * _dual_increment(r, dr), 0.0)
        u = np.maximum(u + steps.nonneg * _dual_increment(u, du), 0.0)
        v = v_new
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(q))
                and np.all(np.isfinite(r)) and np.all(np.isfinite(u))):
            raise StepsizeInstabilityError(
                f"non-finite iterate at round {t}; reduce the stepsizes")
        if trace is not None:
            trace(t, _trace_rows(structure, v, q, r, u))
    return PDState(v=v, q=q, r=r, u=u, rounds=rounds,
                   edges=structure.edges, groups=structure.groups)


def _trace_rows(structure: _Structure, v, q, r, u) -> list:
    rows = []
    for j in range(structure.n_coords):
        rows.append((f"path:{j}", "v", float(v[j])))
        rows.append((f"path:{j}", "u", float(u[j])))
    for ei, e in enumerate(structure.edges):
        rows.append((f"edge:{e}", "q", float(q[ei])))
    for gi, g in enumerate(structure.groups):
        rows.append((f"group:{g}", "r", float(r[gi])))
    return rows


# ---------------------------------------------------------------------------
# entity engine
# ---------------------------------------------------------------------------


class _EdgeNode:
    """Holds one capacity dual and per-group aggregates of fetched rates."""

    def __init__(self, ei: int, edge, cap: float, members: dict) -> None:
        self.ei = ei
        self.edge = edge
        self.cap = cap
        self.groups = tuple(sorted(members, key=repr))
        self.members = {g: tuple(sorted(members[g])) for g in self.groups}
        self._allowed = {j for js in self.members.values() for j in js}
        self.q = 0.0
        self.rates: dict = {}
        self.agg: dict = {}
        self.ge = 0.0
        self.expge = None

    def receive_rate(self, rnd: int, j: int, value, audit: Optional[LocalityAudit]):
        if j not in self._allowed:
            if audit is not None:
                audit.flag(rnd, f"edge:{self.edge}", ("path-rate", j))
            raise LocalityError(
                f"edge {self.edge} received rate for non-traversing path {j}")
        self.rates[j] = value
        if audit is not None:
            audit.record(rnd, f"edge:{self.edge}", ("path-rate", j))

    def aggregate(self, theta: float, penalized: bool) -> None:
        load = 0.0
        for g in self.groups:
            acc = 0.0
            for j in self.members[g]:
                acc = acc + self.rates[j] ** theta
            self.agg[g] = acc
            load = load + acc ** (1.0 / theta)
        self.ge = load - self.cap
        if penalized:
            if self.ge > _EXP_GUARD:
                raise StepsizeInstabilityError(
                    f"edge {self.edge} slack {self.ge:.3g} overflows exp; "
                    "reduce the stepsizes")
            self.expge = np.exp(self.ge)

    def feedback(self, rnd: int, j: int, group,
                 audit: Optional[LocalityAudit]) -> tuple:
        if j not in self._allowed or group not in self.members:
            if audit is not None:
                audit.flag(rnd, f"edge:{self.edge}", ("feedback", j))
            raise LocalityError(
                f"edge {self.edge} asked for feedback on foreign path {j}")
        return (self.q, self.agg[group], self.ge, self.expge)

    def update_dual(self, step: float, penalized: bool) -> None:
        slack = (self.expge - 1.0) if penalized else self.ge
        self.q = max(self.q + step * float(_dual_increment(self.q, slack)), 0.0)


class _LearnerNode:
    """Observes incoming per-path rates and issues upstream feedback."""

    def __init__(self, node, coords: tuple) -> None:
        self.node = node
        self.coords = coords
        self.rates: dict = {}

    def receive_rate(self, rnd: int, j: int, value,
                     audit: Optional[LocalityAudit]) -> None:
        if j not in self.coords:
            if audit is not None:
                audit.flag(rnd, f"learner:{self.node}", ("path-rate", j))
            raise LocalityError(
                f"learner {self.node} received rate for foreign path {j}")
        self.rates[j] = value
        if audit is not None:
            audit.record(rnd, f"learner:{self.node}", ("path-rate", j))

    def fair_gradient(self, floor: float) -> dict:
        intake = 0.0
        for j in self.coords:
            intake = intake + self.rates[j]
        coeff = 1.0 / max(intake, floor) ** 2
        return {j: coeff for j in self.coords}


class _SourceNode:
    """Owns per-path rates, group duals and nonnegativity duals."""

    def __init__(self, node, coords: tuple, group_ids: tuple,
                 group_keys: tuple, group_rates: tuple,
                 group_coords: tuple, v0: float) -> None:
        self.node = node
        self.coords = coords
        self.group_ids = group_ids
        self.group_keys = group_keys
        self.group_rates = dict(zip(group_ids, group_rates))
        self.group_coords = dict(zip(group_ids, group_coords))
        self.v = {j: v0 for j in coords}
        self.u = {j: 0.0 for j in coords}
        self.r = {gi: 0.0 for gi in group_ids}
        self.feedback: dict = {}
        self.grad_msgs: dict = {}

    def receive_feedback(self, rnd: int, j: int, hops: list,
                         audit: Optional[LocalityAudit]) -> None:
        if j not in self.v:
            if audit is not None:
                audit.flag(rnd, f"source:{self.node}", ("feedback", j))
            raise LocalityError(
                f"source {self.node} received feedback for foreign path {j}")
        self.feedback[j] = hops
        if audit is not None:
            audit.record(rnd, f"source:{self.node}", ("feedback", j))

    def receive_gradient(self, rnd: int, j: int, value: float,
                         audit: Optional[LocalityAudit]) -> None:
        if j not in self.v:
            if audit is not None:
                audit.flag(rnd, f"source:{self.node}", ("gradient", j))
            raise LocalityError(
                f"source {self.node} received gradient for foreign path {j}")
        self.grad_msgs[j] = value
        if audit is not None:
            audit.record(rnd, f"source:{self.node}", ("gradient", j))

    def update(self, theta: float, steps: Stepsizes, penalized: bool,
               objective: _Objective) -> None:
        norms, slacks = {}, {}
        for gi in self.group_ids:
            acc = 0.0
            for j in self.group_coords[gi]:
                acc = acc + self.v[j] ** theta
            norms[gi] = acc ** (1.0 / theta)
            slack = norms[gi] - self.group_rates[gi]
            if penalized and slack > _EXP_GUARD:
                raise StepsizeInstabilityError(
                    f"group {self.group_keys[self.group_ids.index(gi)]} slack "
                    f"{slack:.3g} overflows exp; reduce the stepsizes")
            slacks[gi] = slack
        coord_group = {j: gi for gi in self.group_ids
                       for j in self.group_coords[gi]}
        new_v = {}
        for j in self.coords:
            vj = self.v[j]
            edge_pull = 0.0
            for (q_e, agg, ge, expge) in self.feedback[j]:
                scale = q_e * expge if penalized else q_e
                edge_pull = edge_pull + scale * (vj / agg ** (1.0 / theta)) \
                    ** (theta - 1.0)
            gi = coord_group[j]
            group_scale = (self.r[gi] * np.exp(slacks[gi]) if penalized
                           else self.r[gi])
            group_pull = group_scale * (vj / norms[gi]) ** (theta - 1.0)
            if objective.kind == "linear" or objective.kind == "fair":
                grad = self.grad_msgs[j]
            elif objective.kind == "projection":
                grad = -2.0 * (vj - objective.target[j])
            else:
                raise ValueError(f"unknown objective kind {objective.kind!r}")
            u_term = self.u[j] * np.exp(-vj) if penalized else self.u[j]
            new_v[j] = max(
                vj + steps.primal * (grad - edge_pull - group_pull + u_term),
                PRIMAL_FLOOR)
        for gi in self.group_ids:
            slack = (np.exp(slacks[gi]) - 1.0) if penalized else slacks[gi]
            self.r[gi] = max(
                self.r[gi]
                + steps.group * float(_dual_increment(self.r[gi], slack)), 0.0)
        for j in self.coords:
            slack = ((np.exp(-self.v[j]) - 1.0) if penalized else -self.v[j])
            self.u[j] = max(
                self.u[j]
                + steps.nonneg * float(_dual_increment(self.u[j], slack)), 0.0)
        self.v = new_v


class Router:
    """Delivers payloads strictly along declared path adjacency."""

    def __init__(self, structure: _Structure, sources: dict, edges: dict,
                 learners: dict, audit: Optional[LocalityAudit]) -> None:
        self._structure = structure
        self._sources = sources
        self._edges = edges
        self._learners = learners
        self._audit = audit

    def advertise_rate(self, rnd: int, sender, j: int, value) -> None:
        st = self._structure
        if st.coord_source[j] != sender:
            if self._audit is not None:
                self._audit.flag(rnd, f"source:{sender}", ("advertise", j))
            raise LocalityError(
                f"source {sender} cannot advertise foreign path {j}")
        for ei in st.coord_edges[j]:
            self._edges[ei].receive_rate(rnd, j, value, self._audit)
        self._learners[st.coord_learner[j]].receive_rate(
            rnd, j, value, self._audit)

    def request_feedback(self, rnd: int, sender, j: int) -> None:
        st = self._structure
        if st.coord_learner[j] != sender:
            if self._audit is not None:
                self._audit.flag(rnd, f"learner:{sender}", ("feedback", j))
            raise LocalityError(
                f"learner {sender} cannot request feedback for foreign path {j}")
        group = st.groups[st.coord_group[j]]
        hops = []
        for ei in reversed(st.coord_edges[j]):
            hops.append(self._edges[ei].feedback(rnd, j, group, self._audit))
        hops.reverse()
        self._sources[st.coord_source[j]].receive_feedback(
            rnd, j, hops, self._audit)

    def send_gradient(self, rnd: int, sender, j: int, value: float) -> None:
        st = self._structure
        if st.coord_learner[j] != sender:
            if self._audit is not None:
                self._audit.flag(rnd, f"learner:{sender}", ("gradient", j))
            raise LocalityError(
                f"learner {sender} cannot send gradient for foreign path {j}")
        self._sources[st.coord_source[j]].receive_gradient(
            rnd, j, value, self._audit)


def _run_entities(structure: _Structure, objective: _Objective, theta: float,
                  rounds: int, steps: Stepsizes, penalized: bool,
                  v0: np.ndarray, audit: Optional[LocalityAudit] = None,
                  trace: Optional[Callable] = None) -> PDState:
    instance_edges = {ei: _EdgeNode(ei, e, float(structure.caps[ei]),
                                    {g: list(structure.eg_members[k])
                                     for k, g in enumerate(structure.eg_group)
                                     if structure.eg_edge[k] == ei})
                      for ei, e in enumerate(structure.edges)}
    learners = {l: _LearnerNode(l, structure.learner_coords[li])
                for li, l in enumerate(structure.learners)}
    sources = {}
    for si, s in enumerate(structure.sources):
        gids = structure.source_groups[si]
        sources[s] = _SourceNode(
            s, structure.source_coords[si], gids,
            tuple(structure.groups[gi] for gi in gids),
            tuple(float(structure.group_rate[gi]) for gi in gids),
            tuple(structure.group_members[gi] for gi in gids),
            v0=0.0)
        for j in structure.source_coords[si]:
            sources[s].v[j] = float(v0[j])
    router = Router(structure, sources, instance_edges, learners, audit)

    if objective.kind == "linear":
        # learners deliver the utility-gradient coordinates of their own
        # incoming paths before the iteration starts
        for li, l in enumerate(structure.learners):
            for j in structure.learner_coords[li]:
                router.send_gradient(-1, l, j, float(objective.gradient[j]))

    for t in range(rounds):
        for s in structure.sources:                       # phase 1
            src = sources[s]
            for j in src.coords:
                router.advertise_rate(t, s, j, src.v[j])
        for ei in range(len(structure.edges)):            # phase 2
            instance_edges[ei].aggregate(theta, penalized)
        for li, l in enumerate(structure.learners):       # phase 3
            node = learners[l]
            if objective.kind == "fair":
                grads = node.fair_gradient(objective.floor)
                for j in structure.learner_coords[li]:
                    router.send_gradient(t, l, j, grads[j])
            for j in structure.learner_coords[li]:
                router.request_feedback(t, l, j)
        for ei in range(len(structure.edges)):            # phase 4
            instance_edges[ei].update_dual(steps.edge, penalized)
        for s in structure.sources:                       # phase 5
            sources[s].update(theta, steps, penalized, objective)

        v = np.array([sources[structure.coord_source[j]].v[j]
                      for j in range(structure.n_coords)])
        q = np.array([instance_edges[ei].q
                      for ei in range(len(structure.edges))])
        r = np.zeros(len(structure.groups))
        u = np.zeros(structure.n_coords)
        for s in structure.sources:
            for gi, val in sources[s].r.items():
                r[gi] = val
            for j, val in sources[s].u.items():
                u[j] = val
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(q))
                and np.all(np.isfinite(r)) and np.all(np.isfinite(u))):
            raise StepsizeInstabilityError(
                f"non-finite iterate at round {t}; reduce the stepsizes")
        if trace is not None:
            trace(t, _trace_rows(structure, v, q, r, u))
    return PDState(v=v, q=q, r=r, u=u, rounds=rounds,
                   edges=structure.edges, groups=structure.groups)


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def _run_engine(instance: Instance, objective: _Objective, theta: float,
                rounds: int, stepsizes: Optional[Stepsizes], penalized: bool,
                v0_value: float, mode: str,
                audit: Optional[LocalityAudit] = None,
                trace: Optional[Callable] = None) -> PDState:
    if theta < 1:
        raise ValueError("theta must be >= 1")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    steps = stepsizes or Stepsizes()
    structure = _build_structure(instance)
    v0 = np.full(structure.n_coords, v0_value)
    if mode == "fast":
        return _run_fast(structure, objective, theta, rounds, steps,
                         penalized, v0, trace=trace)
    if mode == "entities":
        return _run_entities(structure, objective, theta, rounds, steps,
                             penalized, v0, audit=audit, trace=trace)
    raise ValueError(f"unknown engine mode {mode!r}")


def pd_inner(instance: Instance, lam: Optional[np.ndarray],
             gradient: np.ndarray, theta: float = 10.0, rounds: int = 1000,
             stepsizes: Optional[Stepsizes] = None, mode: str = "fast",
             audit: Optional[LocalityAudit] = None,
             trace: Optional[Callable] = None,
             return_state: bool = False):
    """Penalized primal-dual maximization of ``gradient . v`` over the
    smoothed region.

    ``lam`` (the outer iterate at which the gradient was estimated) does
    not enter the iteration itself; it is accepted for interface symmetry
    with the outer loops. Returns the final rate vector, or the full
    :class:`PDState` when ``return_state`` is set.
    """
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != (instance.n_coords,):
        raise ValueError("gradient length must match the coordinate count")
    state = _run_engine(instance, _Objective(kind="linear", gradient=gradient),
                        theta, rounds, stepsizes, penalized=True,
                        v0_value=PRIMAL_FLOOR, mode=mode, audit=audit,
                        trace=trace)
    return state if return_state else state.v


def dfw_solve(instance: Instance, params: Optional[EstimatorParams] = None,
              K: int = 50, theta: float = 10.0, rounds: int = 1000,
              stepsizes: Optional[Stepsizes] = None, mode: str = "fast",
              audit: Optional[LocalityAudit] = None,
              trace: Optional[Callable] = None):
    """Distributed Frank-Wolfe variant: each outer step solves the inner
    linear problem with the penalized primal-dual engine."""
    from .solvers_central import SolverTrace
    if K < 1:
        raise ValueError("K must be >= 1")
    params = params or EstimatorParams()
    delta = 1.0 / K
    lam = instance.zero_rates()
    remaining = 1.0
    solver_trace = SolverTrace(algorithm="dfw")
    k = 0
    while remaining > 0.0:
        tic = time.perf_counter()
        est = estimate_gradient(instance, lam,
                                replace(params, iteration=params.iteration + k))
        v = pd_inner(instance, lam, est.g, theta=theta, rounds=rounds,
                     stepsizes=stepsizes, mode=mode, audit=audit, trace=trace)
        gamma = min(delta, remaining)
        lam = lam + gamma * v
        remaining -= gamma
        solver_trace.add(k=k, gamma=gamma, direction=v.copy(),
                         grad_max=float(np.max(est.g, initial=0.0)),
                         n_prime=est.n_prime,
                         elapsed_s=time.perf_counter() - tic)
        k += 1
    return RateAllocation(instance, lam), solver_trace


def dpga_solve(instance: Instance, params: Optional[EstimatorParams] = None,
               K: int = 50, gamma: Optional[float] = None,
               theta: float = 10.0, rounds: int = 1000,
               stepsizes: Optional[Stepsizes] = None, mode: str = "fast",
               audit: Optional[LocalityAudit] = None,
               trace: Optional[Callable] = None):
    """Distributed projected gradient ascent: the Euclidean projection onto
    the smoothed region is itself computed by the primal-dual engine."""
    from .solvers_central import SolverTrace
    if K < 1:
        raise ValueError("K must be >= 1")
    params = params or EstimatorParams()
    if gamma is None:
        gamma = 0.02 * max(instance.config.rates.values(), default=1.0)
    if gamma <= 0:
        raise ValueError("stepsize gamma must be > 0")
    lam = instance.zero_rates()
    solver_trace = SolverTrace(algorithm="dpga")
    for k in range(K):
        tic = time.perf_counter()
        est = estimate_gradient(instance, lam,
                                replace(params, iteration=params.iteration + k))
        target = lam + gamma * est.g
        state = _run_engine(
            instance, _Objective(kind="projection", target=target),
            theta, rounds, stepsizes, penalized=False,
            v0_value=PRIMAL_FLOOR, mode=mode, audit=audit, trace=trace)
        lam = state.v
        solver_trace.add(k=k, gamma=gamma,
                         grad_max=float(np.max(est.g, initial=0.0)),
                         n_prime=est.n_prime,
                         elapsed_s=time.perf_counter() - tic)
    return RateAllocation(instance, lam), solver_trace


def dmax_solve(instance: Instance, objective: str = "tp", theta: float = 10.0,
               rounds: int = 1000, stepsizes: Optional[Stepsizes] = None,
               mode: str = "fast", audit: Optional[LocalityAudit] = None,
               trace: Optional[Callable] = None) -> RateAllocation:
    """Distributed baselines on the smoothed region.

    ``objective="tp"`` maximizes aggregate rate with the penalized engine;
    ``objective="fair"`` maximizes the alpha-fair utility (alpha = 2) with
    the plain engine, learners feeding per-round gradient messages. The
    fairness run starts from 1.0 rather than the floor so the initial
    intake is far from the pole of the fairness objective.
    """
    if objective == "tp":
        state = _run_engine(
            instance,
            _Objective(kind="linear", gradient=np.ones(instance.n_coords)),
            theta, rounds, stepsizes, penalized=True,
            v0_value=PRIMAL_FLOOR, mode=mode, audit=audit, trace=trace)
    elif objective == "fair":
        state = _run_engine(
            instance, _Objective(kind="fair"),
            theta, rounds, stepsizes, penalized=False,
            v0_value=1.0, mode=mode, audit=audit, trace=trace)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return RateAllocation(instance, state.v)
