"""Network graphs, source/learner placement, and per-(source, type) path sets.

Graphs are directed; synthetic generators produce undirected skeletons whose
edges are doubled into antiparallel directed pairs. Routing assigns each
(source, type) pair one hop-count-shortest path to every learner of that
type, breaking ties by the lexicographically smallest node-id sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import networkx as nx

from ._rng import stream, stream_key

Node = Union[int, str]
Edge = tuple[Node, Node]

#: Default Erdos-Renyi edge probability when only a node count is given
#: (chosen so 100 nodes yield roughly 521 undirected / 1042 directed edges).
ER_DEFAULT_P = 0.1053

#: Default ring degree and shortcut probability for small-world graphs.
SW_DEFAULT_K = 4
SW_DEFAULT_P = 0.2

_MAX_CONNECT_ATTEMPTS = 200


class TopologyError(ValueError):
    """Raised for malformed graph inputs or unsatisfiable generator params."""


@dataclass
class Graph:
    """Directed graph with per-edge capacities.

    Parameters
    ----------
    nodes : tuple
        All node ids, sorted.
    edges : tuple of (u, v)
        Directed edges; no self-loops, no duplicates.
    capacities : tuple of float or None
        Capacity of each edge, aligned with ``edges``. ``None`` marks a
        capacity left unset by a loader, to be filled before solving.
    """

    nodes: tuple
    edges: tuple
    capacities: tuple

    def __post_init__(self) -> None:
        node_set = set(self.nodes)
        seen: set[Edge] = set()
        if len(self.capacities) != len(self.edges):
            raise TopologyError("capacities must align with edges")
        for (u, v), cap in zip(self.edges, self.capacities):
            if u == v:
                raise TopologyError(f"self-loop at node {u!r}")
            if (u, v) in seen:
                raise TopologyError(f"duplicate edge ({u!r}, {v!r})")
            seen.add((u, v))
            if u not in node_set or v not in node_set:
                raise TopologyError(f"edge ({u!r}, {v!r}) references unknown node")
            if cap is not None and (not math.isfinite(cap) or cap < 0):
                raise TopologyError(f"edge ({u!r}, {v!r}) has invalid capacity {cap!r}")

    def capacity_map(self) -> dict[Edge, Optional[float]]:
        """Return a dict from directed edge to capacity."""
        return dict(zip(self.edges, self.capacities))

    def out_neighbors(self) -> dict[Node, list]:
        """Return sorted adjacency lists keyed by tail node."""
        adj: dict[Node, list] = {v: [] for v in self.nodes}
        for u, v in self.edges:
            adj[u].append(v)
        for u in adj:
            adj[u].sort()
        return adj

    def in_neighbors(self) -> dict[Node, list]:
        """Return sorted reverse adjacency lists keyed by head node."""
        adj: dict[Node, list] = {v: [] for v in self.nodes}
        for u, v in self.edges:
            adj[v].append(u)
        for v in adj:
            adj[v].sort()
        return adj


@dataclass
class Placement:
    """Source and learner locations plus the learner -> type assignment."""

    sources: tuple
    learners: tuple
    learner_type: dict
    types: tuple

    def __post_init__(self) -> None:
        if set(self.learner_type) != set(self.learners):
            raise TopologyError("learner_type must cover exactly the learners")
        bad = {t for t in self.learner_type.values() if t not in set(self.types)}
        if bad:
            raise TopologyError(f"unknown learner types {sorted(bad)!r}")
        uncovered = set(self.types) - set(self.learner_type.values())
        if uncovered:
            raise TopologyError(
                f"types {sorted(uncovered, key=repr)!r} have no learner")

    def learners_of_type(self, t) -> list:
        """Return learners with type ``t`` in sorted order."""
        return sorted(l for l in self.learners if self.learner_type[l] == t)


@dataclass
class PathSet:
    """One simple path per (source, type, learner-of-that-type).

    ``paths[(s, t)]`` lists node sequences, one per learner of type ``t``
    (sorted by learner id); each starts at ``s`` and ends at its learner.
    """

    paths: dict = field(default_factory=dict)

    def terminal(self, path: tuple) -> Node:
        """Return the learner a path delivers to (its last node)."""
        return path[-1]


def _undirected_to_graph(und: "nx.Graph", seed: int, kind: str,
                         cap_range: tuple[float, float]) -> Graph:
    """Double an undirected skeleton into a directed Graph with capacities."""
    mapping = {v: i for i, v in enumerate(sorted(und.nodes(), key=repr))}
    edges: list[Edge] = []
    for a, b in und.edges():
        u, v = mapping[a], mapping[b]
        edges.append((u, v))
        edges.append((v, u))
    edges.sort()
    rng = stream(seed, "capacities", kind)
    lo, hi = cap_range
    caps = tuple(float(c) for c in rng.uniform(lo, hi, size=len(edges)))
    return Graph(nodes=tuple(range(und.number_of_nodes())),
                 edges=tuple(edges), capacities=caps)


def _balanced_tree_params(n: int) -> tuple[int, int]:
    """Find (branching, depth) with (b**(h+1)-1)/(b-1) == n, smallest b."""
    for b in range(2, n):
        total, h = 1 + b, 1
        while total < n:
            total += b ** (h + 1)
            h += 1
        if total == n:
            return b, h
    raise TopologyError(f"no balanced tree has exactly {n} nodes")


def _size_dict(kind: str, size) -> dict:
    """Normalize an integer node count into kind-specific parameters."""
    if isinstance(size, dict):
        canonical = {"er": ("nodes",), "bt": ("branching", "depth"),
                     "hc": ("dim",), "star": ("nodes",),
                     "grid": ("rows", "cols"), "sw": ("nodes",)}
        keys = canonical.get(kind)
        if keys is None:
            raise TopologyError(f"unknown topology kind {kind!r}")
        if all(k in size for k in keys):
            return dict(size)
        if "nodes" in size:                 # derive kind-specific parameters
            return _size_dict(kind, size["nodes"])
        raise TopologyError(
            f"topology size for {kind!r} needs keys {keys} or 'nodes'")
    n = int(size)
    if n <= 0:
        raise TopologyError("node count must be positive")
    if kind == "er":
        return {"nodes": n, "p": ER_DEFAULT_P}
    if kind == "bt":
        b, h = _balanced_tree_params(n)
        return {"branching": b, "depth": h}
    if kind == "hc":
        dim = n.bit_length() - 1
        if 2 ** dim != n:
            raise TopologyError(f"hypercube size must be a power of two, got {n}")
        return {"dim": dim}
    if kind == "star":
        return {"nodes": n}
    if kind == "grid":
        side = math.isqrt(n)
        if side * side != n:
            raise TopologyError(f"grid size must be a perfect square, got {n}")
        return {"rows": side, "cols": side}
    if kind == "sw":
        return {"nodes": n, "k": SW_DEFAULT_K, "p": SW_DEFAULT_P}
    raise TopologyError(f"unknown topology kind {kind!r}")


def generate(kind: str, size, seed: int,
             cap_range: tuple[float, float] = (5.0, 10.0)) -> Graph:
    """Generate a directed network of the given kind.

    Parameters
    ----------
    kind : str
        One of ``er``, ``bt``, ``hc``, ``star``, ``grid``, ``sw``.
    size : int or dict
        Node count, or kind-specific parameters (``{"branching", "depth"}``
        for ``bt``, ``{"nodes", "p"}`` for ``er``, ``{"dim"}`` for ``hc``,
        ``{"rows", "cols"}`` for ``grid``, ``{"nodes", "k", "p"}`` for ``sw``).
    seed : int
        Drives both the skeleton and the capacity draws; identical inputs
        reproduce the graph exactly.
    cap_range : (float, float)
        Interval for the uniform per-directed-edge capacity draws.

    Returns
    -------
    Graph
        Every undirected skeleton edge appears as two antiparallel directed
        edges. ``er`` skeletons are resampled deterministically until
        connected.
    """
    params = _size_dict(kind, size)
    if kind == "er":
        n, p = int(params["nodes"]), float(params["p"])
        if n <= 0:
            raise TopologyError("node count must be positive")
        for attempt in range(_MAX_CONNECT_ATTEMPTS):
            sub = stream_key(seed, "er-skeleton", attempt) % (2 ** 32)
            und = nx.gnp_random_graph(n, p, seed=sub)
            if n == 1 or nx.is_connected(und):
                break
        else:
            raise TopologyError("could not draw a connected er graph; raise p")
    elif kind == "bt":
        b, h = int(params["branching"]), int(params["depth"])
        if b < 1 or h < 1:
            raise TopologyError("balanced tree needs branching >= 1, depth >= 1")
        und = nx.balanced_tree(b, h)
    elif kind == "hc":
        dim = int(params["dim"])
        if dim < 1:
            raise TopologyError("hypercube dimension must be >= 1")
        und = nx.hypercube_graph(dim)
    elif kind == "star":
        n = int(params["nodes"])
        if n < 2:
            raise TopologyError("star needs at least 2 nodes")
        und = nx.star_graph(n - 1)
    elif kind == "grid":
        r, c = int(params["rows"]), int(params["cols"])
        if r < 1 or c < 1 or r * c < 2:
            raise TopologyError("grid needs at least 2 nodes")
        und = nx.grid_2d_graph(r, c)
    elif kind == "sw":
        n = int(params["nodes"])
        k, p = int(params.get("k", SW_DEFAULT_K)), float(params.get("p", SW_DEFAULT_P))
        if n <= k:
            raise TopologyError("small-world needs more nodes than ring degree")
        sub = stream_key(seed, "sw-skeleton") % (2 ** 32)
        und = nx.newman_watts_strogatz_graph(n, k, p, seed=sub)
    else:
        raise TopologyError(f"unknown topology kind {kind!r}")
    return _undirected_to_graph(und, seed, kind, cap_range)


def _parse_node(token: str) -> Node:
    try:
        return int(token)
    except ValueError:
        return token


def load_edge_list(text: str) -> Graph:
    """Parse an edge-list document into a directed Graph.

    Each non-comment line is ``u v [capacity]``; ``#`` starts a comment.
    Lines without a capacity yield ``None`` entries, to be filled via
    :func:`fill_capacities` before the graph is used in an instance.

    Raises
    ------
    TopologyError
        On malformed lines (with the 1-based line number), self-loops,
        duplicate edges, or negative capacities.
    """
    edges: list[Edge] = []
    caps: list[Optional[float]] = []
    seen: set[Edge] = set()
    nodes: set[Node] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) not in (2, 3):
            raise TopologyError(f"line {lineno}: expected 'u v [capacity]', got {raw!r}")
        u, v = _parse_node(tokens[0]), _parse_node(tokens[1])
        if u == v:
            raise TopologyError(f"line {lineno}: self-loop at node {u!r}")
        if (u, v) in seen:
            raise TopologyError(f"line {lineno}: duplicate edge ({u!r}, {v!r})")
        cap: Optional[float] = None
        if len(tokens) == 3:
            try:
                cap = float(tokens[2])
            except ValueError:
                raise TopologyError(f"line {lineno}: bad capacity {tokens[2]!r}") from None
            if not math.isfinite(cap) or cap < 0:
                raise TopologyError(f"line {lineno}: negative or non-finite capacity {cap}")
        seen.add((u, v))
        edges.append((u, v))
        caps.append(cap)
        nodes.update((u, v))
    return Graph(nodes=tuple(sorted(nodes, key=repr)), edges=tuple(edges),
                 capacities=tuple(caps))


def fill_capacities(graph: Graph, cap_range: tuple[float, float], seed: int) -> Graph:
    """Return a copy of ``graph`` with every missing capacity drawn u.a.r."""
    rng = stream(seed, "fill-capacities")
    lo, hi = cap_range
    caps = tuple(float(rng.uniform(lo, hi)) if c is None else c
                 for c in graph.capacities)
    return Graph(nodes=graph.nodes, edges=graph.edges, capacities=caps)


def _lex_shortest_path(adj: dict, dist_to_goal: dict, start: Node, goal: Node) -> tuple:
    """Walk the lexicographically smallest hop-count-shortest path."""
    path = [start]
    node = start
    while node != goal:
        step = dist_to_goal[node] - 1
        nxt = min(w for w in adj[node] if dist_to_goal.get(w, -1) == step)
        path.append(nxt)
        node = nxt
    return tuple(path)


def _bfs_dist(adj: dict, root: Node) -> dict:
    dist = {root: 0}
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    nxt.append(w)
        frontier = nxt
    return dist


def place_and_route(graph: Graph, num_sources: int, num_learners: int,
                    num_types: int, seed: int) -> tuple[Placement, PathSet]:
    """Draw sources/learners u.a.r. and route one shortest path per pair.

    Sources and learners are drawn without replacement from a single node
    permutation (so they are disjoint). Learner types cycle over
    ``range(num_types)`` and are then shuffled, guaranteeing every type at
    least one learner whenever ``num_learners >= num_types``.

    Returns
    -------
    (Placement, PathSet)
        ``paths[(s, t)]`` holds one path per learner of type ``t``, ordered
        by learner id; ties among equal-length paths go to the
        lexicographically smallest node sequence.

    Raises
    ------
    TopologyError
        If placement does not fit in the graph or a learner is unreachable
        from some source.
    """
    n = len(graph.nodes)
    if num_sources < 1 or num_learners < 1 or num_types < 1:
        raise TopologyError("need at least one source, learner, and type")
    if num_sources + num_learners > n:
        raise TopologyError(
            f"placement needs {num_sources + num_learners} distinct nodes, graph has {n}")
    rng = stream(seed, "placement")
    perm = [graph.nodes[i] for i in rng.permutation(n)]
    sources = tuple(sorted(perm[:num_sources], key=repr))
    learners = tuple(sorted(perm[num_sources:num_sources + num_learners], key=repr))
    types = tuple(range(num_types))
    cycled = [types[i % num_types] for i in range(num_learners)]
    order = stream(seed, "learner-types").permutation(num_learners)
    learner_type = {l: cycled[order[i]] for i, l in enumerate(learners)}
    placement = Placement(sources=sources, learners=learners,
                          learner_type=learner_type, types=types)

    adj = graph.out_neighbors()
    radj = graph.in_neighbors()
    paths: dict = {}
    for l in learners:
        dist_to_l = _bfs_dist(radj, l)
        for s in sources:
            if s not in dist_to_l:
                raise TopologyError(f"learner {l!r} unreachable from source {s!r}")
            t = learner_type[l]
            paths.setdefault((s, t), []).append(
                _lex_shortest_path(adj, dist_to_l, s, l))
    ordered = {key: tuple(sorted(val, key=lambda p: repr(p[-1])))
               for key, val in sorted(paths.items(), key=repr)}
    return placement, PathSet(paths=ordered)
