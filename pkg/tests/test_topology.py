"""Graph generation, edge-list parsing, placement, and routing."""

import networkx as nx
import numpy as np
import pytest

from expnet.topology import (Graph, TopologyError, fill_capacities, generate,
                             load_edge_list, place_and_route)


def _as_nx(graph):
    g = nx.DiGraph()
    g.add_nodes_from(graph.nodes)
    g.add_edges_from(graph.edges)
    return g


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def test_generate_er_connected_and_doubled():
    g = generate("er", {"nodes": 30, "p": 0.15}, seed=2)
    assert len(g.nodes) == 30
    edge_set = set(g.edges)
    assert all((v, u) in edge_set for (u, v) in edge_set)
    assert nx.is_strongly_connected(_as_nx(g))
    assert all(5.0 <= c <= 10.0 for c in g.capacities)


def test_generate_deterministic():
    a = generate("er", {"nodes": 25, "p": 0.2}, seed=5)
    b = generate("er", {"nodes": 25, "p": 0.2}, seed=5)
    assert a.edges == b.edges and a.capacities == b.capacities
    c = generate("er", {"nodes": 25, "p": 0.2}, seed=6)
    assert a.edges != c.edges or a.capacities != c.capacities


@pytest.mark.parametrize("kind,size,nodes,directed_edges", [
    ("bt", {"branching": 4, "depth": 4}, 341, 680),
    ("bt", {"branching": 2, "depth": 3}, 15, 28),
    ("hc", {"dim": 7}, 128, 896),
    ("hc", {"dim": 4}, 16, 64),
    ("star", {"nodes": 100}, 100, 198),
    ("grid", {"rows": 10, "cols": 10}, 100, 360),
    ("grid", {"rows": 4, "cols": 4}, 16, 48),
])
def test_generate_counts(kind, size, nodes, directed_edges):
    g = generate(kind, size, seed=1)
    assert len(g.nodes) == nodes
    assert len(g.edges) == directed_edges


def test_generate_sw():
    g = generate("sw", {"nodes": 40, "k": 4, "p": 0.2}, seed=3)
    assert len(g.nodes) == 40
    # ring edges (n*k/2 undirected) are always present; rewiring only adds
    assert len(g.edges) >= 40 * 4
    assert nx.is_strongly_connected(_as_nx(g))


def test_generate_bad_params():
    with pytest.raises(TopologyError):
        generate("unknown", {"nodes": 10}, seed=0)
    with pytest.raises(TopologyError):
        generate("hc", {"nodes": 12}, seed=0)  # not a power of two
    with pytest.raises(TopologyError):
        generate("grid", {"nodes": 13}, seed=0)  # not a perfect square


def test_graph_validation():
    with pytest.raises(TopologyError):
        Graph(nodes=(0, 1), edges=((0, 0),), capacities=(1.0,))
    with pytest.raises(TopologyError):
        Graph(nodes=(0, 1), edges=((0, 1), (0, 1)), capacities=(1.0, 1.0))
    with pytest.raises(TopologyError):
        Graph(nodes=(0, 1), edges=((0, 2),), capacities=(1.0,))
    with pytest.raises(TopologyError):
        Graph(nodes=(0, 1), edges=((0, 1),), capacities=(-2.0,))
    with pytest.raises(TopologyError):
        Graph(nodes=(0, 1), edges=((0, 1),), capacities=(1.0, 2.0))


# ---------------------------------------------------------------------------
# edge lists
# ---------------------------------------------------------------------------


def test_load_edge_list_roundtrip():
    text = "# comment\n0 1 3.5\n1 0 2.0\n1 2\n2 1 4.0\n"
    g = load_edge_list(text)
    assert g.nodes == (0, 1, 2)
    assert g.edges == ((0, 1), (1, 0), (1, 2), (2, 1))
    assert g.capacities == (3.5, 2.0, None, 4.0)


def test_load_edge_list_string_nodes():
    g = load_edge_list("ath vie 1.0\nvie ath 1.0\n")
    assert g.nodes == ("ath", "vie")


@pytest.mark.parametrize("text,fragment", [
    ("0 1 2 3\n", "line 1"),
    ("0\n", "line 1"),
    ("0 0 1.0\n", "line 1"),
    ("0 1 1.0\n0 1 2.0\n", "line 2"),
    ("0 1 abc\n", "line 1"),
])
def test_load_edge_list_errors(text, fragment):
    with pytest.raises(TopologyError, match=fragment):
        load_edge_list(text)


def test_fill_capacities():
    g = load_edge_list("0 1 9.0\n1 0\n")
    filled = fill_capacities(g, (2.0, 3.0), seed=4)
    assert filled.capacities[0] == 9.0
    assert 2.0 <= filled.capacities[1] <= 3.0
    again = fill_capacities(g, (2.0, 3.0), seed=4)
    assert filled.capacities == again.capacities


# ---------------------------------------------------------------------------
# placement and routing
# ---------------------------------------------------------------------------


def test_place_and_route_basic():
    g = generate("grid", {"rows": 4, "cols": 4}, seed=1)
    placement, pathset = place_and_route(g, 3, 3, 2, seed=9)
    assert len(placement.sources) == 3 and len(placement.learners) == 3
    assert not set(placement.sources) & set(placement.learners)
    assert set(placement.learner_type) == set(placement.learners)
    assert set(placement.learner_type.values()) == set(placement.types)
    assert placement.types == (0, 1)

    nxg = _as_nx(g)
    for (s, t), paths in pathset.paths.items():
        assert s in placement.sources
        learners = sorted(placement.learners_of_type(t), key=repr)
        assert [p[-1] for p in paths] == learners
        for p in paths:
            assert p[0] == s
            hops = list(zip(p[:-1], p[1:]))
            assert all(e in set(g.edges) for e in hops)
            assert len(p) - 1 == nx.shortest_path_length(nxg, s, p[-1])


def test_place_and_route_deterministic():
    g = generate("er", {"nodes": 20, "p": 0.25}, seed=3)
    a = place_and_route(g, 3, 3, 2, seed=5)
    b = place_and_route(g, 3, 3, 2, seed=5)
    assert a[0] == b[0] and a[1].paths == b[1].paths


def test_place_and_route_lexicographic_tie_break():
    # 0 -> {1, 2} -> 3: two shortest paths; the one through 1 wins.
    # seed=0 places source 0 and learner 3 (deterministic).
    g = Graph(nodes=(0, 1, 2, 3),
              edges=((0, 1), (0, 2), (1, 3), (2, 3)),
              capacities=(1.0, 1.0, 1.0, 1.0))
    placement, pathset = place_and_route(g, 1, 1, 1, seed=0)
    assert placement.sources == (0,) and placement.learners == (3,)
    assert pathset.paths == {(0, 0): ((0, 1, 3),)}


def test_place_and_route_unreachable():
    g = Graph(nodes=(0, 1, 2), edges=((0, 1),), capacities=(1.0,))
    with pytest.raises(TopologyError):
        place_and_route(g, 1, 2, 1, seed=0)


def test_place_and_route_count_validation():
    g = generate("star", {"nodes": 8}, seed=0)
    with pytest.raises(TopologyError):
        place_and_route(g, 5, 4, 2, seed=0)  # 9 > 8 nodes
    with pytest.raises(TopologyError):
        place_and_route(g, 2, 2, 3, seed=0)  # more types than learners
    with pytest.raises(TopologyError):
        place_and_route(g, 0, 2, 1, seed=0)
