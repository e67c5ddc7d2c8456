"""Shared toy-instance builders for the test suite."""

import numpy as np
import pytest

from expnet.instance import ProblemConfig, build_instance
from expnet.topology import Graph, PathSet, Placement


def chain_instance(rate=5.0, prior_var=1.0, feat_var=1.0, sigma=1.0, d=1,
                   cap=100.0, T=1.0):
    """One source (node 0) feeding one learner (node 1) over one edge."""
    g = Graph(nodes=(0, 1), edges=((0, 1),), capacities=(cap,))
    pl = Placement(sources=(0,), learners=(1,), learner_type={1: 0},
                   types=(0,))
    ps = PathSet(paths={(0, 0): [(0, 1)]})
    cfg = ProblemConfig(
        d=d, T=T, rates={(0, 0): rate},
        source_cov={0: np.full(d, feat_var)},
        noise_std={(0, 0): sigma},
        prior_mean={1: np.zeros(d)}, prior_cov={1: np.full(d, prior_var)},
        beta_true={0: np.zeros(d)}, seed=0)
    return build_instance(g, pl, ps, cfg)


def diamond_instance(seed=0, d=3, caps=None, T=1.0):
    """Two sources (0, 1), two learners (2, 3) of distinct types; each
    source reaches each learner over its own direct edge (4 coordinates)."""
    rng = np.random.default_rng(seed)
    caps = tuple(caps) if caps is not None else tuple(rng.uniform(3, 6, 4))
    g = Graph(nodes=(0, 1, 2, 3), edges=((0, 2), (0, 3), (1, 2), (1, 3)),
              capacities=caps)
    pl = Placement(sources=(0, 1), learners=(2, 3),
                   learner_type={2: 0, 3: 1}, types=(0, 1))
    ps = PathSet(paths={(0, 0): [(0, 2)], (0, 1): [(0, 3)],
                        (1, 0): [(1, 2)], (1, 1): [(1, 3)]})
    cfg = ProblemConfig(
        d=d, T=T,
        rates={(0, 0): float(rng.uniform(2, 4)), (0, 1): float(rng.uniform(2, 4)),
               (1, 0): float(rng.uniform(2, 4)), (1, 1): float(rng.uniform(2, 4))},
        source_cov={0: rng.uniform(0.5, 2, d), 1: rng.uniform(0.5, 2, d)},
        noise_std={(0, 0): 0.9, (0, 1): 1.1, (1, 0): 1.0, (1, 1): 0.8},
        prior_mean={2: np.zeros(d), 3: np.ones(d)},
        prior_cov={2: rng.uniform(0.5, 1.5, d), 3: rng.uniform(0.5, 1.5, d)},
        beta_true={0: np.zeros(d), 1: np.ones(d)}, seed=seed)
    return build_instance(g, pl, ps, cfg)


def bottleneck_instance(seed=0, shared_cap=3.0, rates=(3.0, 2.5), d=2, T=1.0):
    """Two sources sharing a relay edge into one learner (2 coordinates,
    distinct groups, so the shared edge carries the *sum* of both rates)."""
    rng = np.random.default_rng(seed)
    g = Graph(nodes=(0, 1, 2, 3), edges=((0, 2), (1, 2), (2, 3)),
              capacities=(10.0, 10.0, float(shared_cap)))
    pl = Placement(sources=(0, 1), learners=(3,), learner_type={3: 0},
                   types=(0,))
    ps = PathSet(paths={(0, 0): [(0, 2, 3)], (1, 0): [(1, 2, 3)]})
    cfg = ProblemConfig(
        d=d, T=T, rates={(0, 0): float(rates[0]), (1, 0): float(rates[1])},
        source_cov={0: rng.uniform(0.5, 2, d), 1: rng.uniform(0.5, 2, d)},
        noise_std={(0, 0): 1.0, (1, 0): 0.9},
        prior_mean={3: np.zeros(d)}, prior_cov={3: rng.uniform(0.5, 1.5, d)},
        beta_true={0: np.zeros(d)}, seed=seed)
    return build_instance(g, pl, ps, cfg)


def multicast_instance(cap=4.0, rate=3.0, d=2):
    """One source multicasting one type to two learners through a shared
    first hop: 2 coordinates in the SAME group (edge load is their max)."""
    g = Graph(nodes=(0, 1, 2, 3), edges=((0, 1), (1, 2), (1, 3)),
              capacities=(cap, 10.0, 10.0))
    pl = Placement(sources=(0,), learners=(2, 3),
                   learner_type={2: 0, 3: 0}, types=(0,))
    ps = PathSet(paths={(0, 0): [(0, 1, 2), (0, 1, 3)]})
    cfg = ProblemConfig(
        d=d, T=1.0, rates={(0, 0): rate},
        source_cov={0: np.full(d, 1.0)},
        noise_std={(0, 0): 1.0},
        prior_mean={2: np.zeros(d), 3: np.zeros(d)},
        prior_cov={2: np.full(d, 1.0), 3: np.full(d, 0.8)},
        beta_true={0: np.zeros(d)}, seed=0)
    return build_instance(g, pl, ps, cfg)


def shared_edge_instance(cap=3.0, rate=10.0, d=1):
    """One source, two learners of distinct types behind one shared edge:
    two coordinates in distinct groups, so the edge carries their sum."""
    g = Graph(nodes=(0, 1, 2, 3), edges=((0, 1), (1, 2), (1, 3)),
              capacities=(cap, 10.0, 10.0))
    pl = Placement(sources=(0,), learners=(2, 3),
                   learner_type={2: 0, 3: 1}, types=(0, 1))
    ps = PathSet(paths={(0, 0): [(0, 1, 2)], (0, 1): [(0, 1, 3)]})
    cfg = ProblemConfig(
        d=d, T=1.0, rates={(0, 0): rate, (0, 1): rate},
        source_cov={0: np.ones(d)}, noise_std={(0, 0): 1.0, (0, 1): 1.0},
        prior_mean={2: np.zeros(d), 3: np.zeros(d)},
        prior_cov={2: np.ones(d), 3: np.ones(d)},
        beta_true={0: np.zeros(d), 1: np.zeros(d)}, seed=0)
    return build_instance(g, pl, ps, cfg)


@pytest.fixture
def chain():
    return chain_instance()


@pytest.fixture
def diamond():
    return diamond_instance()


@pytest.fixture
def bottleneck():
    return bottleneck_instance()


@pytest.fixture
def multicast():
    return multicast_instance()
