"""Distributed primal-dual engine: dynamics, engines, locality, outer loops."""

import numpy as np
import pytest

from expnet.gradient import EstimatorParams
from expnet.instance import infeasibility
from expnet.solvers_distributed import (PRIMAL_FLOOR, LocalityAudit,
                                        LocalityError, Router,
                                        StepsizeInstabilityError, Stepsizes,
                                        _build_structure, _EdgeNode,
                                        _LearnerNode, _SourceNode, dfw_solve,
                                        dmax_solve, dpga_solve, pd_inner)

from conftest import chain_instance, shared_edge_instance

_TINY = EstimatorParams(N1=4, N2=4, seed=0)


def _entity_mesh(instance, audit=None):
    """Edge/learner/source nodes plus a Router, as the entity engine builds
    them, for message-level tests."""
    st = _build_structure(instance)
    edges = {ei: _EdgeNode(ei, e, float(st.caps[ei]),
                           {g: list(st.eg_members[k])
                            for k, g in enumerate(st.eg_group)
                            if st.eg_edge[k] == ei})
             for ei, e in enumerate(st.edges)}
    learners = {l: _LearnerNode(l, st.learner_coords[li])
                for li, l in enumerate(st.learners)}
    sources = {}
    for si, s in enumerate(st.sources):
        gids = st.source_groups[si]
        sources[s] = _SourceNode(
            s, st.source_coords[si], gids,
            tuple(st.groups[gi] for gi in gids),
            tuple(float(st.group_rate[gi]) for gi in gids),
            tuple(st.group_members[gi] for gi in gids), v0=PRIMAL_FLOOR)
    return st, sources, edges, learners, Router(st, sources, edges, learners,
                                                audit)


# ---------------------------------------------------------------------------
# parameters and fixed points
# ---------------------------------------------------------------------------


def test_stepsizes_validation():
    with pytest.raises(ValueError):
        Stepsizes(primal=0.0)
    with pytest.raises(ValueError):
        Stepsizes(edge=-0.01)


def test_pd_inner_validation(chain):
    with pytest.raises(ValueError):
        pd_inner(chain, None, np.ones(3))
    with pytest.raises(ValueError):
        pd_inner(chain, None, np.ones(1), theta=0.5)
    with pytest.raises(ValueError):
        pd_inner(chain, None, np.ones(1), rounds=0)
    with pytest.raises(ValueError):
        pd_inner(chain, None, np.ones(1), mode="warp")


def test_pd_inner_saturates_single_path(chain):
    v = pd_inner(chain, None, np.array([1.0]), rounds=3000)
    assert v == pytest.approx([5.0], abs=1e-2)


def test_pd_inner_zero_gradient_stays_at_floor(chain):
    v = pd_inner(chain, None, np.zeros(1), rounds=200)
    assert v == pytest.approx([PRIMAL_FLOOR])


def test_pd_inner_returns_state(bottleneck):
    state = pd_inner(bottleneck, None, np.array([1.0, 0.8]), rounds=50,
                     return_state=True)
    assert state.rounds == 50
    assert state.v.shape == (2,)
    assert state.q.shape == (3,)  # one capacity dual per traffic edge
    assert state.r.shape == (2,)  # one rate dual per group
    assert np.all(state.v >= PRIMAL_FLOOR)


def test_unstable_stepsizes_raise(bottleneck):
    huge = Stepsizes(primal=1e6, edge=1e6, group=1e6, nonneg=1e6)
    with pytest.raises(StepsizeInstabilityError):
        pd_inner(bottleneck, None, np.ones(2), rounds=50, stepsizes=huge)


# ---------------------------------------------------------------------------
# the two engines compute the same iteration
# ---------------------------------------------------------------------------


def test_engines_agree_linear(bottleneck):
    g = np.array([1.0, 0.8])
    a = pd_inner(bottleneck, None, g, rounds=400, mode="fast")
    b = pd_inner(bottleneck, None, g, rounds=400, mode="entities")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_engines_agree_fair():
    inst = shared_edge_instance()
    a = dmax_solve(inst, "fair", rounds=400, mode="fast")
    b = dmax_solve(inst, "fair", rounds=400, mode="entities")
    assert np.allclose(a.vector, b.vector, rtol=1e-12, atol=1e-15)


def test_engines_agree_projection(bottleneck):
    a, _ = dpga_solve(bottleneck, _TINY, K=2, rounds=200, mode="fast")
    b, _ = dpga_solve(bottleneck, _TINY, K=2, rounds=200, mode="entities")
    assert np.allclose(a.vector, b.vector, rtol=1e-12, atol=1e-15)


def test_reruns_bitwise_identical(bottleneck):
    g = np.array([1.0, 0.8])
    for mode in ("fast", "entities"):
        a = pd_inner(bottleneck, None, g, rounds=300, mode=mode)
        b = pd_inner(bottleneck, None, g, rounds=300, mode=mode)
        assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# locality
# ---------------------------------------------------------------------------


def test_entity_run_audit_clean(bottleneck):
    audit = LocalityAudit()
    dmax_solve(bottleneck, "tp", rounds=20, mode="entities", audit=audit)
    assert audit.clean
    assert len(audit.reads) > 0
    # gradient delivery precedes the first round, flagged as round -1
    assert audit.reads[0][0] == -1
    assert audit.reads[0][2][0] == "gradient"


def test_router_rejects_foreign_advertise(bottleneck):
    st, sources, edges, learners, router = _entity_mesh(bottleneck)
    other = next(s for s in st.sources if s != st.coord_source[0])
    with pytest.raises(LocalityError):
        router.advertise_rate(0, other, 0, 1.0)


def test_router_rejects_foreign_feedback_and_gradient(bottleneck):
    st, sources, edges, learners, router = _entity_mesh(bottleneck)
    outsider = st.sources[0]  # not a learner at all
    with pytest.raises(LocalityError):
        router.request_feedback(0, outsider, 0)
    with pytest.raises(LocalityError):
        router.send_gradient(0, outsider, 0, 1.0)


def test_edge_rejects_non_traversing_path(bottleneck):
    audit = LocalityAudit()
    st, sources, edges, learners, router = _entity_mesh(bottleneck, audit)
    # edge (0, 2) carries only coordinate 0; push coordinate 1 at it
    ei = st.edges.index((0, 2))
    with pytest.raises(LocalityError):
        edges[ei].receive_rate(0, 1, 0.5, audit)
    assert not audit.clean


def test_learner_and_source_reject_foreign_coords(bottleneck):
    st, sources, edges, learners, router = _entity_mesh(bottleneck)
    learner = learners[st.learners[0]]
    with pytest.raises(LocalityError):
        learner.receive_rate(0, 99, 0.5, None)
    source = sources[st.sources[0]]
    foreign = next(j for j in range(st.n_coords)
                   if st.coord_source[j] != st.sources[0])
    with pytest.raises(LocalityError):
        source.receive_gradient(0, foreign, 1.0, None)


# ---------------------------------------------------------------------------
# outer loops and baselines
# ---------------------------------------------------------------------------


def test_dfw_smoke(bottleneck):
    alloc, trace = dfw_solve(bottleneck, _TINY, K=3, rounds=300)
    assert trace.algorithm == "dfw"
    assert trace.step_total == pytest.approx(1.0, abs=1e-12)
    assert np.all(alloc.vector >= 0)
    assert infeasibility(bottleneck, alloc.vector) < 0.1


def test_dpga_smoke(bottleneck):
    alloc, trace = dpga_solve(bottleneck, _TINY, K=3, rounds=300)
    assert trace.algorithm == "dpga"
    assert np.all(alloc.vector >= 0)
    assert infeasibility(bottleneck, alloc.vector) < 0.1


def test_dfw_dpga_validation(chain):
    with pytest.raises(ValueError):
        dfw_solve(chain, _TINY, K=0)
    with pytest.raises(ValueError):
        dpga_solve(chain, _TINY, K=2, gamma=-1.0)


def test_dmax_tp_saturates_single_path(chain):
    alloc = dmax_solve(chain, "tp", rounds=3000)
    assert alloc.vector == pytest.approx([5.0], abs=1e-2)


def test_dmax_fair_splits_shared_edge_evenly():
    inst = shared_edge_instance(cap=3.0, rate=10.0)
    alloc = dmax_solve(inst, "fair", rounds=3000)
    assert alloc.vector[0] == pytest.approx(alloc.vector[1], abs=1e-3)
    assert alloc.vector[0] == pytest.approx(1.5, abs=0.05)
    assert infeasibility(inst, alloc.vector) < 0.1


def test_dmax_unknown_objective(chain):
    with pytest.raises(ValueError):
        dmax_solve(chain, "entropy")


def test_trace_callback(bottleneck):
    seen = []
    pd_inner(bottleneck, None, np.ones(2), rounds=5,
             trace=lambda t, rows: seen.append((t, rows)))
    assert [t for t, _ in seen] == list(range(5))
    entities = {e for _, rows in seen for (e, _var, _val) in rows}
    assert any(e.startswith("path:") for e in entities)
    assert any(e.startswith("edge:") for e in entities)
    assert any(e.startswith("group:") for e in entities)
