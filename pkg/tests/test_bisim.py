import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdsbisim.bisim import (EXHAUSTED, FIXED_POINT, INCONCLUSIVE, STABLE, GridError, QuotientError,
                            build_quotient, eta_sweep, gamma_check, horizon_behaviors, isomorphic,
                            refine_samples, sample_grid, state_distance)
from hdsbisim.export import to_json
from hdsbisim.mapped import HybridState, MappedSystem, StateKind
from hdsbisim.model import parse_model
from hdsbisim.transition import FiniteTransitionSystem, check_bisimulation, minimize_by_behavior
from systems import chain, random_system

ETA0 = 0.05 * math.sqrt(2)


def test_state_distance():
    a = HybridState("m", (0.0, 0.0))
    assert state_distance(a, HybridState("m", (3.0, 4.0))) == 5.0
    assert state_distance(a, HybridState("n", (0.0, 0.0))) == math.inf
    assert state_distance(a, a) == 0.0
    with pytest.raises(ValueError):
        state_distance(a, HybridState("m", (0.0,)))


def test_thermostat_grid(thermostat_result):
    grid = thermostat_result.grid
    assert len(grid) == 66
    kinds = [thermostat_result.system.classify(r).kind for r in grid.points]
    assert kinds.count(StateKind.EQUILIBRIUM) == 2
    assert kinds.count(StateKind.GUARD_POINT) == 64
    assert HybridState("OFF_safe", (0.0, 0.0)) in grid.points
    assert HybridState("ON_safe", (1.0, 1.0)) in grid.points
    assert grid.eta == grid.spacing == ETA0
    assert all(grid.provenance)


def test_grid_rejects_bad_spacing(thermostat):
    with pytest.raises(GridError):
        sample_grid(thermostat, 0.0)


def test_thermostat_refinement(thermostat_result):
    trace = thermostat_result.algorithm.trace
    assert trace.status == FIXED_POINT and trace.k == 2
    assert trace.counts == [4, 8, 12, 12, 12, 12, 12]
    for a, b in zip(trace.records, trace.records[1:]):
        assert b.partition.refines(a.partition)
    for r in trace.records[3:]:
        assert r.partition.blocks() == trace.partition(2).blocks()


def test_thermostat_quotient(thermostat_result):
    g = thermostat_result.graph
    assert len(g.nodes) == 12
    for n in g.nodes:
        want = 1 if n.kind == "equilibrium" else 2
        assert g.out_degree(n.id) == want
        if n.kind == "guard":
            assert {u for s, u, _ in g.edges if s == n.id} == {"ON", "OFF"}
    loops = [(s, u, d) for s, u, d in g.edges if u == "*"]
    assert len(loops) == 2 and all(s == d for s, _, d in loops)


def test_representatives_reproduce_their_class(thermostat_result):
    sysm, k = thermostat_result.system, thermostat_result.k
    for n in thermostat_result.graph.nodes:
        assert horizon_behaviors(sysm, n.representative, k) == n.behaviors


def test_gamma_relation_holds(thermostat_result):
    check, missing = gamma_check(thermostat_result)
    assert missing is None and check.holds, check


def test_sweep_is_stable(thermostat_sweep, thermostat_result):
    assert thermostat_sweep.status == STABLE and thermostat_sweep.stable
    assert thermostat_sweep.counts == [12, 12, 12]
    assert [len(r.grid) for r in thermostat_sweep.rounds] == [66, 126, 246]
    first = thermostat_sweep.rounds[0]
    assert first.grid.points == thermostat_result.grid.points
    assert to_json(first.graph) == to_json(thermostat_result.graph)
    assert isomorphic(thermostat_sweep.rounds[1].graph, thermostat_sweep.rounds[2].graph)


def test_sweep_arguments(thermostat):
    with pytest.raises(ValueError):
        eta_sweep(thermostat, ETA0, 0.5, 1)
    with pytest.raises(ValueError):
        eta_sweep(thermostat, ETA0, 1.5, 2)


def test_single_equilibrium_grid():
    S = FiniteTransitionSystem.build({(0, "*", 0)}, {0: "a"})
    res = refine_samples(S, [0])
    assert res.trace.counts == [1, 1] and res.k == 0 and res.status == FIXED_POINT
    g = build_quotient(res.Hk.values(), res.Hk1.values(), res.k, lambda h, y: "*")
    assert len(g.nodes) == 1 and g.edges == [(0, "*", 0)]


def test_distinct_samples_report_exhaustion():
    res = refine_samples(chain("a", "a", "a"), [0, 1, 2])
    assert res.status == EXHAUSTED and res.trace.counts == [1, 2, 3, 3]


def test_k_max_reports_inconclusive():
    res = refine_samples(chain(*"aaaaaa"), list(range(6)), k_max=2)
    assert res.status == INCONCLUSIVE


def test_missing_successor_class_raises():
    S = chain("a", "b", "c")
    res = refine_samples(S, [0])
    with pytest.raises(QuotientError):
        build_quotient(res.Hk.values(), res.Hk1.values(), res.k)


def _graph_of(Q):
    g = nx.DiGraph()
    for x in Q.states:
        g.add_node(x, output=Q.H(x))
    g.add_edges_from((x, y) for x, _, y in Q.transitions)
    return g


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sampled_algorithm_agrees_with_finite_minimisation(seed):
    S = random_system(np.random.default_rng(seed))
    res = refine_samples(S, S.states)
    ref = minimize_by_behavior(S)
    assert res.k == ref.k
    assert res.trace.partition(res.k).blocks() == ref.partition.blocks()
    g = build_quotient(res.Hk.values(), res.Hk1.values(), res.k)
    assert nx.is_isomorphic(g.to_networkx(), _graph_of(ref.quotient),
                            node_match=lambda a, b: a["output"] == b["output"])
    index = {n.behaviors: n.id for n in g.nodes}
    rel = {(x, index[res.Hk[x]]) for x in S.states}
    assert check_bisimulation(S, g.to_transition_system(), rel)


def test_blocking_states_have_no_edges():
    h = parse_model("""
vars x
mode A output a
  flow x' = 1
  invariant 0 <= x <= 1
""")
    sysm = MappedSystem(h)
    r = HybridState("A", (1.0,))
    res = refine_samples(sysm, [r])
    assert res.trace.counts == [1, 1]
    g = build_quotient(res.Hk.values(), res.Hk1.values(), res.k)
    assert g.edges == []
