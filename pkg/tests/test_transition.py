import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdsbisim.transition import (FiniteTransitionSystem, OutputBehaviorSet, behavior_partitions, behaviors,
                                 check_bisimulation, classical_minimize, is_output_deterministic,
                                 isomorphic_quotients, minimize_by_behavior, output_behaviors,
                                 partition_by_horizon, quotient, quotient_relation)
from systems import chain, disjoint_copies, random_system

seeds = st.integers(0, 2**32 - 1)


def binary_tree(depth):
    states = [""] + ["".join(p) for d in range(1, depth + 1) for p in itertools.product("lr", repeat=d)]
    trans = {(s, c, s + c) for s in states for c in "lr" if len(s) < depth}
    return FiniteTransitionSystem.build(trans, {s: "o" for s in states}, states=states)


def test_behaviors_examples():
    S = chain("a", "b", "c")
    assert behaviors(S, 0, 0).sequences == {(0,)}
    assert behaviors(S, 0, 5).sequences == {(0, 1, 2)}
    T = binary_tree(3)
    seqs = behaviors(T, "", 2).sequences
    assert len(seqs) == 4 and all(len(b) == 3 for b in seqs)


def test_output_behaviors_collapse_equal_labels():
    T = binary_tree(2)
    assert output_behaviors(T, "", 0) == OutputBehaviorSet.of([("o",)])
    assert output_behaviors(T, "", 2).sequences == (("o", "o", "o"),)


def test_output_behavior_set_operations():
    h = OutputBehaviorSet.of([("a", "b", "c"), ("a", "b", "d"), ("a", "e")])
    assert h.output == "a"
    assert h.truncate(1) == OutputBehaviorSet.of([("a", "b"), ("a", "e")])
    assert h.after("b") == OutputBehaviorSet.of([("b", "c"), ("b", "d")])
    assert h.after("z") is None
    assert h.next_outputs() == ["b", "e"]


def test_partition_examples(thermostat):
    S = chain("a", "a", "a")
    assert len(partition_by_horizon(S, 0)) == 1
    skeleton = FiniteTransitionSystem.build({(e.source, e.input, e.target) for e in thermostat.edges},
                                            {m.name: m.output for m in thermostat.modes})
    assert len(partition_by_horizon(skeleton, 0)) == 4


def test_single_self_loop_minimises_to_itself():
    S = FiniteTransitionSystem.build({(0, "u", 0)}, {0: "a"})
    res = minimize_by_behavior(S)
    assert res.k == 0 and len(res.partition) == 1
    assert check_bisimulation(S, res.quotient, quotient_relation(S, res.quotient))


def test_bisimilar_branches_merge():
    trans = {(0, "l", 1), (0, "r", 2), (1, "u", 3), (2, "u", 4)}
    S = FiniteTransitionSystem.build(trans, {0: "r", 1: "b", 2: "c", 3: "d", 4: "d"})
    assert not is_output_deterministic(FiniteTransitionSystem.build(trans, {0: "r", 1: "b", 2: "b", 3: "d",
                                                                            4: "d"}))
    res = minimize_by_behavior(S)
    assert frozenset({3, 4}) in res.partition.classes
    assert len(res.quotient.states) == len(classical_minimize(S).states) == 4


def test_non_deterministic_input_rejected():
    S = FiniteTransitionSystem.build({(0, "u", 1), (0, "v", 2)}, {0: "a", 1: "b", 2: "b"})
    assert not is_output_deterministic(S)
    with pytest.raises(ValueError):
        minimize_by_behavior(S)
    assert len(classical_minimize(S).states) == 2


def test_quotient_examples():
    S = chain("a", "b", "c")
    ident = quotient(S, [frozenset({x}) for x in S.states])
    assert len(ident.states) == 3
    assert check_bisimulation(S, ident, quotient_relation(S, ident))
    loop = FiniteTransitionSystem.build({(x, u, y) for x in range(3) for y in range(3) for u in "pq"},
                                        {x: "o" for x in range(3)})
    one = quotient(loop, [frozenset(range(3))])
    assert {(u) for _, u, _ in one.transitions} == {"p", "q"} and len(one.states) == 1
    with pytest.raises(ValueError, match="mixes"):
        quotient(S, [frozenset({0, 1}), frozenset({2})])


def test_check_bisimulation_counterexamples():
    S = chain("a", "b")
    assert check_bisimulation(S, S, {(x, x) for x in S.states})
    bad = check_bisimulation(S, S, {(0, 1)})
    assert not bad and bad.counterexample == (0, 1) and bad.reason == "outputs differ"
    T = chain("a", "b", "b")
    assert not check_bisimulation(T, T, {(1, 1), (1, 2), (2, 2)})


def test_classical_examples():
    S = chain("a", "b", "c")
    assert len(classical_minimize(S).states) == 3
    rng = np.random.default_rng(5)
    R = random_system(rng)
    assert len(classical_minimize(disjoint_copies(R)).states) == len(classical_minimize(R).states)


def test_output_determinism_examples():
    assert is_output_deterministic(chain("a", "b", "c"))


@settings(max_examples=150, deadline=None)
@given(seeds)
def test_behaviour_minimisation_matches_classical(seed):
    S = random_system(np.random.default_rng(seed))
    res = minimize_by_behavior(S)
    C = classical_minimize(S)
    assert len(res.quotient.states) == len(C.states)
    assert isomorphic_quotients(S, res.quotient, C)
    assert check_bisimulation(S, res.quotient, quotient_relation(S, res.quotient))
    assert res.k <= max(len(S.states) - 1, 0)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_interned_partitions_equal_explicit_enumeration(seed):
    S = random_system(np.random.default_rng(seed), max_states=8)
    for k, P in zip(range(5), behavior_partitions(S)):
        assert P.blocks() == partition_by_horizon(S, k).blocks()


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_refinement_is_monotone_and_stable(seed):
    S = random_system(np.random.default_rng(seed))
    parts = list(behavior_partitions(S, len(S.states) + 4))
    for a, b in zip(parts, parts[1:]):
        assert b.refines(a) and len(b) >= len(a)
    k = next(i for i in range(len(parts) - 1) if len(parts[i]) == len(parts[i + 1]))
    for later in parts[k + 1:k + 5]:
        assert later.blocks() == parts[k].blocks()
