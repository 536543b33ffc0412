"""Finite transition systems, behaviour sets and bisimulation quotients.

Behaviour horizons count transitions: a behaviour of length ``n`` visits
``n + 1`` states. Bisimulation follows the input-agnostic matching used
throughout this package: a transition may be answered by a transition under
any input, as long as outputs and successor relations line up.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, NamedTuple, Optional, Sequence

State = Hashable


@dataclass(frozen=True)
class FiniteTransitionSystem:
    states: tuple[State, ...]
    inputs: frozenset
    transitions: frozenset  # of (state, input, state)
    outputs: frozenset
    output_map: Mapping[State, str]

    def __post_init__(self):
        known = set(self.states)
        if len(known) != len(self.states):
            raise ValueError("duplicate states")
        for x, u, y in self.transitions:
            if x not in known or y not in known:
                raise ValueError(f"transition ({x!r}, {u!r}, {y!r}) references an unknown state")
            if u not in self.inputs:
                raise ValueError(f"transition ({x!r}, {u!r}, {y!r}) uses an unknown input")
        for x in self.states:
            if self.output_map[x] not in self.outputs:
                raise ValueError(f"output of {x!r} is not in the output set")
        post = defaultdict(set)
        for x, u, y in self.transitions:
            post[x].add((u, y))
        object.__setattr__(self, "_post", {x: tuple(sorted(post[x], key=repr)) for x in self.states})

    @classmethod
    def build(cls, transitions: Iterable[tuple], output_map: Mapping[State, str],
              states: Optional[Sequence[State]] = None) -> "FiniteTransitionSystem":
        transitions = frozenset(transitions)
        if states is None:
            states = tuple(output_map)
        return cls(tuple(states), frozenset(u for _, u, _ in transitions), transitions,
                   frozenset(output_map[x] for x in states), dict(output_map))

    def H(self, x: State) -> str:
        return self.output_map[x]

    def post(self, x: State) -> tuple[tuple[object, State], ...]:
        """Outgoing ``(input, successor)`` pairs of ``x``."""
        return self._post[x]

    def successors(self, x: State) -> set[State]:
        return {y for _, y in self._post[x]}

    def phi(self, x: State) -> dict[str, State]:
        """Successor by output, defined for output-deterministic systems."""
        out: dict[str, State] = {}
        for _, y in self._post[x]:
            prev = out.setdefault(self.H(y), y)
            if prev != y:
                raise ValueError(f"state {x!r} is not output deterministic")
        return out


def is_output_deterministic(S: FiniteTransitionSystem) -> bool:
    """False iff some state has two distinct successors with equal outputs."""
    for x in S.states:
        seen: dict[str, State] = {}
        for y in S.successors(x):
            if seen.setdefault(S.H(y), y) != y:
                return False
    return True


# --------------------------------------------------------------------------
# behaviours
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BehaviorSet:
    origin: State
    horizon: int
    sequences: frozenset  # of tuples of states


@dataclass(frozen=True, order=True)
class OutputBehaviorSet:
    """Canonical (sorted, duplicate-free) set of output sequences."""

    sequences: tuple[tuple[str, ...], ...]

    @classmethod
    def of(cls, seqs: Iterable[Sequence[str]]) -> "OutputBehaviorSet":
        return cls(tuple(sorted({tuple(s) for s in seqs})))

    @property
    def output(self) -> str:
        return self.sequences[0][0]

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def truncate(self, k: int) -> "OutputBehaviorSet":
        """Prefixes of at most ``k`` transitions."""
        return OutputBehaviorSet.of(s[: k + 1] for s in self.sequences)

    def after(self, y: str) -> Optional["OutputBehaviorSet"]:
        """Tails of the sequences whose second symbol is ``y``."""
        tails = [s[1:] for s in self.sequences if len(s) > 1 and s[1] == y]
        return OutputBehaviorSet.of(tails) if tails else None

    def next_outputs(self) -> list[str]:
        return sorted({s[1] for s in self.sequences if len(s) > 1})


def behaviors(S: FiniteTransitionSystem, r: State, n: int) -> BehaviorSet:
    """All internal behaviours of length ``n`` from ``r`` plus the maximal
    shorter ones, by breadth-first extension."""
    if n < 0:
        raise ValueError("horizon must be non-negative")
    done: set[tuple] = set()
    frontier: set[tuple] = {(r,)}
    for _ in range(n):
        nxt = set()
        for b in frontier:
            succ = S.successors(b[-1])
            if not succ:
                done.add(b)
            for y in succ:
                nxt.add(b + (y,))
        frontier = nxt
    return BehaviorSet(r, n, frozenset(done | frontier))


def output_behaviors(S: FiniteTransitionSystem, r: State, n: int) -> OutputBehaviorSet:
    return OutputBehaviorSet.of(tuple(S.H(x) for x in b) for b in behaviors(S, r, n).sequences)


# --------------------------------------------------------------------------
# partitions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Partition:
    """Classes are listed in a canonical order (sorted by their keys)."""

    horizon: int
    classes: tuple[frozenset, ...]
    keys: tuple[object, ...]

    def __len__(self):
        return len(self.classes)

    def class_of(self, x: State) -> int:
        for i, c in enumerate(self.classes):
            if x in c:
                return i
        raise KeyError(x)

    def blocks(self) -> frozenset:
        return frozenset(self.classes)

    def refines(self, coarser: "Partition") -> bool:
        """Every class lies inside exactly one class of ``coarser``."""
        return all(sum(1 for d in coarser.classes if c <= d) == 1 for c in self.classes)


def _group(states: Iterable[State], key: Callable[[State], object], horizon: int, sort_key=None) -> Partition:
    groups: dict[object, set] = defaultdict(set)
    for x in states:
        groups[key(x)].add(x)
    ordered = sorted(groups, key=sort_key or (lambda k: k))
    return Partition(horizon, tuple(frozenset(groups[k]) for k in ordered), tuple(ordered))


def partition_by_horizon(S: FiniteTransitionSystem, k: int) -> Partition:
    """Group states whose output behaviour sets of horizon ``k`` are equal.

    Enumerates behaviours explicitly, so it is exponential in ``k``; use
    :func:`behavior_partitions` for long horizons.
    """
    if k < 0:
        raise ValueError("horizon must be non-negative")
    return _group(S.states, lambda x: output_behaviors(S, x, k), k)


def behavior_partitions(S: FiniteTransitionSystem, k_max: Optional[int] = None):
    """Yield the partitions ``Q_0, Q_1, ...`` without enumerating behaviours.

    For an output-deterministic system the set of horizon ``k + 1`` output
    behaviours from ``r`` is determined by ``H(r)`` and, for every output
    ``y`` it can move to, the horizon ``k`` set of ``phi(r, y)``. States are
    therefore keyed by that signature with horizon-``k`` sets replaced by
    interned ids, which is exact and polynomial.
    """
    phi = {x: S.phi(x) for x in S.states}
    intern: dict[tuple, int] = {}

    def ident(sig):
        return intern.setdefault(sig, len(intern))

    ids = {x: ident((S.H(x), ())) for x in S.states}
    k = 0
    while True:
        # sort keys by output so class order is stable across horizons
        yield _group(S.states, lambda x: ids[x], k, sort_key=lambda i: i)
        if k_max is not None and k >= k_max:
            return
        ids = {x: ident((S.H(x), tuple(sorted((y, ids[t]) for y, t in phi[x].items()))))
               for x in S.states}
        k += 1


# --------------------------------------------------------------------------
# quotients and bisimulation
# --------------------------------------------------------------------------


def quotient(S: FiniteTransitionSystem, P: Partition | Iterable[frozenset]) -> FiniteTransitionSystem:
    """Quotient system whose states are the classes (as frozensets).

    Raises:
        ValueError: if a class mixes outputs or the classes do not cover the
            states exactly once.
    """
    classes = tuple(P.classes if isinstance(P, Partition) else P)
    where: dict[State, frozenset] = {}
    for c in classes:
        outs = {S.H(x) for x in c}
        if len(outs) != 1:
            raise ValueError(f"class {set(c)!r} mixes outputs {sorted(outs)}")
        for x in c:
            if x in where:
                raise ValueError(f"state {x!r} is in two classes")
            where[x] = c
    if set(where) != set(S.states):
        raise ValueError("partition does not cover every state")
    trans = frozenset((where[x], u, where[y]) for x, u, y in S.transitions)
    omap = {c: S.H(next(iter(c))) for c in classes}
    return FiniteTransitionSystem(classes, S.inputs, trans, S.outputs, omap)


class MinimizationResult(NamedTuple):
    k: int
    partition: Partition
    quotient: FiniteTransitionSystem


def minimize_by_behavior(S: FiniteTransitionSystem, k_max: Optional[int] = None) -> MinimizationResult:
    """Refine ``Q_k`` until the class count stops growing and quotient.

    Raises:
        ValueError: if ``S`` is not output deterministic.
    """
    if not is_output_deterministic(S):
        raise ValueError("behaviour-based minimisation needs an output-deterministic system")
    prev = None
    for P in behavior_partitions(S, k_max):
        if prev is not None and len(P) == len(prev):
            return MinimizationResult(prev.horizon, prev, quotient(S, prev))
        prev = P
    raise RuntimeError(f"no fixed point within horizon {k_max}")


class BisimulationCheck(NamedTuple):
    holds: bool
    counterexample: Optional[tuple[State, State]] = None
    reason: str = ""

    def __bool__(self):
        return self.holds


def check_bisimulation(Sa: FiniteTransitionSystem, Sb: FiniteTransitionSystem,
                       relation: Iterable[tuple[State, State]],
                       domain: Optional[Iterable[State]] = None) -> BisimulationCheck:
    """Verify that ``relation`` is a bisimulation between ``Sa`` and ``Sb``.

    For every related pair the outputs must agree and every transition on
    either side must be matched by a transition of the other side into a
    related pair. ``domain`` restricts which left-hand states have their
    pairs checked (membership still uses the full relation), for checking a
    finite restriction whose frontier states have unknown successors.
    """
    if Sa.outputs != Sb.outputs:
        return BisimulationCheck(False, None, "output sets differ")
    rel = set(relation)
    dom = set(domain) if domain is not None else None
    for xa, xb in sorted(rel, key=repr):
        if dom is not None and xa not in dom:
            continue
        if Sa.H(xa) != Sb.H(xb):
            return BisimulationCheck(False, (xa, xb), "outputs differ")
        succ_b = Sb.successors(xb)
        for ya in Sa.successors(xa):
            if not any((ya, yb) in rel for yb in succ_b):
                return BisimulationCheck(False, (xa, xb), f"move to {ya!r} unmatched")
        succ_a = Sa.successors(xa)
        for yb in succ_b:
            if not any((ya, yb) in rel for ya in succ_a):
                return BisimulationCheck(False, (xa, xb), f"move to {yb!r} unmatched")
    return BisimulationCheck(True)


def classical_minimize(S: FiniteTransitionSystem) -> FiniteTransitionSystem:
    """Coarsest bisimulation quotient by splitter-based refinement.

    Starts from the partition by output and splits every block ``P`` by
    ``Pre(C)`` for each block ``C`` until no split happens. Does not need
    output determinism.
    """
    pre: dict[State, set] = defaultdict(set)
    for x, _, y in S.transitions:
        pre[y].add(x)
    by_out: dict[str, set] = defaultdict(set)
    for x in S.states:
        by_out[S.H(x)].add(x)
    blocks = [frozenset(b) for _, b in sorted(by_out.items())]
    changed = True
    while changed:
        changed = False
        for C in list(blocks):
            pre_c = set()
            for y in C:
                pre_c |= pre[y]
            new_blocks = []
            for P in blocks:
                inside = P & pre_c
                if inside and inside != P:
                    new_blocks += [frozenset(inside), P - inside]
                    changed = True
                else:
                    new_blocks.append(P)
            blocks = new_blocks
            if changed:
                break
    return quotient(S, blocks)


def quotient_relation(S: FiniteTransitionSystem, Q: FiniteTransitionSystem) -> set[tuple[State, frozenset]]:
    """``{(x, [x])}`` for a quotient whose states are frozensets of states."""
    return {(x, c) for c in Q.states for x in c}


def isomorphic_quotients(S: FiniteTransitionSystem, Q1: FiniteTransitionSystem,
                         Q2: FiniteTransitionSystem) -> BisimulationCheck:
    """Check two quotients of ``S`` are isomorphic: classes pair up one to one
    through shared members and the pairing is a bisimulation."""
    if len(Q1.states) != len(Q2.states):
        return BisimulationCheck(False, None, "different state counts")
    rel = set()
    for c1 in Q1.states:
        partners = [c2 for c2 in Q2.states if c1 & c2]
        if len(partners) != 1 or partners[0] != c1:
            return BisimulationCheck(False, (c1, partners[0] if partners else None), "classes differ")
        rel.add((c1, partners[0]))
    return check_bisimulation(Q1, Q2, rel)
