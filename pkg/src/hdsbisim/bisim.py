"""Behaviour-based bisimulation of a sampled mapped system.

The pipeline is:

1. :func:`sample_grid`: lattice points on every guard (pitch ``spacing``)
   plus the equilibria of every mode, filtered to mapped-system states;
2. :func:`refine_samples`: grow behaviour sets one transition at a time
   and refine the partition of the samples until the class count stops
   changing;
3. :func:`build_quotient`: assemble the quotient graph from the horizon
   ``k`` and ``k + 1`` output behaviour sets;
4. :func:`eta_sweep`: repeat with smaller grid pitches until the quotient
   stops changing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence

import networkx as nx

from .flow import FlowConfig
from .mapped import EQUILIBRIUM_INPUT, HybridState, MappedSystem, NotAMappedState, StateKind
from .model import HybridAutomaton
from .sets import lattice_points
from .transition import (FiniteTransitionSystem, OutputBehaviorSet, Partition, check_bisimulation)


FIXED_POINT = "fixed-point"
EXHAUSTED = "exhausted"
INCONCLUSIVE = "inconclusive"
STABLE = "stable"


class GridError(ValueError):
    pass


class QuotientError(RuntimeError):
    """The behaviour sets do not close up into a quotient (grid too coarse or
    not at a fixed point)."""


class SuccessorSystem(Protocol):
    def output(self, s) -> str: ...
    def successors(self, s) -> Mapping[str, object]: ...


class FiniteSystemView:
    """A finite transition system seen through ``output``/``successors``,
    so the sampled-system algorithm can run on handcrafted fixtures."""

    def __init__(self, S: FiniteTransitionSystem):
        self.S = S

    def output(self, s) -> str:
        return self.S.H(s)

    def successors(self, s) -> dict[str, object]:
        return self.S.phi(s)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleGrid:
    eta: float
    spacing: float
    points: tuple[HybridState, ...]
    provenance: tuple[str, ...]

    def __len__(self):
        return len(self.points)


def state_distance(r: HybridState, r2: HybridState) -> float:
    """Euclidean distance of the points in the same mode, infinity otherwise."""
    if len(r.point) != len(r2.point):
        raise ValueError("states have different dimensions")
    if r.mode != r2.mode:
        return math.inf
    return math.dist(r.point, r2.point)


def sample_grid(h: HybridAutomaton, spacing: float, cfg: FlowConfig = FlowConfig(),
                system: Optional[MappedSystem] = None, eta: Optional[float] = None) -> SampleGrid:
    """Lattice samples of every guard plus every equilibrium.

    Points that are not mapped-system states (for instance guard points where
    the flow does not leave the invariant) are dropped.

    Raises:
        GridError: if ``spacing`` is not positive or a non-empty guard
            component yields no lattice points.
        NotImplementedError: for guards of dimension above two.
    """
    if not spacing > 0:
        raise GridError("spacing must be positive")
    system = system or MappedSystem(h, cfg)
    prov: dict[HybridState, list[str]] = {}
    for e in h.edges:
        for comp in e.guard.components:
            pts = lattice_points(comp, spacing, cfg.event_tol)
            if not pts:
                raise GridError(f"no lattice points on a guard component of {e.label}")
            for p in pts:
                s = HybridState(e.source, p)
                try:
                    kind = system.classify(s).kind
                except NotAMappedState:
                    continue
                if kind is StateKind.GUARD_POINT:
                    prov.setdefault(s, []).append(e.label)
    for m in h.modes:
        for p in system.equilibria(m.name):
            s = HybridState(m.name, p)
            try:
                kind = system.classify(s).kind
            except NotAMappedState:
                continue
            if kind is StateKind.EQUILIBRIUM:
                prov.setdefault(s, []).append(f"equilibrium of {m.name}")
    order = {m.name: i for i, m in enumerate(h.modes)}
    points = sorted(prov, key=lambda s: (order[s.mode], s.point))
    return SampleGrid(eta if eta is not None else spacing, spacing, tuple(points),
                      tuple("; ".join(prov[s]) for s in points))


# --------------------------------------------------------------------------
# refinement
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceRecord:
    k: int
    class_count: int
    partition: Partition


@dataclass
class RefinementTrace:
    records: list[TraceRecord] = field(default_factory=list)
    status: str = INCONCLUSIVE
    k: Optional[int] = None

    @property
    def counts(self) -> list[int]:
        return [r.class_count for r in self.records]

    def partition(self, k: int) -> Partition:
        return next(r.partition for r in self.records if r.k == k)


def _partition(points, H: Mapping, k: int) -> Partition:
    groups: dict[OutputBehaviorSet, set] = {}
    for r in points:
        groups.setdefault(H[r], set()).add(r)
    keys = sorted(groups)
    return Partition(k, tuple(frozenset(groups[key]) for key in keys), tuple(keys))


def proceed(system: SuccessorSystem, behaviors: Iterable[tuple], k: int) -> set[tuple]:
    """Extend every behaviour of length ``k`` by each available successor;
    shorter ones and those ending in a state without successors stay."""
    out = set()
    for b in behaviors:
        if len(b) - 1 < k:
            out.add(b)
            continue
        succ = system.successors(b[-1])
        if not succ:
            out.add(b)
        for y in sorted(succ):
            out.add(b + (succ[y],))
    return out


def _outputs(system: SuccessorSystem, seqs: Iterable[tuple]) -> OutputBehaviorSet:
    return OutputBehaviorSet.of(tuple(system.output(x) for x in b) for b in seqs)


@dataclass
class AlgorithmResult:
    trace: RefinementTrace
    Hk: dict  # sample -> OutputBehaviorSet at horizon k
    Hk1: dict  # sample -> OutputBehaviorSet at horizon k + 1

    @property
    def k(self) -> Optional[int]:
        return self.trace.k

    @property
    def status(self) -> str:
        return self.trace.status


def refine_samples(system, grid: SampleGrid | Sequence, cfg: Optional[FlowConfig] = None,
                    k_max: int = 100, extra_rounds: int = 0) -> AlgorithmResult:
    """Grow behaviour sets over the samples until ``|Q_{k+1}| = |Q_k|``.

    Args:
        system: a :class:`MappedSystem`, a :class:`HybridAutomaton` (wrapped
            with ``cfg``), a :class:`FiniteTransitionSystem`, or any object
            with ``output`` and ``successors``.
        grid: the samples.
        k_max: give up (status ``inconclusive``) at this horizon.
        extra_rounds: keep refining this many rounds past the fixed point and
            record them in the trace; the returned sets stay those of the
            fixed point.

    The trace status is ``fixed-point``; ``exhausted`` when every sample ends
    up in its own class (the grid cannot be trusted to cover every class);
    ``inconclusive`` when ``k_max`` was hit.
    """
    if isinstance(system, HybridAutomaton):
        system = MappedSystem(system, cfg or FlowConfig())
    elif isinstance(system, FiniteTransitionSystem):
        system = FiniteSystemView(system)
    points = tuple(grid.points if isinstance(grid, SampleGrid) else grid)
    if not points:
        raise GridError("empty sample grid")

    B = {r: {(r,)} for r in points}
    Hk = {r: OutputBehaviorSet.of([(system.output(r),)]) for r in points}
    prev = _partition(points, Hk, 0)
    trace = RefinementTrace([TraceRecord(0, len(prev), prev)])
    k = -1
    while True:
        k += 1
        for r in points:
            B[r] = proceed(system, B[r], k)
        Hk1 = {r: _outputs(system, B[r]) for r in points}
        cur = _partition(points, Hk1, k + 1)
        trace.records.append(TraceRecord(k + 1, len(cur), cur))
        if len(cur) == len(prev):
            if cur.blocks() != prev.blocks():
                raise AssertionError("equal class counts but different partitions")
            trace.k = k
            trace.status = EXHAUSTED if len(cur) == len(points) > 1 else FIXED_POINT
            break
        if k + 1 >= k_max:
            trace.k = k
            trace.status = INCONCLUSIVE
            return AlgorithmResult(trace, Hk, Hk1)
        prev, Hk = cur, Hk1

    extra_B = B
    for j in range(extra_rounds):
        kk = k + 1 + j
        extra_B = {r: proceed(system, extra_B[r], kk) for r in points}
        P = _partition(points, {r: _outputs(system, extra_B[r]) for r in points}, kk + 1)
        trace.records.append(TraceRecord(kk + 1, len(P), P))
    return AlgorithmResult(trace, Hk, Hk1)


def horizon_behaviors(system: SuccessorSystem, r, k: int) -> OutputBehaviorSet:
    """Output behaviour set of horizon ``k`` from ``r``, from scratch."""
    B = {(r,)}
    for i in range(k):
        B = proceed(system, B, i)
    return _outputs(system, B)


# --------------------------------------------------------------------------
# quotient
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuotientNode:
    id: int
    output: str
    behaviors: OutputBehaviorSet
    representative: Optional[HybridState] = None
    kind: Optional[str] = None


@dataclass
class QuotientGraph:
    nodes: list[QuotientNode]
    edges: list[tuple[int, str, int]]
    metadata: dict

    def node_for(self, h: OutputBehaviorSet) -> QuotientNode:
        for n in self.nodes:
            if n.behaviors == h:
                return n
        raise KeyError(h)

    def out_degree(self, node_id: int) -> int:
        return sum(1 for s, _, _ in self.edges if s == node_id)

    def to_transition_system(self) -> FiniteTransitionSystem:
        return FiniteTransitionSystem.build(self.edges, {n.id: n.output for n in self.nodes},
                                            states=[n.id for n in self.nodes])

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        for n in self.nodes:
            g.add_node(n.id, output=n.output)
        for s, u, d in self.edges:
            g.add_edge(s, d, input=u)
        return g


def build_quotient(Hk: Iterable[OutputBehaviorSet], Hk1: Iterable[OutputBehaviorSet], k: int,
                   label: Optional[Callable[[OutputBehaviorSet, str], str]] = None,
                   representatives: Optional[Mapping[OutputBehaviorSet, HybridState]] = None,
                   kinds: Optional[Mapping[OutputBehaviorSet, str]] = None,
                   metadata: Optional[dict] = None) -> QuotientGraph:
    """Quotient graph with one node per horizon-``k`` behaviour set.

    For every horizon-``k + 1`` set ``h3`` and every output ``y`` it can move
    to, the edge runs from the truncation of ``h3`` to horizon ``k`` to the
    set of tails of the sequences of ``h3`` that continue with ``y``.

    ``label(h1, y)`` names the input on the edge; by default the target
    output symbol is used.

    Raises:
        QuotientError: if a source or target set is not among ``Hk``.
    """
    hk = sorted(set(Hk))
    index = {h: i for i, h in enumerate(hk)}
    reps = representatives or {}
    nodes = [QuotientNode(i, h.output, h, reps.get(h), (kinds or {}).get(h)) for i, h in enumerate(hk)]
    edges = set()
    for h3 in sorted(set(Hk1)):
        h1 = h3.truncate(k)
        if h1 not in index:
            raise QuotientError(f"truncated set {h1.sequences} is not a horizon-{k} class")
        for y in h3.next_outputs():
            h2 = h3.after(y)
            if h2 not in index:
                raise QuotientError(f"successor set {h2.sequences} of a {h1.output} class under {y!r} "
                                    f"was not sampled; decrease eta")
            u = label(h1, y) if label else y
            edges.add((index[h1], u, index[h2]))
    return QuotientGraph(nodes, sorted(edges), dict(metadata or {}, k=k))


# --------------------------------------------------------------------------
# end-to-end
# --------------------------------------------------------------------------


@dataclass
class BisimulationResult:
    eta: float
    grid: SampleGrid
    algorithm: AlgorithmResult
    graph: Optional[QuotientGraph]
    status: str
    message: str = ""
    system: Optional[MappedSystem] = None

    @property
    def k(self):
        return self.algorithm.k

    @property
    def class_count(self) -> int:
        return len(set(self.algorithm.Hk.values()))

    def summary(self) -> str:
        return (f"k={self.k} classes={self.class_count} grid={len(self.grid)} "
                f"eta={self.eta:.7g} status={self.status}")


def compute_bisimulation(h: HybridAutomaton, eta: float, cfg: FlowConfig = FlowConfig(),
                         spacing: Optional[float] = None, k_max: int = 100,
                         extra_rounds: int = 0) -> BisimulationResult:
    """Sample, refine and assemble the quotient for one value of ``eta``."""
    system = MappedSystem(h, cfg)
    grid = sample_grid(h, spacing or eta, cfg, system, eta=eta)
    alg = refine_samples(system, grid, k_max=k_max, extra_rounds=extra_rounds)
    status = alg.status
    graph = None
    message = ""
    if status != INCONCLUSIVE:
        reps: dict[OutputBehaviorSet, HybridState] = {}
        for r in grid.points:
            reps.setdefault(alg.Hk[r], r)
        kinds = {hh: system.classify(r).kind.value for hh, r in reps.items()}

        def label(h1: OutputBehaviorSet, y: str) -> str:
            entry = system.labelled_successors(reps[h1]).get(y)
            return entry[1] if entry else EQUILIBRIUM_INPUT

        try:
            graph = build_quotient(alg.Hk.values(), alg.Hk1.values(), alg.k, label, reps, kinds,
                                   {"eta": eta, "grid_size": len(grid), "model_digest": h.digest})
        except QuotientError as exc:
            status, message = EXHAUSTED, str(exc)
    if status == EXHAUSTED and not message:
        message = "every sample is its own class; decrease eta"
    if graph is not None:
        graph.metadata["status"] = status
    return BisimulationResult(eta, grid, alg, graph, status, message, system)


def gamma_check(result: BisimulationResult):
    """Check ``{(r, [r])}`` on the sampled finite restriction.

    The restriction holds the samples and their successors; pairs are checked
    for the samples, whose transitions are all known. Successor classes are
    recomputed from scratch at horizon ``k``.
    """
    system, graph, k = result.system, result.graph, result.k
    if graph is None:
        raise QuotientError("no quotient to check")
    trans = []
    omap: dict = {}
    cls: dict = {}
    for r in result.grid.points:
        omap[r] = system.output(r)
        cls[r] = result.algorithm.Hk[r]
        for y, (t, u) in system.labelled_successors(r).items():
            trans.append((r, u, t))
            omap[t] = system.output(t)
            if t not in cls:
                cls[t] = horizon_behaviors(system, t, k)
    S = FiniteTransitionSystem.build(trans, omap)
    Q = graph.to_transition_system()
    index = {n.behaviors: n.id for n in graph.nodes}
    rel = set()
    for x, h in cls.items():
        if h not in index:
            return check_bisimulation(S, Q, set(), domain=[]), (x, h)
        rel.add((x, index[h]))
    return check_bisimulation(S, Q, rel, domain=result.grid.points), None


def isomorphic(g1: QuotientGraph, g2: QuotientGraph) -> bool:
    return nx.is_isomorphic(g1.to_networkx(), g2.to_networkx(),
                            node_match=lambda a, b: a["output"] == b["output"],
                            edge_match=lambda a, b: a["input"] == b["input"])


@dataclass
class SweepReport:
    rounds: list[BisimulationResult]
    stable: bool
    status: str

    @property
    def counts(self) -> list[int]:
        return [r.class_count for r in self.rounds]

    @property
    def final(self) -> BisimulationResult:
        return self.rounds[-1]

    def lines(self) -> list[str]:
        return [f"round {i}: {r.summary()}" for i, r in enumerate(self.rounds)]


def eta_sweep(h: HybridAutomaton, eta0: float, factor: float = 0.5, rounds: int = 3,
              cfg: FlowConfig = FlowConfig(), k_max: int = 100,
              progress: Optional[Callable[[BisimulationResult], None]] = None) -> SweepReport:
    """Run the pipeline at ``eta0 * factor**i`` and check the result settles.

    Stable means the final two rounds reached a fixed point with the same
    class count and isomorphic quotient graphs; anything else is reported as
    inconclusive.
    """
    if rounds < 2:
        raise ValueError("a sweep needs at least two rounds")
    if not 0 < factor < 1:
        raise ValueError("factor must lie in (0, 1)")
    results = []
    for i in range(rounds):
        res = compute_bisimulation(h, eta0 * factor ** i, cfg, k_max=k_max)
        results.append(res)
        if progress:
            progress(res)
    a, b = results[-2], results[-1]
    stable = (a.status == FIXED_POINT and b.status == FIXED_POINT and a.class_count == b.class_count
              and a.graph is not None and b.graph is not None and isomorphic(a.graph, b.graph))
    return SweepReport(results, stable, STABLE if stable else INCONCLUSIVE)
