"""Event-sampled transition system of a hybrid automaton.

States are ``(mode, point)`` pairs sampled just before jumps: guard points
where the mode's flow leaves its invariant, equilibria of the mode's field,
and blocking points. A successor is one jump followed by one flow in the
target mode, indexed by the output of the target mode.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .flow import FlowConfig, FlowKind, exits_immediately, transverse
from .model import HybridAutomaton, JumpEdge
from .sets import clean_coordinate

log = logging.getLogger(__name__)

EQUILIBRIUM_INPUT = "*"


@dataclass(frozen=True, order=True)
class HybridState:
    mode: str
    point: tuple[float, ...]

    def __str__(self):
        return f"{self.mode}(" + ", ".join(f"{x:.6g}" for x in self.point) + ")"


class StateKind(enum.Enum):
    GUARD_POINT = "guard"
    EQUILIBRIUM = "equilibrium"
    BLOCKING = "blocking"


@dataclass(frozen=True)
class StateClass:
    kind: StateKind
    edges: tuple[JumpEdge, ...] = ()


class NotAMappedState(ValueError):
    """The point is not a pre-jump, equilibrium or blocking state."""


class SuccessorError(RuntimeError):
    """Flow after a jump neither exited nor settled (timeout, escape)."""

    def __init__(self, message: str, state: HybridState):
        super().__init__(f"{message} (from {state})")
        self.state = state


class OutputNondeterminism(RuntimeError):
    pass


def newton_polish(field, p: Sequence[float], tol: float = 1e-13, iters: int = 50) -> Optional[np.ndarray]:
    """Refine a root of ``field`` near ``p`` with finite-difference Newton."""
    x = np.array(p, dtype=float)
    n = len(x)
    for _ in range(iters):
        fx = np.array(field(x))
        if np.linalg.norm(fx) <= tol:
            return x
        J = np.empty((n, n))
        for j in range(n):
            h = 1e-7 * max(1.0, abs(x[j]))
            xp = x.copy()
            xp[j] += h
            J[:, j] = (np.array(field(xp)) - fx) / h
        try:
            dx = np.linalg.solve(J, -fx)
        except np.linalg.LinAlgError:
            return None
        x = x + dx
        if not np.all(np.isfinite(x)):
            return None
    return x if np.linalg.norm(field(x)) <= 1e3 * tol else None


def find_equilibria(h: HybridAutomaton, mode: str, cfg: FlowConfig = FlowConfig(),
                    per_axis: int = 5) -> list[tuple[float, ...]]:
    """Roots of the mode's field inside its invariant: Newton from a coarse
    lattice over the invariant's bounding box, then deduplicated."""
    m = h.mode(mode)
    field = h.fields[mode]
    roots: list[tuple[float, ...]] = []
    for comp in m.invariant.components:
        verts = comp.vertices()
        if not len(verts):
            log.warning("invariant component of %s is unbounded or degenerate; no equilibrium search", mode)
            continue
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        axes = [np.linspace(a, b, per_axis) for a, b in zip(lo, hi)]
        for start in itertools.product(*axes):
            root = newton_polish(field, start)
            if root is None:
                continue
            t = tuple(clean_coordinate(float(x)) for x in root)
            if not m.invariant.contains(t, cfg.event_tol) or field.norm(t) > cfg.eq_tol:
                continue
            if not any(math.dist(t, r) <= 1e-9 for r in roots):
                roots.append(t)
    return sorted(roots)


class MappedSystem:
    """Lazily evaluated successor function of a hybrid automaton.

    Successors are memoised; the memo is a pure cache keyed by state and
    output symbol.
    """

    def __init__(self, h: HybridAutomaton, cfg: FlowConfig = FlowConfig()):
        self.h = h
        self.cfg = cfg
        self._succ: dict[HybridState, dict[str, tuple[HybridState, str]]] = {}
        self._class: dict[HybridState, StateClass] = {}
        self._equilibria: dict[str, list[tuple[float, ...]]] = {}
        self.calls = 0

    def output(self, s: HybridState) -> str:
        return self.h.mode(s.mode).output

    # ---- classification -------------------------------------------------

    def enabled_edges(self, s: HybridState) -> tuple[JumpEdge, ...]:
        tol = self.cfg.event_tol
        return tuple(e for e in self.h.edges_from(s.mode) if e.guard.contains(s.point, tol))

    def classify(self, s: HybridState) -> StateClass:
        """Guard point, equilibrium or blocking point.

        A guard point must also be a place where the flow leaves the
        invariant at once; guard points where the flow carries on inward are
        not pre-jump states.

        Raises:
            NotAMappedState: for points outside the invariant, guard points
                where the flow continues, and interior points.
        """
        if s in self._class:
            return self._class[s]
        mode = self.h.mode(s.mode)
        if not mode.invariant.contains(s.point, self.cfg.event_tol):
            raise NotAMappedState(f"{s} is outside the invariant of {s.mode}")
        field = self.h.fields[s.mode]
        edges = self.enabled_edges(s)
        leaves = exits_immediately(field, mode.invariant, s.point, self.cfg)
        if edges and leaves:
            result = StateClass(StateKind.GUARD_POINT, edges)
        elif field.norm(s.point) <= self.cfg.eq_tol:
            result = StateClass(StateKind.EQUILIBRIUM)
        elif edges:
            raise NotAMappedState(f"{s} lies on a guard but the flow does not leave the invariant there")
        elif leaves:
            result = StateClass(StateKind.BLOCKING)
        else:
            raise NotAMappedState(f"{s} is an interior point; the flow continues")
        self._class[s] = result
        return result

    # ---- successors -----------------------------------------------------

    def equilibria(self, mode: str) -> list[tuple[float, ...]]:
        """Equilibria of ``mode`` inside its invariant, found on first use."""
        if mode not in self._equilibria:
            self._equilibria[mode] = find_equilibria(self.h, mode, self.cfg)
        return self._equilibria[mode]

    def _settle(self, mode: str, p: Sequence[float]) -> tuple[float, ...]:
        """Snap a numerically converged point onto the equilibrium it
        approaches."""
        known = self.equilibria(mode)
        root = newton_polish(self.h.fields[mode], p)
        if root is None:
            return tuple(float(x) for x in p)
        for e in known:
            if math.dist(e, root) <= 1e-9:
                return e
        t = tuple(clean_coordinate(float(x)) for x in root)
        known.append(t)
        return t

    def _jump_flow(self, s: HybridState, e: JumpEdge) -> Optional[HybridState]:
        target = self.h.mode(e.target)
        xi = self.h.resets[e](s.point)
        if not target.invariant.contains(xi, self.cfg.event_tol):
            return None
        field = self.h.fields[e.target]
        res = transverse(field, target.invariant, xi, self.cfg)
        if res.kind is FlowKind.EXIT:
            # leaving within the first step is a zero-time stay: no transition
            if res.time <= self.cfg.step:
                return None
            return HybridState(e.target, res.point)
        if res.kind is FlowKind.EQUILIBRIUM:
            return HybridState(e.target, self._settle(e.target, res.point))
        if res.kind is FlowKind.TIMEOUT:
            raise SuccessorError(f"flow in {e.target} after {e.label} neither exits nor settles "
                                 f"within t_max={self.cfg.t_max}", s)
        raise SuccessorError(f"integration escaped the invariant of {e.target} after {e.label}", s)

    def successors(self, s: HybridState) -> dict[str, HybridState]:
        """``{output: successor}``; the domain is the set of enabled outputs."""
        return {y: t for y, (t, _) in self.labelled_successors(s).items()}

    def labelled_successors(self, s: HybridState) -> dict[str, tuple[HybridState, str]]:
        """``{output: (successor, input label)}``."""
        if s in self._succ:
            return self._succ[s]
        self.calls += 1
        cls = self.classify(s)
        out: dict[str, tuple[HybridState, str]] = {}
        if cls.kind is StateKind.EQUILIBRIUM:
            out[self.output(s)] = (s, EQUILIBRIUM_INPUT)
        elif cls.kind is StateKind.GUARD_POINT:
            for e in sorted(cls.edges, key=lambda e: (e.target, e.input)):
                t = self._jump_flow(s, e)
                if t is None:
                    continue
                y = self.h.mode(e.target).output
                if y in out:
                    prev, label = out[y]
                    if prev != t:
                        raise OutputNondeterminism(f"two successors of {s} with output {y!r}: {prev} and {t}")
                    out[y] = (prev, "|".join(sorted({*label.split("|"), e.input})))
                else:
                    out[y] = (t, e.input)
        self._succ[s] = dict(sorted(out.items()))
        return self._succ[s]

    def successor(self, s: HybridState, y: str) -> Optional[HybridState]:
        entry = self.labelled_successors(s).get(y)
        return entry[0] if entry else None

    def enabled_outputs(self, s: HybridState) -> set[str]:
        return set(self.labelled_successors(s))


def _system(h, cfg) -> MappedSystem:
    return MappedSystem(h, cfg)


def classify(h: HybridAutomaton, s: HybridState, cfg: FlowConfig = FlowConfig()) -> StateClass:
    return _system(h, cfg).classify(s)


def successor(h: HybridAutomaton, s: HybridState, y: str, cfg: FlowConfig = FlowConfig()) -> Optional[HybridState]:
    """Successor of ``s`` whose output is ``y``, or None if there is none."""
    return _system(h, cfg).successor(s, y)


def enabled_outputs(h: HybridAutomaton, s: HybridState, cfg: FlowConfig = FlowConfig()) -> set[str]:
    return _system(h, cfg).enabled_outputs(s)
