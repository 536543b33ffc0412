"""Hybrid automaton data model, model-file loader and assumption checks.

Model files are line oriented; ``#`` starts a comment::

    vars T1 T2
    const u = 1                       # optional named constants

    mode ON_safe output ON_safe
      flow T1' = -T1 + u
      flow T2' = -T2 + T1
      invariant 0 <= T1 <= 1; 0 <= T2 <= 1; abs(T1 - T2) <= 0.25

    edge ON_safe -> ON_unsafe input ON
      guard T1 - T2 = 0.25; 0.25 <= T1 <= 0.75
      reset T1 = T1                   # omitted resets are the identity

Several ``invariant`` (or ``guard``) lines in one block form a union.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .expr import Expr, ExprSyntaxError, Var, functions, parse_expr, variables
from .flow import FlowConfig, VectorField, exits_immediately
from .sets import ConstraintError, PolytopeUnion, parse_constraint_line, random_points, union_of


class ModelError(ValueError):
    """Syntax or link error in a model file."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class Mode:
    name: str
    field: tuple[Expr, ...]
    invariant: PolytopeUnion
    output: str


@dataclass(frozen=True)
class JumpEdge:
    source: str
    input: str
    target: str
    guard: PolytopeUnion
    reset: tuple[Expr, ...]

    @property
    def label(self) -> str:
        return f"{self.source} -{self.input}-> {self.target}"


@dataclass(frozen=True, eq=False)
class HybridAutomaton:
    variables: tuple[str, ...]
    modes: tuple[Mode, ...]
    edges: tuple[JumpEdge, ...]
    source_text: str = ""

    @property
    def dim(self) -> int:
        return len(self.variables)

    @cached_property
    def mode_map(self) -> dict[str, Mode]:
        return {m.name: m for m in self.modes}

    def mode(self, name: str) -> Mode:
        return self.mode_map[name]

    @property
    def inputs(self) -> frozenset[str]:
        return frozenset(e.input for e in self.edges)

    @property
    def outputs(self) -> frozenset[str]:
        return frozenset(m.output for m in self.modes)

    def edges_from(self, name: str) -> tuple[JumpEdge, ...]:
        return tuple(e for e in self.edges if e.source == name)

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()

    @cached_property
    def fields(self) -> dict[str, VectorField]:
        return {m.name: VectorField(m.field, self.variables) for m in self.modes}

    @cached_property
    def resets(self) -> dict[JumpEdge, VectorField]:
        return {e: VectorField(e.reset, self.variables) for e in self.edges}

    def __hash__(self):
        return id(self)


# --------------------------------------------------------------------------
# loader
# --------------------------------------------------------------------------

_IDENT = r"[A-Za-z_][A-Za-z_0-9]*"
_MODE = re.compile(rf"^mode\s+({_IDENT})\s+output\s+({_IDENT})$")
_EDGE = re.compile(rf"^edge\s+({_IDENT})\s*->\s*({_IDENT})\s+input\s+({_IDENT}|\*)$")
_FLOW = re.compile(rf"^flow\s+({_IDENT})\s*'\s*=\s*(.+)$")
_RESET = re.compile(rf"^reset\s+({_IDENT})\s*=\s*(.+)$")
_CONST = re.compile(rf"^const\s+({_IDENT})\s*=\s*(.+)$")


def _expr(text: str, lineno: int, constants) -> Expr:
    try:
        return parse_expr(text, constants)
    except ExprSyntaxError as exc:
        raise ModelError(f"in expression {text!r}: {exc}", lineno) from exc


def _constraints(text: str, varnames, lineno, constants) -> PolytopeUnion:
    try:
        return parse_constraint_line(text, varnames, constants)
    except (ConstraintError, ExprSyntaxError) as exc:
        raise ModelError(f"in constraint {text!r}: {exc}", lineno) from exc


def parse_model(text: str) -> HybridAutomaton:
    """Parse and link a model file.

    Raises:
        ModelError: on syntax errors, undeclared variables, duplicate modes,
            edges to unknown modes, empty guards or dimension mismatches.
    """
    varnames: Optional[tuple[str, ...]] = None
    constants: dict[str, float] = {}
    modes: list[dict] = []
    edges: list[dict] = []
    block: Optional[dict] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword = line.split()[0]
        if keyword == "vars":
            if varnames is not None:
                raise ModelError("duplicate 'vars' line", lineno)
            names = line[4:].replace(",", " ").split()
            if not names:
                raise ModelError("'vars' needs at least one name", lineno)
            if len(set(names)) != len(names):
                raise ModelError("duplicate variable name", lineno)
            varnames = tuple(names)
            continue
        if keyword == "const":
            m = _CONST.match(line)
            if not m:
                raise ModelError("expected 'const <name> = <number>'", lineno)
            try:
                constants[m.group(1)] = float(m.group(2))
            except ValueError:
                raise ModelError(f"constant {m.group(1)!r} must be a number", lineno) from None
            continue
        if varnames is None:
            raise ModelError("'vars' must come first", lineno)
        if keyword == "mode":
            m = _MODE.match(line)
            if not m:
                raise ModelError("expected 'mode <name> output <symbol>'", lineno)
            block = {"kind": "mode", "name": m.group(1), "output": m.group(2), "flow": {},
                     "invariant": [], "line": lineno}
            modes.append(block)
        elif keyword == "edge":
            m = _EDGE.match(line)
            if not m:
                raise ModelError("expected 'edge <src> -> <dst> input <symbol>'", lineno)
            block = {"kind": "edge", "source": m.group(1), "target": m.group(2), "input": m.group(3),
                     "guard": [], "reset": {}, "line": lineno}
            edges.append(block)
        elif keyword == "flow":
            if block is None or block["kind"] != "mode":
                raise ModelError("'flow' outside a mode block", lineno)
            m = _FLOW.match(line)
            if not m:
                raise ModelError("expected \"flow <var>' = <expr>\"", lineno)
            var = m.group(1)
            if var not in varnames:
                raise ModelError(f"flow for undeclared variable {var!r}", lineno)
            if var in block["flow"]:
                raise ModelError(f"duplicate flow for {var!r}", lineno)
            block["flow"][var] = (_expr(m.group(2), lineno, constants), lineno)
        elif keyword == "invariant":
            if block is None or block["kind"] != "mode":
                raise ModelError("'invariant' outside a mode block", lineno)
            block["invariant"].append(_constraints(line[len("invariant"):], varnames, lineno, constants))
        elif keyword == "guard":
            if block is None or block["kind"] != "edge":
                raise ModelError("'guard' outside an edge block", lineno)
            block["guard"].append(_constraints(line[len("guard"):], varnames, lineno, constants))
        elif keyword == "reset":
            if block is None or block["kind"] != "edge":
                raise ModelError("'reset' outside an edge block", lineno)
            m = _RESET.match(line)
            if not m:
                raise ModelError("expected 'reset <var> = <expr>'", lineno)
            var = m.group(1)
            if var not in varnames:
                raise ModelError(f"reset of undeclared variable {var!r}", lineno)
            block["reset"][var] = (_expr(m.group(2), lineno, constants), lineno)
        else:
            raise ModelError(f"unknown keyword {keyword!r}", lineno)

    if varnames is None:
        raise ModelError("model declares no variables")
    return _link(varnames, modes, edges, text)


def _check_vars(e: Expr, varnames, lineno, what):
    unknown = variables(e) - set(varnames)
    if unknown:
        raise ModelError(f"undeclared variable(s) {sorted(unknown)} in {what}", lineno)


def _link(varnames, mode_blocks, edge_blocks, text) -> HybridAutomaton:
    seen: set[str] = set()
    modes = []
    for b in mode_blocks:
        if b["name"] in seen:
            raise ModelError(f"duplicate mode {b['name']!r}", b["line"])
        seen.add(b["name"])
        missing = [v for v in varnames if v not in b["flow"]]
        if missing:
            raise ModelError(f"mode {b['name']!r}: field has {len(b['flow'])} components, "
                             f"expected {len(varnames)} (missing {missing})", b["line"])
        field = []
        for v in varnames:
            e, lineno = b["flow"][v]
            _check_vars(e, varnames, lineno, f"flow of {v!r}")
            if "abs" in functions(e):
                raise ModelError("abs() is not smooth and is not allowed in vector fields", lineno)
            field.append(e)
        if not b["invariant"]:
            raise ModelError(f"mode {b['name']!r} has no invariant", b["line"])
        inv = union_of(*b["invariant"])
        if not any(c.is_nonempty() for c in inv.components):
            raise ModelError(f"mode {b['name']!r} has an empty invariant", b["line"])
        modes.append(Mode(b["name"], tuple(field), inv, b["output"]))

    edges = []
    for b in edge_blocks:
        label = f"{b['source']} -{b['input']}-> {b['target']}"
        for end in ("source", "target"):
            if b[end] not in seen:
                raise ModelError(f"edge {label} references unknown mode {b[end]!r}", b["line"])
        if not b["guard"]:
            raise ModelError(f"edge {label} has no guard", b["line"])
        guard = union_of(*b["guard"])
        comps = tuple(c for c in guard.components if c.is_nonempty())
        if not comps:
            raise ModelError(f"edge {label} has an empty guard", b["line"])
        reset = []
        for v in varnames:
            if v in b["reset"]:
                e, lineno = b["reset"][v]
                _check_vars(e, varnames, lineno, f"reset of {v!r}")
                reset.append(e)
            else:
                reset.append(Var(v))
        edges.append(JumpEdge(b["source"], b["input"], b["target"], PolytopeUnion(comps), tuple(reset)))
    return HybridAutomaton(tuple(varnames), tuple(modes), tuple(edges), text)


def load_model(path: str | Path) -> HybridAutomaton:
    return parse_model(Path(path).read_text())


def thermostat_path() -> Path:
    """Path of the bundled two-area heater model."""
    return Path(__file__).with_name("models") / "thermostat.hds"


def load_thermostat() -> HybridAutomaton:
    return load_model(thermostat_path())


# --------------------------------------------------------------------------
# assumption checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    check: str  # closedness | exit | containment | output-determinism
    message: str
    edge: Optional[str] = None
    point: Optional[tuple[float, ...]] = None

    def __str__(self):
        parts = [f"[{self.check}]"]
        if self.edge:
            parts.append(f"edge {self.edge}:")
        parts.append(self.message)
        if self.point is not None:
            parts.append("at (" + ", ".join(f"{x:.6g}" for x in self.point) + ")")
        return " ".join(parts)


def output_determinism_conflicts(h: HybridAutomaton) -> list[tuple[JumpEdge, JumpEdge]]:
    """Pairs of edges from one mode whose targets differ but share an output."""
    out = []
    for m in h.modes:
        es = h.edges_from(m.name)
        for i, a in enumerate(es):
            for b in es[i + 1:]:
                if a.target != b.target and h.mode(a.target).output == h.mode(b.target).output:
                    out.append((a, b))
    return out


def validate_assumptions(h: HybridAutomaton, probes: int = 20, seed: int = 0,
                         cfg: FlowConfig = FlowConfig()) -> list[Diagnostic]:
    """Check closed invariants, jumps only where the flow exits, guards inside
    invariants (on ``probes`` random guard points per component) and output
    determinism of the discrete skeleton. An empty list means all passed."""
    diags: list[Diagnostic] = []
    for m in h.modes:
        for c in m.invariant.constraints:
            if c.strict:
                diags.append(Diagnostic("closedness", f"invariant of mode {m.name} uses a strict inequality"))
                break
    for e in h.edges:
        if any(c.strict for c in e.guard.constraints):
            diags.append(Diagnostic("closedness", "guard uses a strict inequality", e.label))

    rng = np.random.default_rng(seed)
    for e in h.edges:
        src = h.mode(e.source)
        field = h.fields[e.source]
        reported_exit = reported_inv = False
        for comp in e.guard.components:
            for p in random_points(comp, probes, rng, cfg.event_tol):
                if not src.invariant.contains(p, cfg.event_tol):
                    if not reported_inv:
                        diags.append(Diagnostic("containment", f"guard point outside invariant of {src.name}",
                                                e.label, p))
                        reported_inv = True
                    continue
                if reported_exit:
                    continue
                if field.norm(p) <= cfg.eq_tol:
                    continue
                if not exits_immediately(field, src.invariant, p, cfg):
                    diags.append(Diagnostic("exit", "flow does not leave the invariant here "
                                            "(transverse point differs from the guard point)", e.label, p))
                    reported_exit = True

    for a, b in output_determinism_conflicts(h):
        diags.append(Diagnostic("output-determinism",
                                f"targets {a.target} and {b.target} share output {h.mode(a.target).output!r}",
                                a.label))
    return diags

