"""JSON and DOT renderings of quotient graphs and finite transition systems.

JSON layout::

    {"metadata": {"k", "eta", "grid_size", "model_digest", "status"},
     "states": [{"id", "output", "representative": {"mode", "point"}}],
     "transitions": [{"src", "input", "dst"}]}

Keys keep this order, states are sorted by id and transitions by
``(src, input, dst)``. Floats use Python's shortest round-tripping repr, so
re-parsing yields the identical values.
"""

from __future__ import annotations

import json
from typing import Any

from .bisim import QuotientGraph, QuotientNode
from .mapped import HybridState
from .transition import FiniteTransitionSystem

METADATA_KEYS = ("k", "eta", "grid_size", "model_digest", "status")


def _rep(node: QuotientNode) -> dict | None:
    r = node.representative
    if r is None:
        return None
    return {"mode": r.mode, "point": [float(x) for x in r.point]}


def quotient_to_dict(g: QuotientGraph) -> dict[str, Any]:
    meta = {key: g.metadata.get(key) for key in METADATA_KEYS}
    states = [{"id": n.id, "output": n.output, "representative": _rep(n)}
              for n in sorted(g.nodes, key=lambda n: n.id)]
    transitions = [{"src": s, "input": u, "dst": d} for s, u, d in sorted(g.edges)]
    return {"metadata": meta, "states": states, "transitions": transitions}


def to_json(g: QuotientGraph) -> str:
    return json.dumps(quotient_to_dict(g), indent=2, allow_nan=False) + "\n"


def system_to_dict(S: FiniteTransitionSystem, metadata: dict | None = None) -> dict[str, Any]:
    """Same schema for a finite transition system; states are numbered in
    their stored order and carry no representative unless they are
    :class:`HybridState` objects."""
    ids = {x: i for i, x in enumerate(S.states)}
    states = []
    for x in S.states:
        rep = {"mode": x.mode, "point": list(x.point)} if isinstance(x, HybridState) else None
        states.append({"id": ids[x], "output": S.H(x), "representative": rep})
    trans = sorted((ids[x], str(u), ids[y]) for x, u, y in S.transitions)
    meta = {key: (metadata or {}).get(key) for key in METADATA_KEYS}
    return {"metadata": meta, "states": states,
            "transitions": [{"src": s, "input": u, "dst": d} for s, u, d in trans]}


def from_json(text: str) -> dict[str, Any]:
    """Parse and sanity-check a document written by :func:`to_json`."""
    doc = json.loads(text)
    if list(doc) != ["metadata", "states", "transitions"]:
        raise ValueError("unexpected top-level keys")
    ids = {s["id"] for s in doc["states"]}
    for t in doc["transitions"]:
        if t["src"] not in ids or t["dst"] not in ids:
            raise ValueError(f"transition {t} references an unknown state")
    return doc


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(g: QuotientGraph, name: str = "quotient") -> str:
    lines = [f"digraph {_q(name)} {{", "  node [shape=circle];"]
    for n in sorted(g.nodes, key=lambda n: n.id):
        lines.append(f"  s{n.id} [label={_q(f'{n.output} {n.id}')}];")
    for s, u, d in sorted(g.edges):
        lines.append(f"  s{s} -> s{d} [label={_q(u)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def points_dump(grid) -> str:
    """Tab-separated ``mode, coordinates..., provenance`` lines of a sample
    grid, for scatter plots made elsewhere."""
    out = []
    for s, why in zip(grid.points, grid.provenance):
        out.append("\t".join([s.mode, *(repr(float(x)) for x in s.point), why]))
    return "\n".join(out) + "\n"
