"""Flows of a smooth vector field restricted to a closed polytope union.

:func:`transverse` integrates with fixed-step classical RK4 and localises the
first boundary crossing by bisection on the step fraction. It reports one of

* ``EXIT``: the trajectory leaves the region; ``time``/``point`` are the
  transverse time and point,
* ``EQUILIBRIUM``: the field norm dropped below ``eq_tol`` first,
* ``TIMEOUT``: ``t_max`` elapsed with neither,
* ``ESCAPED``: a crossing could not be localised.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

from .expr import Expr, ExprEvalError, compile_source, compile_vector, to_python
from .sets import PolytopeUnion

Point = tuple[float, ...]


@dataclass(frozen=True)
class FlowConfig:
    """Numerical parameters. ``step`` is in time units, ``event_tol`` and
    ``eq_tol`` in state-space units."""

    step: float = 1e-3
    event_tol: float = 1e-9
    eq_tol: float = 1e-6
    t_max: float = 50.0

    def __post_init__(self):
        for name in ("step", "event_tol", "eq_tol", "t_max"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")


class FlowKind(enum.Enum):
    EXIT = "exit"
    EQUILIBRIUM = "equilibrium"
    TIMEOUT = "timeout"
    ESCAPED = "escaped"


@dataclass(frozen=True)
class FlowResult:
    kind: FlowKind
    point: Point
    time: float
    trajectory: Optional[tuple[tuple[float, Point], ...]] = None

    @property
    def exited(self) -> bool:
        return self.kind is FlowKind.EXIT


class _Exited:
    """Marker returned by :func:`flow_at` after the trajectory has left the
    region (the flow is undefined there)."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "EXITED"

    def __bool__(self):
        return False


EXITED = _Exited()


class VectorField:
    """A compiled vector field ``f: R^n -> R^n``.

    Holds both a plain evaluator and a generated RK4 step with the stage
    computations inlined, which is what keeps long flows affordable.
    """

    def __init__(self, exprs: Sequence[Expr], varnames: Sequence[str]):
        if len(exprs) != len(varnames):
            raise ValueError(f"field has {len(exprs)} components for {len(varnames)} variables")
        self.exprs = tuple(exprs)
        self.varnames = tuple(varnames)
        self.dim = len(varnames)
        self._f = compile_vector(self.exprs, self.varnames)
        self._rk4 = _compile_rk4(self.exprs, self.varnames)

    def __call__(self, p: Sequence[float]) -> tuple[float, ...]:
        try:
            out = self._f(p)
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise ExprEvalError(f"field evaluation failed at {tuple(p)}: {exc}") from exc
        if not all(math.isfinite(v) for v in out):
            raise ExprEvalError(f"non-finite field value at {tuple(p)}")
        return out

    def rk4(self, p: Sequence[float], h: float) -> tuple[float, ...]:
        try:
            out = self._rk4(p, h)
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise ExprEvalError(f"field evaluation failed near {tuple(p)}: {exc}") from exc
        if not all(math.isfinite(v) for v in out):
            raise ExprEvalError(f"non-finite state after a step from {tuple(p)}")
        return out

    def norm(self, p: Sequence[float]) -> float:
        return math.hypot(*self(p))


def _compile_rk4(exprs, varnames) -> Callable:
    n = len(varnames)
    lines = ["def _rk4(p, h):"]
    lines.append(f"    {', '.join(f'x{i}' for i in range(n))}{',' if n == 1 else ''} = p")
    lines.append("    hh = 0.5 * h")

    def stage(k, src):
        names = {v: f"{src}{i}" for i, v in enumerate(varnames)}
        for i, e in enumerate(exprs):
            lines.append(f"    {k}_{i} = {to_python(e, names)}")

    stage("k1", "x")
    for i in range(n):
        lines.append(f"    a{i} = x{i} + hh * k1_{i}")
    stage("k2", "a")
    for i in range(n):
        lines.append(f"    b{i} = x{i} + hh * k2_{i}")
    stage("k3", "b")
    for i in range(n):
        lines.append(f"    c{i} = x{i} + h * k3_{i}")
    stage("k4", "c")
    outs = [f"x{i} + h / 6.0 * (k1_{i} + 2.0 * k2_{i} + 2.0 * k3_{i} + k4_{i})" for i in range(n)]
    lines.append(f"    return ({', '.join(outs)}{',' if n == 1 else ''})")
    return compile_source("\n".join(lines) + "\n", "_rk4")


def _as_field(field, varnames=None) -> VectorField:
    if isinstance(field, VectorField):
        return field
    if varnames is None:
        raise TypeError("an expression vector needs variable names")
    return VectorField(field, varnames)


def _crossing_test(region: PolytopeUnion, q: Sequence[float], tol: float):
    """Predicate ``outside(x)`` restricted to the constraints that ``q``
    violates by more than ``tol``; constraints that are merely at rounding
    noise cannot trigger a spurious crossing during bisection."""
    crossed = []
    for comp in region.components:
        cs = [c for c in comp.constraints if c.violation(q) > tol]
        crossed.append(cs)

    def outside(x) -> bool:
        return all(any(c.violation(x) > 0.0 for c in cs) for cs in crossed)

    return outside


def _localise(field: VectorField, region: PolytopeUnion, p, h, q, cfg: FlowConfig):
    """Bisect the step fraction in ``(0, h]`` for the first point outside.
    Returns ``(dt, inside_point)``."""
    outside = _crossing_test(region, q, cfg.event_tol)
    speed = max(field.norm(p), 1e-300)
    lo, hi = 0.0, h
    lo_pt = tuple(p)
    for _ in range(200):
        if (hi - lo) * speed <= 0.1 * cfg.event_tol or hi - lo <= 1e-16 * max(1.0, h):
            break
        mid = 0.5 * (lo + hi)
        x = field.rk4(p, mid)
        if outside(x):
            hi = mid
        else:
            lo, lo_pt = mid, x
    return lo, lo_pt


def transverse(field, region: PolytopeUnion, start: Sequence[float], cfg: FlowConfig = FlowConfig(),
               varnames: Sequence[str] | None = None, record: bool = False) -> FlowResult:
    """Integrate ``dx/dt = f(x)`` from ``start`` until it leaves ``region``.

    Args:
        field: a :class:`VectorField`, or a sequence of expressions together
            with ``varnames``.
        region: closed set the flow is restricted to.
        start: initial point, inside ``region`` within ``cfg.event_tol``.
        cfg: numerical parameters.
        record: keep ``(time, point)`` samples in the result.

    Raises:
        ValueError: if ``start`` is not in ``region``.
        ExprEvalError: if the field cannot be evaluated along the way.
    """
    f = _as_field(field, varnames)
    p = tuple(float(x) for x in start)
    if region.violation(p) > cfg.event_tol:
        raise ValueError(f"start point {p} is outside the region")
    h = cfg.step
    samples = [(0.0, p)] if record else None
    i = 0
    t = 0.0
    while t < cfg.t_max:
        if f.norm(p) <= cfg.eq_tol:
            return FlowResult(FlowKind.EQUILIBRIUM, p, t, _freeze(samples))
        q = f.rk4(p, h)
        if region.violation(q) > cfg.event_tol:
            dt, x = _localise(f, region, p, h, q, cfg)
            if region.violation(x) > 10 * cfg.event_tol:
                return FlowResult(FlowKind.ESCAPED, x, t + dt, _freeze(samples))
            if record:
                samples.append((t + dt, x))
            return FlowResult(FlowKind.EXIT, x, t + dt, _freeze(samples))
        i += 1
        p = q
        t = i * h
        if record:
            samples.append((t, p))
    return FlowResult(FlowKind.TIMEOUT, p, t, _freeze(samples))


def _freeze(samples):
    return tuple(samples) if samples is not None else None


def exits_immediately(field, region: PolytopeUnion, start: Sequence[float], cfg: FlowConfig = FlowConfig(),
                      varnames: Sequence[str] | None = None) -> bool:
    """Whether the flow leaves ``region`` within one integration step.

    This is the numerical reading of a zero transverse time: crossings that
    happen inside the first step cannot be told apart from ``theta = 0`` at
    the integrator's time resolution.
    """
    f = _as_field(field, varnames)
    if f.norm(start) <= cfg.eq_tol:
        return False
    res = transverse(f, region, start, replace(cfg, t_max=cfg.step))
    return res.kind is FlowKind.EXIT and res.time <= cfg.step


def flow_at(field, region: PolytopeUnion, start: Sequence[float], t: float, cfg: FlowConfig = FlowConfig(),
            varnames: Sequence[str] | None = None):
    """Point reached after time ``t``, or :data:`EXITED` if the trajectory
    left ``region`` before ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    f = _as_field(field, varnames)
    p = tuple(float(x) for x in start)
    if region.violation(p) > cfg.event_tol:
        raise ValueError(f"start point {p} is outside the region")
    if t == 0:
        return p
    h = cfg.step
    nsteps = int(math.floor(t / h))
    for i in range(nsteps + 1):
        dt = h if i < nsteps else t - nsteps * h
        if dt <= 0:
            break
        q = f.rk4(p, dt)
        if region.violation(q) > cfg.event_tol:
            lo, _ = _localise(f, region, p, dt, q, cfg)
            # crossing exactly at the requested time still counts as inside
            if i * h + lo >= t - 1e-12 * max(1.0, t):
                return q
            return EXITED
        p = q
    return p


def is_equilibrium(field, p: Sequence[float], eq_tol: float = 1e-6, varnames: Sequence[str] | None = None) -> bool:
    """True iff the Euclidean norm of the field at ``p`` is at most ``eq_tol``."""
    return _as_field(field, varnames).norm(p) <= eq_tol
