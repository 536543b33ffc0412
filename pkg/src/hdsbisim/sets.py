"""Unions of convex affine polytopes.

Invariants and guards are stored as :class:`PolytopeUnion` objects. A convex
component is a conjunction of affine constraints ``a . x <= b`` or
``a . x = b``. Membership is tolerance based and sets are treated as closed.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .expr import BinOp, Call, Expr, Neg, Num, Pow, Var, parse_expr

LE = "<="
EQ = "="
GE = ">="


@dataclass(frozen=True)
class AffineConstraint:
    """``coefficients . x  relation  offset`` with relation in ``<=, =, >=``.

    ``strict`` records that the source used ``<`` or ``>``; the set is still
    treated as closed, and model validation reports it.
    """

    coefficients: tuple[float, ...]
    offset: float
    relation: str = LE
    strict: bool = False

    def __post_init__(self):
        if self.relation not in (LE, EQ, GE):
            raise ValueError(f"unknown relation {self.relation!r}")
        if not any(c != 0.0 for c in self.coefficients):
            raise ValueError("constraint has all-zero coefficients")

    def normalized(self) -> "AffineConstraint":
        """Same set with ``>=`` flipped to ``<=``."""
        if self.relation != GE:
            return self
        return AffineConstraint(tuple(-c for c in self.coefficients), -self.offset, LE, self.strict)

    def residual(self, p: Sequence[float]) -> float:
        return sum(c * x for c, x in zip(self.coefficients, p)) - self.offset

    def violation(self, p: Sequence[float]) -> float:
        """Positive when ``p`` violates the constraint."""
        r = self.residual(p)
        if self.relation == LE:
            return r
        if self.relation == GE:
            return -r
        return abs(r)

    def holds(self, p: Sequence[float], tol: float = 0.0) -> bool:
        return self.violation(p) <= tol


@dataclass(frozen=True)
class ConvexPolytope:
    constraints: tuple[AffineConstraint, ...]

    @property
    def dim(self) -> int:
        return len(self.constraints[0].coefficients)

    def violation(self, p: Sequence[float]) -> float:
        return max(c.violation(p) for c in self.constraints)

    def contains(self, p: Sequence[float], tol: float = 0.0) -> bool:
        return all(c.violation(p) <= tol for c in self.constraints)

    @property
    def equalities(self) -> tuple[AffineConstraint, ...]:
        return tuple(c for c in self.constraints if c.relation == EQ)

    @property
    def inequalities(self) -> tuple[AffineConstraint, ...]:
        return tuple(c.normalized() for c in self.constraints if c.relation != EQ)

    def as_halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """``A x <= b`` form with each equality split into two inequalities."""
        rows, rhs = [], []
        for c in self.constraints:
            c = c.normalized()
            rows.append(c.coefficients)
            rhs.append(c.offset)
            if c.relation == EQ:
                rows.append(tuple(-x for x in c.coefficients))
                rhs.append(-c.offset)
        return np.array(rows, dtype=float), np.array(rhs, dtype=float)

    def vertices(self, tol: float = 1e-9) -> np.ndarray:
        """Vertices by brute-force enumeration of ``dim``-subsets of the
        bounding hyperplanes. Fine for the low dimensions handled here."""
        n = self.dim
        A, b = self.as_halfspaces()
        found: list[np.ndarray] = []
        for rows in itertools.combinations(range(len(b)), n):
            M = A[list(rows)]
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            x = np.linalg.solve(M, b[list(rows)])
            if np.all(A @ x <= b + tol * (1 + np.abs(b))):
                if not any(np.allclose(x, v, atol=tol, rtol=0) for v in found):
                    found.append(x)
        if not found:
            return np.zeros((0, n))
        return np.array(sorted(found, key=tuple))

    def is_nonempty(self, rng: np.random.Generator | None = None, probes: int = 2000) -> bool:
        """Vertex enumeration for bounded low-dimensional polytopes, random
        probing of a bounding box otherwise."""
        if self.dim <= 3 and len(self.vertices()):
            return True
        rng = rng if rng is not None else np.random.default_rng(0)
        lo, hi = -10.0, 10.0
        pts = rng.uniform(lo, hi, size=(probes, self.dim))
        return any(self.contains(p, 1e-9) for p in pts)

    def section(self, tol: float = 1e-12) -> "AffineSection":
        """Affine parametrisation ``x = origin + basis @ s`` of the equality
        constraints (the whole space when there are none)."""
        n = self.dim
        eqs = self.equalities
        if not eqs:
            return AffineSection(np.zeros(n), np.eye(n))
        E = np.array([c.coefficients for c in eqs], dtype=float)
        e = np.array([c.offset for c in eqs], dtype=float)
        origin, *_ = np.linalg.lstsq(E, e, rcond=None)
        _, sv, vt = np.linalg.svd(E)
        rank = int(np.sum(sv > tol * max(1.0, sv[0])))
        basis = vt[rank:].T
        if basis.shape[1] == 1 and n == 2:
            # exact direction for lines in the plane
            a = E[0]
            d = np.array([-a[1], a[0]])
            basis = (d / np.linalg.norm(d))[:, None]
        for j in range(basis.shape[1]):
            col = basis[:, j]
            nz = np.flatnonzero(np.abs(col) > 1e-12)
            if len(nz) and col[nz[0]] < 0:
                basis[:, j] = -col
        return AffineSection(origin, basis)


@dataclass(frozen=True)
class AffineSection:
    origin: np.ndarray
    basis: np.ndarray  # n x d, orthonormal columns

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def point(self, s: Sequence[float]) -> np.ndarray:
        return self.origin + self.basis @ np.asarray(s, dtype=float)


@dataclass(frozen=True)
class PolytopeUnion:
    components: tuple[ConvexPolytope, ...]

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def violation(self, p: Sequence[float]) -> float:
        """Distance-like measure: ``<= 0`` inside, ``> 0`` outside."""
        return self._violation(p)

    @cached_property
    def _violation(self) -> Callable[[Sequence[float]], float]:
        return _compile_violation(self)

    def contains(self, p: Sequence[float], tol: float = 0.0) -> bool:
        return any(c.contains(p, tol) for c in self.components)

    @property
    def constraints(self) -> Iterable[AffineConstraint]:
        for comp in self.components:
            yield from comp.constraints


def _compile_violation(u: PolytopeUnion) -> Callable:
    from .expr import compile_source

    n = u.dim
    names = [f"x{i}" for i in range(n)]

    def term(c: AffineConstraint) -> str:
        lin = " + ".join(f"{a!r} * {x}" for a, x in zip(c.coefficients, names) if a != 0.0)
        r = f"({lin} - {c.offset!r})"
        return {LE: r, GE: f"-{r}", EQ: f"abs{r}"}[c.relation]

    def comp(poly: ConvexPolytope) -> str:
        terms = [term(c) for c in poly.constraints]
        return terms[0] if len(terms) == 1 else f"max({', '.join(terms)})"

    parts = [comp(c) for c in u.components]
    body = parts[0] if len(parts) == 1 else f"min({', '.join(parts)})"
    src = (f"def _v(p):\n    {', '.join(names)}{',' if n == 1 else ''} = p\n"
           f"    return {body}\n")
    return compile_source(src, "_v")


def clean_coordinate(x: float) -> float:
    # drop rounding noise such as 6.9e-17 left by lattice arithmetic
    r = round(x, 12)
    return r if abs(x - r) < 1e-14 else x


def membership(p: Sequence[float], s: PolytopeUnion, tol: float = 1e-9) -> bool:
    """True iff some convex component of ``s`` holds at ``p`` within ``tol``."""
    if len(p) != s.dim:
        raise ValueError(f"point has dimension {len(p)}, set has {s.dim}")
    return s.contains(p, tol)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def _interval(section: AffineSection, ineqs: Sequence[AffineConstraint], tol: float = 1e-12):
    """Range of ``s`` on a 1-D section satisfying the inequalities, or None."""
    lo, hi = -math.inf, math.inf
    d = section.basis[:, 0]
    for c in ineqs:
        a = np.array(c.coefficients)
        slope = float(a @ d)
        rest = c.offset - float(a @ section.origin)
        if abs(slope) < 1e-14:
            if rest < -tol:
                return None
            continue
        bound = rest / slope
        if slope > 0:
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
    if lo > hi + tol:
        return None
    return lo, hi


def lattice_points(poly: ConvexPolytope, spacing: float, tol: float = 1e-9) -> list[tuple[float, ...]]:
    """Points of ``poly`` on a lattice of pitch ``spacing`` over its affine
    section, including the endpoints of 1-D pieces.

    Raises:
        NotImplementedError: for sections of dimension above two.
        ValueError: for unbounded sections.
    """
    sec = poly.section()
    ineqs = poly.inequalities
    if sec.dim == 0:
        p = sec.origin
        return [tuple(float(x) for x in p)] if poly.contains(p, tol) else []
    if sec.dim == 1:
        iv = _interval(sec, ineqs)
        if iv is None:
            return []
        lo, hi = iv
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError("cannot sample an unbounded guard")
        length = hi - lo
        count = int(math.floor(length / spacing + 1e-9))
        ss = [lo + i * spacing for i in range(count + 1)]
        if hi - ss[-1] > 1e-9 * max(1.0, length):
            ss.append(hi)
        else:
            ss[-1] = hi if count > 0 else ss[-1]
        return [tuple(clean_coordinate(float(x)) for x in sec.point([s])) for s in ss]
    if sec.dim == 2:
        verts = poly.vertices()
        if not len(verts):
            return []
        coords = (verts - sec.origin) @ sec.basis
        lo = coords.min(axis=0)
        hi = coords.max(axis=0)
        out = []
        n0 = int(math.floor((hi[0] - lo[0]) / spacing + 1e-9))
        n1 = int(math.floor((hi[1] - lo[1]) / spacing + 1e-9))
        for i in range(n0 + 1):
            for j in range(n1 + 1):
                p = sec.point([lo[0] + i * spacing, lo[1] + j * spacing])
                if poly.contains(p, tol):
                    out.append(tuple(clean_coordinate(float(x)) for x in p))
        for v in verts:
            t = tuple(float(x) for x in v)
            if t not in out:
                out.append(t)
        return out
    raise NotImplementedError(f"sampling a {sec.dim}-dimensional guard is not supported")


def random_points(poly: ConvexPolytope, count: int, rng: np.random.Generator,
                  tol: float = 1e-9, max_tries: int = 100) -> list[tuple[float, ...]]:
    """Uniform-ish random points of ``poly`` (rejection on the section's box)."""
    sec = poly.section()
    if sec.dim == 0:
        return [tuple(float(x) for x in sec.origin)] * count if poly.contains(sec.origin, tol) else []
    if sec.dim == 1:
        iv = _interval(sec, poly.inequalities)
        if iv is None or not all(map(math.isfinite, iv)):
            return []
        return [tuple(float(x) for x in sec.point([s])) for s in rng.uniform(iv[0], iv[1], size=count)]
    verts = poly.vertices()
    if not len(verts):
        return []
    coords = (verts - sec.origin) @ sec.basis
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    out: list[tuple[float, ...]] = []
    for _ in range(max_tries):
        for s in rng.uniform(lo, hi, size=(count, sec.dim)):
            p = sec.point(s)
            if poly.contains(p, tol):
                out.append(tuple(float(x) for x in p))
                if len(out) == count:
                    return out
    return out


# --------------------------------------------------------------------------
# constraint text -> polytope union
# --------------------------------------------------------------------------

_REL = re.compile(r"(<=|>=|==|=|<|>)")


class ConstraintError(ValueError):
    pass


def _linear(e: Expr, varnames: Sequence[str]) -> tuple[np.ndarray, float]:
    """Coefficients and constant of an affine expression."""
    n = len(varnames)
    if isinstance(e, Num):
        return np.zeros(n), e.value
    if isinstance(e, Var):
        if e.name not in varnames:
            raise ConstraintError(f"undeclared variable {e.name!r}")
        v = np.zeros(n)
        v[list(varnames).index(e.name)] = 1.0
        return v, 0.0
    if isinstance(e, Neg):
        a, b = _linear(e.operand, varnames)
        return -a, -b
    if isinstance(e, BinOp):
        a1, b1 = _linear(e.left, varnames)
        a2, b2 = _linear(e.right, varnames)
        if e.op == "+":
            return a1 + a2, b1 + b2
        if e.op == "-":
            return a1 - a2, b1 - b2
        if e.op == "*":
            if not a1.any():
                return b1 * a2, b1 * b2
            if not a2.any():
                return b2 * a1, b2 * b1
            raise ConstraintError("product of two non-constant terms is not affine")
        if a2.any():
            raise ConstraintError("division by a non-constant term is not affine")
        return a1 / b2, b1 / b2
    if isinstance(e, Pow):
        a, b = _linear(e.base, varnames)
        if a.any() and e.exponent != 1:
            raise ConstraintError("power of a non-constant term is not affine")
        return (a, b) if e.exponent == 1 else (a, b ** e.exponent)
    if isinstance(e, Call):
        a, b = _linear(e.arg, varnames)
        if a.any():
            raise ConstraintError(f"{e.func}() of a non-constant term is not affine")
        from .expr import FUNCTIONS
        return a, FUNCTIONS[e.func](b)
    raise TypeError(e)


def _side_alternatives(e: Expr, varnames) -> list[tuple[np.ndarray, float, int]]:
    """Either the affine form of ``e`` or, for ``abs(affine)``, its two
    branches. Each alternative is ``(a, b, sign)`` where ``sign`` is +1 for the
    plain affine form and marks abs branches as +1/-1 with an extra flag."""
    if isinstance(e, Call) and e.func == "abs":
        a, b = _linear(e.arg, varnames)
        if a.any():
            return [(a, b, 1), (-a, -b, -1)]
    a, b = _linear(e, varnames)
    return [(a, b, 0)]


def _atomic(lhs: Expr, rel: str, rhs: Expr, varnames) -> list[list[AffineConstraint]]:
    """One comparison as a disjunction of conjunctions of affine constraints."""
    strict = rel in ("<", ">")
    rel = {"<": LE, ">": GE, "==": EQ}.get(rel, rel)
    if rel == GE:
        lhs, rhs, rel = rhs, lhs, LE
    left = _side_alternatives(lhs, varnames)
    right = _side_alternatives(rhs, varnames)
    if len(left) > 1 and len(right) > 1:
        raise ConstraintError("abs() on both sides of a comparison is not supported")

    def mk(a, b, relation):
        if not np.any(a):
            raise ConstraintError("constraint does not involve any variable")
        return AffineConstraint(tuple(float(x) for x in a), float(b), relation, strict)

    if len(left) == 1 and len(right) == 1:
        (a1, b1, _), (a2, b2, _) = left[0], right[0]
        return [[mk(a1 - a2, b2 - b1, rel)]]
    if len(left) == 2:
        # |g| <= r  ->  g <= r and -g <= r   (convex)
        # |g| =  r  ->  g = r, -g <= r  or  -g = r, g <= r
        (a, b, _), (na, nb, _) = left
        (ar, br, _) = right[0]
        if rel == LE:
            return [[mk(a - ar, br - b, LE), mk(na - ar, br - nb, LE)]]
        return [[mk(a - ar, br - b, EQ), mk(na - ar, br - nb, LE)],
                [mk(na - ar, br - nb, EQ), mk(a - ar, br - b, LE)]]
    # r <= |g|  ->  g >= r  or  -g >= r   (non-convex)
    # (after the swap above the abs term is on the right with relation <=)
    (al, bl, _) = left[0]
    (a, b, _), (na, nb, _) = right
    if rel == LE:
        return [[mk(al - a, b - bl, LE)], [mk(al - na, nb - bl, LE)]]
    return [[mk(a - al, bl - b, EQ), mk(na - al, bl - nb, LE)],
            [mk(na - al, bl - nb, EQ), mk(a - al, bl - b, LE)]]


def parse_constraint_line(text: str, varnames: Sequence[str],
                          constants: dict[str, float] | None = None) -> PolytopeUnion:
    """Parse ``c1; c2; ...`` (a conjunction) into a polytope union.

    Each ``ci`` is a comparison chain such as ``0 <= T1 <= 1`` or
    ``abs(T1 - T2) <= 0.25``. ``abs`` in a comparison may make the set
    non-convex, in which case the result has several components.
    """
    conj: list[list[list[AffineConstraint]]] = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = _REL.split(part)
        if len(pieces) < 3:
            raise ConstraintError(f"no comparison in {part!r}")
        exprs = [parse_expr(p, constants) for p in pieces[0::2]]
        rels = pieces[1::2]
        for lhs, rel, rhs in zip(exprs, rels, exprs[1:]):
            conj.append(_atomic(lhs, rel, rhs, varnames))
    if not conj:
        raise ConstraintError("empty constraint list")
    comps = []
    for choice in itertools.product(*conj):
        cons = tuple(c for group in choice for c in group)
        comps.append(ConvexPolytope(cons))
    return PolytopeUnion(tuple(comps))


def union_of(*unions: PolytopeUnion) -> PolytopeUnion:
    return PolytopeUnion(tuple(c for u in unions for c in u.components))
