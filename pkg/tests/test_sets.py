import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdsbisim.sets import (EQ, GE, LE, AffineConstraint, ConstraintError, lattice_points,
                           membership, parse_constraint_line, random_points)

V = ["T1", "T2"]
R_S = parse_constraint_line("0 <= T1 <= 1; 0 <= T2 <= 1; abs(T1 - T2) <= 0.25", V)


def poly(text):
    (c,) = parse_constraint_line(text, V).components
    return c


@pytest.mark.parametrize("p, inside", [((0.5, 0.5), True), ((1.0, 0.0), False), ((0.5, 0.75), True),
                                       ((0.5, 0.75 + 1e-10), True), ((0.5, 0.75 + 1e-6), False)])
def test_membership_in_safe_region(p, inside):
    assert membership(p, R_S) is inside


def test_membership_dimension_mismatch():
    with pytest.raises(ValueError):
        membership((0.1,), R_S)


def test_abs_at_most_is_convex_and_abs_at_least_is_a_union():
    assert len(R_S.components) == 1
    outside = parse_constraint_line("abs(T1 - T2) >= 0.25", V)
    assert len(outside.components) == 2
    assert outside.contains((1.0, 0.0)) and outside.contains((0.0, 1.0))
    assert not outside.contains((0.5, 0.5))


def test_equality_and_relations():
    c = poly("T1 - T2 = 0.25")
    assert c.equalities[0].relation == EQ
    assert AffineConstraint((1.0, 0.0), 2.0, GE).normalized() == AffineConstraint((-1.0, -0.0), -2.0, LE)
    with pytest.raises(ValueError):
        AffineConstraint((0.0, 0.0), 1.0)


def test_strict_inequalities_are_recorded():
    (c,) = parse_constraint_line("T1 < 1", V).components
    assert c.constraints[0].strict


@pytest.mark.parametrize("text", ["T1 * T2 <= 1", "sin(T1) = 0", "T3 <= 1", "T1 <= 1 <= T2 <= 0 <= 5 = 4 +"])
def test_nonlinear_or_malformed_constraints_rejected(text):
    with pytest.raises((ConstraintError, ValueError)):
        parse_constraint_line(text, V)


def test_vertices_of_safe_region():
    verts = {tuple(np.round(v, 12)) for v in R_S.components[0].vertices()}
    assert verts == {(0.0, 0.0), (0.25, 0.0), (1.0, 0.75), (1.0, 1.0), (0.75, 1.0), (0.0, 0.25)}


def test_point_guard_gives_one_point():
    assert lattice_points(poly("T1 = 0.5; T2 = 0.25"), 0.1) == [(0.5, 0.25)]


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.01, 1.0))
def test_segment_lattice_count_and_pitch(length, h):
    pts = lattice_points(poly(f"T2 = 0; 0 <= T1 <= {length!r}"), h)
    expected = math.floor(length / h + 1e-9) + 1
    assert len(pts) in (expected, expected + 1)  # the far end is added when it is off the lattice
    assert pts[0] == (0.0, 0.0) and pts[-1][0] == pytest.approx(length, abs=1e-12)
    gaps = np.diff([p[0] for p in pts])
    assert np.all(gaps <= h + 1e-12) and np.all(gaps > 0)


def test_segment_lattice_exact_multiple():
    pts = lattice_points(poly("T2 = 0; 0 <= T1 <= 1"), 0.25)
    assert [p[0] for p in pts] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_diagonal_guard_lattice_is_on_the_line():
    pts = lattice_points(poly("T2 - T1 = 0.25; 0 <= T1 <= 0.75"), 0.05 * math.sqrt(2))
    assert len(pts) == 16
    for a, b in pts:
        assert abs(b - a - 0.25) < 1e-12


def test_planar_lattice_contains_vertices():
    pts = lattice_points(poly("0 <= T1 <= 1; 0 <= T2 <= 1"), 0.5)
    assert len(pts) == 9


def test_three_dimensional_patch_not_supported():
    (c,) = parse_constraint_line("0 <= a <= 1; 0 <= b <= 1; 0 <= c <= 1", ["a", "b", "c"]).components
    with pytest.raises(NotImplementedError):
        lattice_points(c, 0.5)


def test_random_points_lie_inside():
    rng = np.random.default_rng(3)
    c = R_S.components[0]
    pts = random_points(c, 100, rng)
    assert len(pts) == 100
    assert all(c.contains(p, 1e-12) for p in pts)
