"""Fuzzy variables, interval arithmetic, joint cuts and histogram fuzzification."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzstoch.errors import DivisionByZeroInterval, FitFailure
from fuzzstoch.fuzzy import (
    CompletelyInteractive,
    FuzzyVariable,
    FuzzyVector,
    Interval,
    NonInteractive,
    PartiallyInteractive,
    alpha_cut,
    fuzzify_from_histogram,
    fuzzy_add,
    fuzzy_div,
    fuzzy_image,
    fuzzy_integrate,
    fuzzy_mul,
    fuzzy_sub,
    hexagon_membership,
    image_alpha_cut,
    joint_alpha_cut,
    write_alpha_table_csv,
)
from fuzzstoch.stats import Histogram

small = st.floats(-100, 100, allow_nan=False)


@st.composite
def intervals(draw, exclude_zero=False):
    a, b = sorted((draw(small), draw(small)))
    if exclude_zero and a <= 0 <= b:
        a, b = (abs(a) + 0.1, abs(a) + abs(b) + 0.2)
    return Interval(a, b)


@st.composite
def triangles(draw):
    lo = draw(st.floats(-10, 10))
    left = draw(st.floats(0.01, 5))
    right = draw(st.floats(0.01, 5))
    return FuzzyVariable.triangular(lo, lo + left, lo + left + right)


# -- interval arithmetic --------------------------------------------------------


def test_interval_reference_values():
    assert fuzzy_add(Interval(1, 2), Interval(-3, 4)).as_tuple() == (-2, 6)
    assert fuzzy_sub(Interval(1, 2), Interval(-3, 4)).as_tuple() == (-3, 5)
    assert fuzzy_mul(Interval(1, 2), Interval(-3, 4)).as_tuple() == (-6, 8)
    assert fuzzy_div(Interval(1, 2), Interval(2, 4)).as_tuple() == (0.25, 1.0)
    with pytest.raises(DivisionByZeroInterval):
        fuzzy_div(Interval(1, 2), Interval(-1, 1))
    with pytest.raises(ValueError):
        Interval(2, 1)


@given(intervals(), intervals(exclude_zero=True), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=150, deadline=None)
def test_interval_ops_enclose_pointwise_results(r1, r2, t1, t2):
    a = r1.lo + t1 * (r1.hi - r1.lo)
    b = r2.lo + t2 * (r2.hi - r2.lo)
    for op, val in ((fuzzy_add, a + b), (fuzzy_sub, a - b), (fuzzy_mul, a * b), (fuzzy_div, a / b)):
        assert op(r1, r2).contains(val, tol=1e-9 * (1 + abs(val)))


# -- fuzzy variables -------------------------------------------------------------


def test_triangle_and_trapezoid_cuts():
    t = FuzzyVariable.triangular(0.0, 1.0, 3.0)
    assert alpha_cut(t, 0.5).as_tuple() == (0.5, 2.0)
    assert alpha_cut(t, 0.0).as_tuple() == (0.0, 3.0)
    assert alpha_cut(t, 1.0).as_tuple() == (1.0, 1.0)
    z = FuzzyVariable.trapezoidal(0.0, 1.0, 2.0, 4.0)
    assert z.alpha_cut(0.25).as_tuple() == (0.25, 3.5)
    assert z.alpha_cut(1.0).as_tuple() == (1.0, 2.0)
    assert z.membership(np.array([-1, 0.5, 1.5, 3.0, 5])).tolist() == [0, 0.5, 1, 0.5, 0]


def test_crisp_and_invalid_variables():
    c = FuzzyVariable.crisp(0.7)
    assert c.is_crisp and alpha_cut(c, 0.0).as_tuple() == (0.7, 0.7)
    with pytest.raises(ValueError):
        FuzzyVariable(np.array([0.0, 1.0, 2.0]), np.array([0.0, 0.5, 0.0]))  # no peak
    with pytest.raises(ValueError):
        FuzzyVariable(np.array([0.0, 1.0, 2.0, 3.0, 4.0]), np.array([0.0, 1.0, 0.2, 1.0, 0.0]))  # not convex
    with pytest.raises(ValueError):
        alpha_cut(c, 1.5)


@given(triangles(), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=100, deadline=None)
def test_cuts_are_nested(v, a1, a2):
    lo_a, hi_a = sorted((a1, a2))
    outer, inner = alpha_cut(v, lo_a), alpha_cut(v, hi_a)
    assert outer.contains(inner, tol=1e-9)


@given(triangles(), st.floats(0.01, 1))
@settings(max_examples=100, deadline=None)
def test_cut_ends_have_level_membership(v, a):
    c = alpha_cut(v, a)
    assert np.allclose(v.membership(np.array([c.lo, c.hi])), a, atol=1e-9)


def test_json_round_trip_and_alpha_table(tmp_path):
    v = FuzzyVariable.trapezoidal(0.1, 0.12, 0.13, 0.15)
    doc = json.loads(v.to_json())
    assert doc[0] == {"z": 0.1, "mu": 0.0}
    back = FuzzyVariable.from_json(v.to_json())
    assert np.array_equal(back.z, v.z) and np.array_equal(back.mu, v.mu)
    write_alpha_table_csv(v, [0.0, 1.0], tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines() == ["alpha,lo,hi", "0.0,0.1,0.15", "1.0,0.12,0.13"]


# -- joint cuts ------------------------------------------------------------------


def _pair():
    t = FuzzyVariable.triangular(-1.0, 0.0, 1.0)
    return t, t


def test_interaction_changes_image_of_difference():
    g = lambda Z: Z[:, 0] - Z[:, 1]
    ni = image_alpha_cut(g, joint_alpha_cut(FuzzyVector(_pair(), NonInteractive()), 0.0), 11)
    ci = image_alpha_cut(g, joint_alpha_cut(FuzzyVector(_pair(), CompletelyInteractive()), 0.0), 11)
    pi = image_alpha_cut(g, joint_alpha_cut(FuzzyVector(_pair(), PartiallyInteractive(0.5)), 0.0), 11)
    assert ni.as_tuple() == (-2.0, 2.0)
    assert ci.as_tuple() == (0.0, 0.0)
    # |z1 - z2| <= beta (1 - alpha) for the normalized pair
    assert pi.lo == pytest.approx(-0.5) and pi.hi == pytest.approx(0.5)


@given(st.floats(0.1, 3.0), st.floats(0.0, 0.95))
@settings(max_examples=60, deadline=None)
def test_partial_cut_matches_hexagon_membership(beta, a):
    cut = joint_alpha_cut(FuzzyVector(_pair(), PartiallyInteractive(beta)), a)
    pts = cut.points(15)
    assert np.all(hexagon_membership(pts[:, 0], pts[:, 1], beta) >= a - 1e-9)
    g = np.linspace(-1, 1, 41)
    Z1, Z2 = np.meshgrid(g, g)
    z1, z2 = Z1.ravel(), Z2.ravel()
    inside = cut.contains(np.column_stack([z1, z2]), tol=1e-12)
    # closure of the level set: |z1 - z2| <= beta (1 - a) and max |z| <= 1 - a
    margin = np.minimum(beta * (1 - a) - np.abs(z1 - z2), (1 - a) - np.maximum(np.abs(z1), np.abs(z2)))
    clear = np.abs(margin) > 1e-9
    assert np.array_equal(inside[clear], margin[clear] > 0)


def test_hexagon_limits():
    z = np.linspace(-1, 1, 9)
    big = hexagon_membership(z, z[::-1], 1e9)
    assert np.allclose(big, np.minimum(1 - np.abs(z), 1 - np.abs(z[::-1])))
    assert hexagon_membership(0.3, 0.3, 0.01) == pytest.approx(0.7)
    assert hexagon_membership(0.3, 0.4, 0.01) == 0.0


def test_complete_interaction_segment_points():
    u = FuzzyVariable.triangular(0.0, 1.0, 2.0)
    w = FuzzyVariable.triangular(10.0, 20.0, 40.0)
    cut = joint_alpha_cut(FuzzyVector((u, w), CompletelyInteractive()), 0.5)
    P = cut.points(5)
    assert P[0].tolist() == [0.5, 15.0] and P[-1].tolist() == [1.5, 30.0]
    assert cut.contains(P).all()
    assert not cut.contains(np.array([[0.5, 30.0]])).any()


def test_fuzzy_image_and_integral():
    u = FuzzyVariable.triangular(1.0, 2.0, 4.0)
    vec = FuzzyVector((u,))
    cuts = fuzzy_image(lambda Z: Z[:, 0] ** 2, vec, [0.0, 1.0], 20)
    assert cuts[0].as_tuple() == (1.0, 16.0) and cuts[1].as_tuple() == (4.0, 4.0)
    x = np.linspace(0, 1, 101)
    ints = fuzzy_integrate(lambda x, Z: np.outer(x, Z[:, 0]), x, vec, [0.0, 0.5], 20)
    assert ints[0].lo == pytest.approx(0.5) and ints[0].hi == pytest.approx(2.0)
    assert ints[1].lo == pytest.approx(0.75) and ints[1].hi == pytest.approx(1.5)


# -- histogram fuzzification ------------------------------------------------------


def test_symmetric_histogram_gives_triangle():
    h = Histogram(np.arange(10.0), np.array([1, 2, 3, 4, 5, 4, 3, 2, 1]))
    v = fuzzify_from_histogram(h)
    # rising line through (0.5,1)..(4.5,5) has slope 1 and root -0.5
    assert v.z.tolist() == pytest.approx([-0.5, 4.5, 9.5])


def test_plateau_gives_trapezoid():
    h = Histogram(np.arange(7.0), np.array([1, 3, 5, 5, 3, 1]))
    v = fuzzify_from_histogram(h)
    c1 = alpha_cut(v, 1.0)
    assert c1.as_tuple() == (2.5, 3.5)
    assert v.z[0] == pytest.approx(0.5 - 1 / 2) and v.z[-1] == pytest.approx(5.5 + 1 / 2)


def test_fallback_and_failure():
    h = Histogram(np.arange(5.0), np.array([5, 1, 1, 5]))
    v = fuzzify_from_histogram(h)
    assert v.z.tolist() == [0.0, 0.5, 4.0]
    with pytest.raises(FitFailure):
        fuzzify_from_histogram(h, fallback=False)


def test_degenerate_histogram_is_crisp():
    v = fuzzify_from_histogram(Histogram(np.array([0.2, 0.2]), np.array([4])))
    assert v.is_crisp and v.z[0] == 0.2


@given(st.lists(st.integers(0, 50), min_size=2, max_size=15).filter(lambda c: sum(c) > 0))
@settings(max_examples=150, deadline=None)
def test_fuzzification_always_valid(counts):
    h = Histogram(np.linspace(0.0, 1.0, len(counts) + 1), np.array(counts))
    v = fuzzify_from_histogram(h)
    assert v.mu.max() == 1.0
    core = alpha_cut(v, 1.0)
    assert alpha_cut(v, 0.0).contains(core)
