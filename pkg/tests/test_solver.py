"""Bar solver, local Dirichlet solves and the global-local QoI."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fuzzstoch.errors import DegenerateDenominator, DimensionMismatch
from fuzzstoch.microdata import cell_centers
from fuzzstoch.solver import (
    UM,
    F_antiderivative,
    F_integral,
    GlobalLocalModel,
    ProblemSpec,
    solve_direct,
    solve_local_dirichlet,
)

SPEC = ProblemSpec()


def test_force_and_integral_closed_form():
    # traction 1 GPa minus 2 GPa over half the bar leaves zero force at x = 0
    assert SPEC.offset == 0.0
    assert F_antiderivative(0.25e6) == pytest.approx(0.5)
    assert F_antiderivative(0.9e6) == pytest.approx(1.0)
    assert F_integral(0.75e6) == pytest.approx(0.5e6)
    val, _ = integrate.quad(lambda x: F_antiderivative(x), 0, 0.75e6, points=[0.5e6])
    assert F_integral(0.75e6) == pytest.approx(val, rel=1e-10)


@pytest.mark.parametrize("layout", ["nodes", "cells"])
def test_constant_coefficient(layout):
    c = 0.63 / 24 + 0.37 / 3.6  # 63/37 element compliance, 0.129028
    if layout == "nodes":
        x = np.linspace(0, 1e6, 1001)
    else:
        x = cell_centers(1000, 1000.0)
    sol = solve_direct(np.full(x.size, c), x, SPEC, layout)
    assert sol.Q == pytest.approx(0.5 * c, rel=1e-12)
    assert sol.Q == pytest.approx(0.064514, abs=1e-6)


def test_smooth_coefficient_against_quad():
    bfun = lambda x: 0.13 + 0.01 * np.sin(x / 5e4)
    x = np.linspace(0, 1e6, 20001)
    sol = solve_direct(bfun(x), x, SPEC)
    ref, _ = integrate.quad(lambda t: bfun(t) * F_antiderivative(t), 0, 0.75e6, points=[0.5e6], limit=400)
    assert sol.Q == pytest.approx(ref * UM, rel=1e-7)


def test_piecewise_constant_cells_exact(rng):
    b = rng.uniform(0.05, 0.25, 40)
    x = cell_centers(40, 25_000.0)
    sol = solve_direct(b, x, SPEC, "cells")
    ref = sum(
        integrate.quad(lambda t, bj=bj: bj * F_antiderivative(t), lo, min(lo + 25_000.0, 0.75e6), points=[0.5e6])[0]
        for bj, lo in zip(b, np.arange(40) * 25_000.0)
        if lo < 0.75e6
    )
    assert sol.Q == pytest.approx(ref * UM, rel=1e-12)
    assert sol.u.size == 41 and sol.x[-1] == pytest.approx(1e6)


@given(st.floats(0.1, 10), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_solution_linear_and_monotone_in_coefficient(c, seed):
    r = np.random.default_rng(seed)
    x = np.linspace(0, 1e6, 201)
    b = r.uniform(0.05, 0.3, x.size)
    Q = solve_direct(b, x).Q
    assert solve_direct(c * b, x).Q == pytest.approx(c * Q, rel=1e-12)
    # the force is nonnegative, so a larger compliance cannot reduce u
    assert solve_direct(b + r.uniform(0, 0.1, x.size), x).Q >= Q


def test_direct_input_errors():
    x = np.linspace(0, 1e6, 11)
    with pytest.raises(DimensionMismatch):
        solve_direct(np.ones(10), x)
    with pytest.raises(ValueError):
        solve_direct(np.zeros(11), x)
    with pytest.raises(ValueError):
        solve_direct(np.ones(11), x, layout="edges")


def test_local_dirichlet_reference():
    x = cell_centers(4, 1.0)
    sol = solve_local_dirichlet(np.array([1.0, 1.0, 3.0, 3.0]), x, 0.0, 8.0, layout="cells")
    # A = [0, 1, 2, 5, 8]: the first half holds a quarter of the total compliance
    assert sol.u.tolist() == [0.0, 1.0, 2.0, 5.0, 8.0]
    assert sol.Q == pytest.approx(2.0)
    const = solve_local_dirichlet(np.full(11, 0.2), np.linspace(0, 10, 11), 1.0, 3.0, x0=2.5)
    assert const.Q == pytest.approx(1.5)
    with pytest.raises(DegenerateDenominator):
        solve_local_dirichlet(np.zeros(4), x, 0.0, 1.0, layout="cells")


def test_global_local_reproduces_direct_for_uniform_coefficient():
    c = 0.129
    xg = np.linspace(0, 1e6, 1001)
    xl = 0.75e6 - 5000 + cell_centers(1000, 10.0)
    model = GlobalLocalModel(xg, xl, 10.0, SPEC)
    Q = model.qoi(np.full(xg.size, c), np.full(xl.size, c))
    assert Q[0] == pytest.approx(0.5 * c, rel=1e-10)


def test_global_local_alternating_phases():
    # two-phase laminate: direct solve versus homogenized global plus fine local
    h = 10.0
    x = cell_centers(100_000, h)
    b = np.where(np.arange(x.size) % 2 == 0, 1 / 24, 1 / 3.6)
    direct = solve_direct(b, x, SPEC, "cells").Q
    xg = np.linspace(0, 1e6, 1001)
    xl = 0.75e6 - 5000 + cell_centers(1000, h)
    model = GlobalLocalModel(xg, xl, h, SPEC)
    gl = model.qoi(np.full(xg.size, b.mean()), b[74_500:75_500])[0]
    assert direct == pytest.approx(0.0798617, abs=5e-7)
    assert gl == pytest.approx(direct, rel=1e-5)


def test_boundary_data_interpolation_path():
    xg = np.linspace(0, 1e6, 101)
    xl = 0.75e6 - 4000 + cell_centers(800, 10.0)  # ends fall between global nodes
    model = GlobalLocalModel(xg, xl, 10.0, SPEC)
    ul, ur = model.boundary_data(np.full(xg.size, 0.2))
    assert ul[0] == pytest.approx(0.2 * F_integral(model.x_left) * UM, rel=1e-6)
    assert ur[0] == pytest.approx(0.2 * F_integral(model.x_right) * UM, rel=1e-6)
    with pytest.raises(ValueError):
        GlobalLocalModel(xg, cell_centers(10, 10.0), 10.0, SPEC)
