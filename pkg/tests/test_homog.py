"""Moving-window homogenization and RVE length selection."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fuzzstoch.errors import NoRve, WindowTooLarge
from fuzzstoch.homog import homogenize, homogenize_samples, relative_scatter, rve_length
from fuzzstoch.microdata import SampleSet


def _brute(b, w):
    n = b.size
    out = np.empty(n)
    for j in range(n):
        lo, hi = max(j - (w - 1) // 2, 0), min(j + w // 2, n - 1)
        out[j] = b[lo : hi + 1].mean()
    return out


@given(hnp.arrays(float, st.integers(1, 60), elements=st.floats(0.01, 1.0)), st.integers(1, 60))
@settings(max_examples=120, deadline=None)
def test_window_average_matches_brute_force(b, w):
    if w > b.size:
        with pytest.raises(WindowTooLarge):
            homogenize(b, 1.0, float(w))
        return
    assert np.allclose(homogenize(b, 1.0, float(w)), _brute(b, w), rtol=1e-12)


def test_averaging_compliance_is_harmonic_mean_of_modulus(rng):
    a = rng.uniform(3.6, 24.0, 50)
    eff = homogenize(1 / a, 10.0, 100.0)
    j = 25
    window = a[j - 4 : j + 6]
    assert 1 / eff[j] == pytest.approx(window.size / np.sum(1 / window), rel=1e-12)


def test_constant_and_identity(rng):
    v = rng.random((3, 20)) + 0.1
    assert np.array_equal(homogenize(v, 10.0, 10.0), v)
    assert np.allclose(homogenize(np.full(20, 0.2), 10.0, 70.0), 0.2)
    s = homogenize_samples(SampleSet(h=10.0, values=v), 50.0)
    assert s.values.shape == v.shape and s.provenance == "homogenized(50)"


def test_rve_selection_on_iid_samples(rng):
    # iid elements: scatter of a w-element window mean shrinks like 1/sqrt(w)
    v = 0.13 + 0.02 * rng.standard_normal((200, 2000))
    s = SampleSet(h=1.0, values=v)
    rep = rve_length(s, (1, 16, 100, 400), tol=0.03)
    assert rep.epsilon[0] == pytest.approx(0.02 / 0.13, rel=0.05)
    assert np.all(np.diff(rep.epsilon) < 0)
    assert rep.epsilon[1] == pytest.approx(0.02 / 0.13 / 4, rel=0.1)
    assert rep.L_rve == 100.0
    doc = json.loads(rep.to_json())
    assert doc["L_rve_um"] == 100.0 and len(doc["epsilon"]) == 4


def test_no_rve_and_preconditions(rng, tmp_path):
    s = SampleSet(h=1.0, values=0.13 + 0.02 * rng.standard_normal((20, 50)))
    rep = rve_length(s, (1, 2), tol=1e-6)
    assert rep.L_rve is None
    with pytest.raises(NoRve) as info:
        rve_length(s, (1, 2), tol=1e-6, strict=True)
    assert info.value.report.L_rve is None
    with pytest.raises(ValueError):
        rve_length(s, (2, 1))
    with pytest.raises(WindowTooLarge):
        rve_length(s, (1, 100))
    rep.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "L_um,epsilon"


def test_relative_scatter_definition():
    v = np.array([[1.0, 2.0], [3.0, 2.0]])
    assert relative_scatter(v) == pytest.approx(0.5 * (1.0 + 0.0) / 2.0)


def test_reference_rve_scatter_decreases(extracted):
    from fuzzstoch.microdata import bootstrap

    s = bootstrap(extracted, 100, 5e4, seed=5)
    rep = rve_length(s)
    assert np.all(np.diff(rep.epsilon) < 0)
    assert rep.L_rve is not None and rep.epsilon[list(rep.lengths).index(rep.L_rve)] <= 0.05
