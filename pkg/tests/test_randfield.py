"""KL bases, beta moment matching and translation maps."""

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fuzzstoch.errors import DimensionMismatch, DomainError, InfeasibleMoments
from fuzzstoch.fuzzy import CompletelyInteractive, FuzzyVariable, FuzzyVector
from fuzzstoch.randfield import (
    BetaParams,
    FuzzyStochasticField,
    TranslationTable,
    beta_cdf,
    beta_feasible,
    beta_from_moments,
    beta_moments,
    beta_pdf,
    beta_quantile,
    kl_decompose,
    project_to_feasible,
    read_kl_phi,
    sample_gaussian_field,
    sample_translation_field,
    std_normal_cdf,
    translate,
    write_kl_basis,
)


def _legendre_eigenvalues(L, ell, n=300):
    # independent quadrature: Gauss-Legendre Nystrom with symmetric weighting
    t, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * L * (t + 1)
    w = 0.5 * L * w
    C = np.exp(-0.5 * ((x[:, None] - x[None, :]) / ell) ** 2)
    sw = np.sqrt(w)
    return np.sort(np.linalg.eigvalsh(sw[:, None] * C * sw[None, :]))[::-1]


@pytest.fixture(scope="module")
def kl_1000():
    return kl_decompose(1000.0, 10.0, 100.0, 0.85)


def test_kl_eigenvalues_match_legendre_oracle(kl_1000):
    ref = _legendre_eigenvalues(1000.0, 100.0)
    assert np.allclose(kl_1000.eigenvalues[:8], ref[:8], rtol=2e-3)


def test_kl_truncation_count_matches_oracle():
    ref = _legendre_eigenvalues(1e4, 100.0, 1500)
    ref = np.clip(ref, 0, None)
    frac = np.sqrt(np.cumsum(ref) / ref.sum())
    expected = int(np.searchsorted(frac, 0.85) + 1)
    kl = kl_decompose(1e4, 10.0, 100.0, 0.85)
    assert kl.N == expected == 35
    assert kl.preserved_fraction >= 0.85


def test_kl_invariants(kl_1000):
    assert kl_1000.trace_ratio() == pytest.approx(1.0, abs=1e-6)
    assert kl_1000.orthonormality_residual() < 1e-10
    assert kl_1000.phi.shape == (100, kl_1000.N)
    rv = kl_1000.retained_variance()
    assert np.all(rv <= 1.0 + 1e-9)
    assert rv.mean() * 1000.0 / 1000.0 == pytest.approx(kl_1000.preserved_fraction**2, rel=1e-3)


def test_kl_eigenfunctions_solve_integral_equation(kl_1000):
    x, h = kl_1000.x, 10.0
    C = np.exp(-0.5 * ((x[:, None] - x[None, :]) / 100.0) ** 2)
    lhs = C @ kl_1000.phi[:, :3] * h
    assert np.allclose(lhs, kl_1000.phi[:, :3] * kl_1000.retained[:3], atol=2e-3 * kl_1000.retained[0])


def test_gaussian_field_covariance(kl_1000, rng):
    Y = rng.standard_normal((20000, kl_1000.N))
    G = sample_gaussian_field(kl_1000, Y, standardize=False)
    emp = np.cov(G[:, [40, 50]].T, bias=True)
    model = kl_1000.modes[[40, 50]] @ kl_1000.modes[[40, 50]].T
    assert np.allclose(emp, model, atol=0.03)


def test_standardized_field_has_unit_variance(kl_1000, rng):
    Y = rng.standard_normal((20000, kl_1000.N))
    G = sample_gaussian_field(kl_1000, Y)
    assert np.allclose(np.sum(kl_1000.unit_modes**2, axis=1), 1.0, atol=1e-12)
    raw = kl_1000.modes[[40, 50]] @ kl_1000.modes[[40, 50]].T
    corr = raw[0, 1] / np.sqrt(raw[0, 0] * raw[1, 1])
    emp = np.corrcoef(G[:, [40, 50]].T)
    assert np.allclose(np.var(G[:, [0, 40, 99]], axis=0), 1.0, atol=0.04)
    assert emp[0, 1] == pytest.approx(corr, abs=0.02)
    with pytest.raises(DimensionMismatch):
        sample_gaussian_field(kl_1000, np.zeros(kl_1000.N + 1))


def test_kl_binary_round_trip(kl_1000, tmp_path):
    write_kl_basis(kl_1000, tmp_path / "e.csv", tmp_path / "p.bin")
    raw = (tmp_path / "p.bin").read_bytes()
    assert raw[:4] == b"KLB1" and len(raw) == 16 + 8 * kl_1000.phi.size
    assert np.array_equal(read_kl_phi(tmp_path / "p.bin"), kl_1000.phi)
    assert (tmp_path / "e.csv").read_text().startswith("n,lambda\n1,")


# -- distribution functions ----------------------------------------------------


def test_normal_cdf_reference():
    assert std_normal_cdf(1.96) == pytest.approx(0.975002, abs=5e-7)
    assert std_normal_cdf(1.96) == pytest.approx(float(mpmath.ncdf(1.96)), rel=1e-14)
    assert std_normal_cdf(-8.0) == pytest.approx(float(mpmath.ncdf(-8)), rel=1e-12)


@pytest.mark.parametrize("p,q,v", [(2.0, 5.0, 0.3), (0.7, 0.9, 0.05), (30.0, 12.0, 0.7), (3.3, 3.3, 0.5)])
def test_beta_cdf_matches_mpmath(p, q, v):
    bp = BetaParams(p, q, 0.1, 2.0)
    ref = float(mpmath.betainc(p, q, 0, v, regularized=True))
    assert beta_cdf(0.1 + 2.0 * v, bp) == pytest.approx(ref, rel=1e-12)
    pdf_ref = float(mpmath.gamma(p + q) / (mpmath.gamma(p) * mpmath.gamma(q)) * v ** (p - 1) * (1 - v) ** (q - 1)) / 2.0
    assert beta_pdf(0.1 + 2.0 * v, bp) == pytest.approx(pdf_ref, rel=1e-10)


@given(st.floats(0.3, 60), st.floats(0.3, 60), st.floats(1e-6, 1 - 1e-6))
@settings(max_examples=120, deadline=None)
def test_beta_quantile_inverts_cdf(p, q, u):
    # unit support: a shifted support cannot represent quantiles below its ulp
    bp = BetaParams(p, q, 0.0, 1.0)
    v = beta_quantile(u, bp)
    assert 0.0 <= v <= 1.0
    assert beta_cdf(v, bp) == pytest.approx(u, abs=1e-8)
    shifted = BetaParams(p, q, 0.05, 0.2)
    assert beta_quantile(u, shifted) == pytest.approx(0.05 + 0.2 * v, rel=1e-14)


def test_beta_quantile_domain():
    bp = BetaParams(2.0, 2.0, 0.0, 1.0)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(DomainError):
            beta_quantile(bad, bp)


def test_beta_moments_closed_form():
    mu, sd, g1, g2 = beta_moments(2.0, 2.0)
    assert (mu, sd**2, g1) == pytest.approx((0.5, 0.05, 0.0))
    assert g2 == pytest.approx(-6 / 7)


@given(st.floats(0.5, 80), st.floats(0.5, 80), st.floats(0.01, 1.0), st.floats(0.001, 0.5))
@settings(max_examples=120, deadline=None)
def test_beta_fit_round_trip(p, q, loc, scale):
    target = beta_moments(p, q, loc, scale)
    bp = beta_from_moments(*target)
    assert np.allclose(bp.moments(), target, rtol=1e-7, atol=1e-9)
    assert bp.p == pytest.approx(p, rel=1e-5) and bp.q == pytest.approx(q, rel=1e-5)


def test_infeasible_moments():
    assert not beta_feasible(0.5, 2.0)
    with pytest.raises(InfeasibleMoments):
        beta_from_moments(0.13, 0.005, 0.5, 2.0)
    g1, g2 = project_to_feasible(0.5, 2.0)
    assert beta_feasible(g1, g2)
    bp = beta_from_moments(0.13, 0.005, 0.5, 2.0, project=True)
    assert bp.moments()[3] == pytest.approx(g2, rel=1e-8)


@given(st.floats(-3, 3), st.floats(-3, 10))
@settings(max_examples=100, deadline=None)
def test_projection_lands_inside(g1, g2):
    assume(abs(g1) > 1e-3)
    a, b = project_to_feasible(g1, g2)
    assert a == g1 and beta_feasible(a, b)
    if beta_feasible(g1, g2) and g1 * g1 - 2 + 0.05 < g2 < 1.5 * g1 * g1 - 0.05:
        assert b == g2


# -- translation ----------------------------------------------------------------


def test_translation_moments_by_sampling(rng):
    bp = beta_from_moments(0.129, 0.006, 0.3, -0.4)
    b = translate(rng.standard_normal(200_000), bp)
    assert b.mean() == pytest.approx(0.129, abs=1e-4)
    assert b.std() == pytest.approx(0.006, rel=0.01)
    assert np.all((b >= bp.loc) & (b <= bp.loc + bp.scale))


def test_table_matches_direct_translation(rng):
    params = [beta_from_moments(0.129, s, g, -0.5) for s, g in ((0.005, 0.1), (0.007, 0.4))]
    tab = TranslationTable.build(params)
    G = rng.standard_normal((50, 30)) * 1.5
    for k, bp in enumerate(params):
        assert np.allclose(tab.evaluate(G, k), translate(G, bp), rtol=1e-7)
    w = rng.random(30)
    direct = np.column_stack([translate(G, bp) @ w for bp in params])
    assert np.allclose(tab.integrate(G, w), direct, rtol=1e-7)


@given(st.lists(st.floats(-6, 6), min_size=2, max_size=20))
@settings(max_examples=60, deadline=None)
def test_translation_is_monotone(g):
    g = np.sort(np.array(g))
    b = translate(g, beta_from_moments(0.13, 0.006, 0.5, 0.0))
    assert np.all(np.diff(b) >= -1e-15)


def _field(kl):
    comps = (
        FuzzyVariable.triangular(0.125, 0.129, 0.133),
        FuzzyVariable.triangular(0.005, 0.006, 0.007),
        FuzzyVariable.triangular(-0.2, 0.3, 0.6),
        FuzzyVariable.triangular(-0.8, -0.4, 0.2),
    )
    return FuzzyStochasticField(kl, FuzzyVector(comps, CompletelyInteractive()))


def test_fuzzy_field_sampling(kl_1000, rng):
    f = _field(kl_1000)
    f.check_positive(10)
    y = rng.standard_normal(kl_1000.N)
    b = sample_translation_field(f, y, [0.129, 0.006, 0.3, -0.4])
    assert b.shape == (100,) and np.all(b > 0)
    with pytest.raises(DomainError):
        sample_translation_field(f, y, [0.2, 0.006, 0.3, -0.4])
    tab = f.table(0.5, 7)
    assert tab.values.shape[1] == 7
