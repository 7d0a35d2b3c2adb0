"""Gaussian fields by truncated Karhunen-Loeve expansion and beta translation maps.

The fuzzy-stochastic field maps a standard Gaussian field pointwise through
the standard normal CDF and then through the inverse CDF of a four-parameter
beta distribution whose moments are a point of a fuzzy moment vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, special

from .errors import DimensionMismatch, DomainError, EigenFailure, InfeasibleMoments
from .fuzzy import (
    CompletelyInteractive,
    FuzzyVariable,
    FuzzyVector,
    fuzzify_from_histogram,
    joint_alpha_cut,
)
from .microdata import SampleSet
from .stats import histogram, pointwise_moments

# ---------------------------------------------------------------------------
# covariance and KL basis


def se_covariance(x1, x2, ell: float):
    if not ell > 0:
        raise ValueError("correlation length must be positive")
    d = np.subtract(x1, x2)
    return np.exp(-0.5 * (d / ell) ** 2)


@dataclass(frozen=True)
class KLBasis:
    """Retained KL eigenpairs evaluated on ``x``.

    ``eigenvalues`` holds the full quadrature-scaled spectrum of the coarse
    eigenproblem (so their sum approximates the domain length); only the first
    ``N`` columns of ``phi`` are kept.
    """

    x: np.ndarray
    weights: np.ndarray
    ell: float
    eigenvalues: np.ndarray
    phi: np.ndarray  # (N_x, N)
    N: int
    preserved_fraction: float
    length: float

    @property
    def retained(self) -> np.ndarray:
        return self.eigenvalues[: self.N]

    @property
    def modes(self) -> np.ndarray:
        """``sqrt(lambda_n) phi_n(x_j)``, shape ``(N_x, N)``."""
        return self.phi * np.sqrt(self.retained)[None, :]

    def orthonormality_residual(self) -> float:
        G = (self.phi * self.weights[:, None]).T @ self.phi
        return float(np.max(np.abs(G - np.eye(self.N))))

    def trace_ratio(self) -> float:
        return float(self.eigenvalues.sum() / self.length)

    def retained_variance(self) -> np.ndarray:
        """Pointwise variance of the truncated field."""
        return np.sum(self.modes**2, axis=1)

    @cached_property
    def unit_modes(self) -> np.ndarray:
        """Modes rescaled row-wise so the truncated field has unit variance at every node."""
        return self.modes / np.sqrt(self.retained_variance())[:, None]


def _coarse_grid(a: float, b: float, ell: float, min_points: int = 16):
    n = max(min_points, int(math.ceil((b - a) / (ell / 10.0))))
    dc = (b - a) / n
    return a + (np.arange(n) + 0.5) * dc, dc


def kl_decompose(
    L: float | tuple[float, float],
    h_grid: float | np.ndarray,
    ell: float,
    preserved_std_fraction: float = 0.85,
    weights: np.ndarray | None = None,
) -> KLBasis:
    """Truncated KL basis of the unit-variance squared-exponential kernel.

    ``L`` is the domain length (or an ``(a, b)`` pair) and ``h_grid`` either a
    spacing for a cell-centred evaluation grid or the evaluation points
    themselves. The eigenproblem is solved by Nystrom quadrature on a
    cell-centred coarse grid with spacing at most ``ell / 10``; eigenfunctions
    are extended to the evaluation points with the Nystrom formula and
    re-orthonormalized in the discrete inner product with ``weights``
    (default: uniform, summing to the domain length). ``N`` is the smallest
    count for which the square root of the retained share of the total
    eigenvalue sum reaches ``preserved_std_fraction``.
    """
    if not 0 < preserved_std_fraction <= 1:
        raise ValueError("preserved fraction must lie in (0, 1]")
    a, b = (0.0, float(L)) if np.isscalar(L) else (float(L[0]), float(L[1]))
    if not (b > a and ell > 0):
        raise ValueError("domain length and correlation length must be positive")
    if np.isscalar(h_grid):
        n = int(round((b - a) / h_grid))
        x = a + (np.arange(n) + 0.5) * h_grid
    else:
        x = np.asarray(h_grid, dtype=float)
    if weights is None:
        weights = np.full(x.size, (b - a) / x.size)

    xc, dc = _coarse_grid(a, b, ell)
    C = se_covariance(xc[:, None], xc[None, :], ell)
    lam, V = linalg.eigh(C * dc)
    lam, V = lam[::-1], V[:, ::-1]
    lam = np.clip(lam, 0.0, None)

    total = lam.sum()
    frac = np.sqrt(np.cumsum(lam) / total)
    N = int(np.searchsorted(frac, preserved_std_fraction - 1e-12) + 1)
    N = min(N, lam.size)

    norm_C = lam[0]
    resid = C @ V[:, :N] * dc - V[:, :N] * lam[:N]
    if np.max(np.linalg.norm(resid, axis=0)) > 1e-8 * norm_C:
        raise EigenFailure("coarse eigen-residual exceeds tolerance")

    # Nystrom extension of the L2-normalized coarse eigenvectors
    phi_c = V[:, :N] / math.sqrt(dc)
    K = se_covariance(x[:, None], xc[None, :], ell)
    Phi = (K @ phi_c) * (dc / lam[:N])[None, :]
    G = (Phi * weights[:, None]).T @ Phi
    w, U = np.linalg.eigh(G)
    if np.min(w) <= 0:
        raise EigenFailure("extended eigenfunctions are linearly dependent")
    Phi = Phi @ (U @ np.diag(w**-0.5) @ U.T)

    return KLBasis(x, weights, float(ell), lam, Phi, N, float(frac[N - 1]), b - a)


def sample_gaussian_field(kl: KLBasis, y, standardize: bool = True) -> np.ndarray:
    """``G(x_j) = sum_n sqrt(lambda_n) phi_n(x_j) y_n``; ``y`` may be batched ``(K, N)``.

    Truncation leaves the field with pointwise variance below one (markedly so
    near the ends of the interval), which would distort the translated
    marginals. With ``standardize`` the sum is divided by its pointwise
    standard deviation so ``G(x_j)`` is exactly standard normal and the
    correlation structure is that of the truncated expansion.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != kl.N:
        raise DimensionMismatch(f"expected {kl.N} coefficients, got {y.shape[-1]}")
    return y @ (kl.unit_modes if standardize else kl.modes).T


def write_kl_basis(kl: KLBasis, csv_path, bin_path) -> None:
    with open(csv_path, "w") as fh:
        fh.write("n,lambda\n")
        for n, v in enumerate(kl.eigenvalues[: kl.N], start=1):
            fh.write(f"{n},{float(v)!r}\n")
    header = b"KLB1" + np.array([kl.N, kl.x.size], dtype="<u4").tobytes() + bytes(4)
    with open(bin_path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(kl.phi.T, dtype="<f8").tobytes())


def read_kl_phi(bin_path) -> np.ndarray:
    data = open(bin_path, "rb").read()
    if data[:4] != b"KLB1":
        raise ValueError("not a KL basis file")
    N, nx = np.frombuffer(data[4:12], dtype="<u4")
    return np.frombuffer(data[16:], dtype="<f8").reshape(N, nx).T


# ---------------------------------------------------------------------------
# distribution functions


def std_normal_cdf(x):
    return special.ndtr(x)


@dataclass(frozen=True)
class BetaParams:
    p: float
    q: float
    loc: float
    scale: float

    def __post_init__(self):
        if not (self.p > 0 and self.q > 0 and self.scale > 0):
            raise ValueError("beta shapes and scale must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return self.loc, self.loc + self.scale

    def moments(self) -> tuple[float, float, float, float]:
        return beta_moments(self.p, self.q, self.loc, self.scale)


def beta_moments(p, q, loc=0.0, scale=1.0):
    s = p + q
    mean = p / s
    var = p * q / (s * s * (s + 1))
    g1 = 2 * (q - p) * np.sqrt(s + 1) / ((s + 2) * np.sqrt(p * q))
    g2 = 6 * ((p - q) ** 2 * (s + 1) - p * q * (s + 2)) / (p * q * (s + 2) * (s + 3))
    return loc + scale * mean, scale * np.sqrt(var), g1, g2


def _standardize(v, bp: BetaParams):
    return (np.asarray(v, dtype=float) - bp.loc) / bp.scale


def beta_cdf(v, bp: BetaParams):
    t = np.clip(_standardize(v, bp), 0.0, 1.0)
    return special.betainc(bp.p, bp.q, t)


def beta_pdf(v, bp: BetaParams):
    t = _standardize(v, bp)
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.5)
    logpdf = (bp.p - 1) * np.log(tt) + (bp.q - 1) * np.log1p(-tt) - special.betaln(bp.p, bp.q)
    return np.where(inside, np.exp(logpdf) / bp.scale, 0.0)


def _beta_ppf_std(p, a, b, tol=1e-9):
    """Standard beta quantile refined so that ``|I_t(a, b) - p| <= tol``."""
    p = np.asarray(p, dtype=float)
    t = special.betaincinv(a, b, p)
    err = special.betainc(a, b, t) - p
    bad = np.abs(err) > tol
    if np.any(bad):
        # bisection on the monotone CDF for the few points betaincinv misses
        lo = np.zeros(np.count_nonzero(bad))
        hi = np.ones_like(lo)
        pb = p[bad]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = special.betainc(a, b, mid) < pb
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            tm = 0.5 * (lo + hi)
            if np.all(np.abs(special.betainc(a, b, tm) - pb) <= tol) or np.all(hi - lo < 1e-17):
                break
        t = t.copy()
        t[bad] = 0.5 * (lo + hi)
    return t


def beta_quantile(p, bp: BetaParams):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise DomainError("quantile probability must lie in (0, 1)")
    return bp.loc + bp.scale * _beta_ppf_std(p, bp.p, bp.q)


def beta_feasible(gamma1: float, gamma2: float) -> bool:
    """Strict interior of the beta region between the two-point and gamma boundaries."""
    return gamma1 * gamma1 - 2.0 < gamma2 < 1.5 * gamma1 * gamma1


def project_to_feasible(gamma1: float, gamma2: float, margin: float = 0.02) -> tuple[float, float]:
    lo = gamma1 * gamma1 - 2.0 + margin
    hi = 1.5 * gamma1 * gamma1 - margin
    if hi <= lo:
        # near the symmetric corner the band is too thin; pull skewness outward
        gamma1 = math.copysign(math.sqrt(4.0 * margin), gamma1 if gamma1 != 0 else 1.0)
        lo = gamma1 * gamma1 - 2.0 + margin
        hi = 1.5 * gamma1 * gamma1 - margin
    return gamma1, min(max(gamma2, lo), hi)


def _shape_init(g1, g2):
    nu = 3.0 * (g2 - g1 * g1 + 2.0) / (1.5 * g1 * g1 - g2)
    if g1 == 0.0:
        return nu / 2.0, nu / 2.0
    root = 1.0 / math.sqrt(1.0 + 16.0 * (nu + 1.0) / ((nu + 2.0) ** 2 * g1 * g1))
    big, small = 0.5 * nu * (1.0 + root), 0.5 * nu * (1.0 - root)
    return (big, small) if g1 < 0 else (small, big)


def _shape_residual(logpq, g1, g2):
    p, q = np.exp(logpq)
    _, _, m3, m4 = beta_moments(p, q)
    return np.array([m3 - g1, m4 - g2])


def beta_from_moments(mu, sigma, gamma1, gamma2, project: bool = False, margin: float = 0.02) -> BetaParams:
    """Four-parameter beta distribution with the given mean, std, skewness and excess kurtosis.

    Shapes come from the closed-form inversion of the skewness/kurtosis
    relations, refined by damped Newton steps in log-shape space; location
    and scale then match the mean and standard deviation.
    """
    if not sigma > 0:
        raise InfeasibleMoments("standard deviation must be positive")
    g1, g2 = float(gamma1), float(gamma2)
    if not beta_feasible(g1, g2):
        if not project:
            raise InfeasibleMoments(
                f"(skewness {g1:.6g}, excess kurtosis {g2:.6g}) outside the beta region "
                f"({g1 * g1 - 2:.6g}, {1.5 * g1 * g1:.6g})"
            )
        g1, g2 = project_to_feasible(g1, g2, margin)
    p, q = _shape_init(g1, g2)
    x = np.log([p, q])
    r = _shape_residual(x, g1, g2)
    for _ in range(100):
        nr = np.max(np.abs(r))
        if nr <= 1e-12:
            break
        J = np.empty((2, 2))
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = 1e-7 * max(1.0, abs(x[k]))
            J[:, k] = (_shape_residual(x + dx, g1, g2) - _shape_residual(x - dx, g1, g2)) / (2 * dx[k])
        step = np.linalg.solve(J, -r)
        t = 1.0
        while t > 1e-6:
            xn = x + t * step
            rn = _shape_residual(xn, g1, g2)
            if np.all(np.isfinite(rn)) and np.max(np.abs(rn)) < nr:
                break
            t *= 0.5
        else:
            break
        x, r = xn, rn
    if np.max(np.abs(r)) > 1e-10:
        raise InfeasibleMoments(f"shape solve did not converge (residual {np.max(np.abs(r)):.3g})")
    p, q = np.exp(x)
    std_std = math.sqrt(p * q / ((p + q) ** 2 * (p + q + 1)))
    scale = float(sigma) / std_std
    loc = float(mu) - scale * p / (p + q)
    return BetaParams(float(p), float(q), loc, scale)


# ---------------------------------------------------------------------------
# translation maps


G_TABLE_RANGE = 8.5
G_TABLE_NODES = 8193


@dataclass(frozen=True)
class TranslationTable:
    """``g -> Psi^{-1}(Phi(g))`` tabulated for several beta laws on one g-grid.

    Linear interpolation in ``g`` replaces a quantile evaluation per field
    value; the map is smooth in ``g`` so the table error is far below the
    Monte-Carlo noise (see the tests for the measured bound).
    """

    g: np.ndarray
    values: np.ndarray  # (n_nodes, K)

    @classmethod
    def build(cls, params, g_range: float = G_TABLE_RANGE, n_nodes: int = G_TABLE_NODES):
        g = np.linspace(-g_range, g_range, n_nodes)
        P = std_normal_cdf(g)
        P = np.clip(P, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        cols = [beta_quantile(P, bp) for bp in params]
        return cls(g, np.column_stack(cols))

    def weights(self, G: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Aggregate interpolation weights: row ``b`` maps table columns to ``sum_j w_j T(G[b, j])``."""
        G = np.atleast_2d(G)
        B, nx = G.shape
        n = self.g.size
        u = (np.clip(G, self.g[0], self.g[-1]) - self.g[0]) / (self.g[1] - self.g[0])
        i = np.minimum(u.astype(np.int64), n - 2)
        t = u - i
        rows = np.repeat(np.arange(B), nx)
        A = np.zeros((B, n))
        ww = np.broadcast_to(w, G.shape)
        np.add.at(A, (rows, i.ravel()), (ww * (1 - t)).ravel())
        np.add.at(A, (rows, i.ravel() + 1), (ww * t).ravel())
        return A

    def integrate(self, G: np.ndarray, w: np.ndarray) -> np.ndarray:
        """``sum_j w_j T_k(G[b, j])`` for all batches ``b`` and laws ``k``."""
        return self.weights(G, w) @ self.values

    def evaluate(self, G: np.ndarray, k: int = 0) -> np.ndarray:
        return np.interp(G, self.g, self.values[:, k])


def translate(G, bp: BetaParams) -> np.ndarray:
    """Pointwise ``Psi^{-1}(Phi(G))`` for a single beta law."""
    P = std_normal_cdf(np.asarray(G, dtype=float))
    P = np.clip(P, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return beta_quantile(P, bp)


# ---------------------------------------------------------------------------
# fuzzy-stochastic field


@dataclass
class FuzzyStochasticField:
    kl: KLBasis
    moments: FuzzyVector
    project: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.moments.n != 4:
            raise ValueError("moment vector must have four components")

    def beta_params(self, z) -> BetaParams:
        key = tuple(float(v) for v in np.asarray(z, dtype=float).ravel())
        bp = self._cache.get(key)
        if bp is None:
            bp = beta_from_moments(*key, project=self.project)
            self._cache[key] = bp
        return bp

    def segment_points(self, alpha: float, M_f: int) -> np.ndarray:
        return joint_alpha_cut(self.moments, alpha).points(M_f)

    def table(self, alpha: float, M_f: int) -> TranslationTable:
        return TranslationTable.build([self.beta_params(z) for z in self.segment_points(alpha, M_f)])

    def check_positive(self, M_f: int = 100) -> None:
        for z in self.segment_points(0.0, M_f):
            lo, _ = self.beta_params(z).support
            if not lo > 0:
                raise DomainError(f"beta support reaches {lo:.4g} <= 0 at moments {tuple(z)}")


def sample_translation_field(f: FuzzyStochasticField, y, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    lo = np.array([c.z[0] for c in f.moments.components])
    hi = np.array([c.z[-1] for c in f.moments.components])
    if np.any(z < lo - 1e-12 * np.abs(lo)) or np.any(z > hi + 1e-12 * np.abs(hi)):
        raise DomainError("moment point lies outside the zero-cut")
    return translate(sample_gaussian_field(f.kl, y), f.beta_params(z))


def fuzzify_moments(s: SampleSet, n_bins: int = 10, fallback: bool = True) -> tuple[FuzzyVariable, ...]:
    m = pointwise_moments(s)
    curves = (m.mu, m.sigma, m.gamma1, m.gamma2)
    return tuple(fuzzify_from_histogram(histogram(c[np.isfinite(c)], n_bins), fallback=fallback) for c in curves)


def build_fuzzy_stochastic_field(
    s: SampleSet,
    ell: float = 100.0,
    preserved_std_fraction: float = 0.85,
    n_bins: int = 10,
    project: bool = True,
    kl: KLBasis | None = None,
) -> FuzzyStochasticField:
    """Fuzzify the pointwise moments of ``s`` and attach a KL basis on its grid.

    The four moment variables are completely interactive. With ``project``
    the shape moments of every evaluated point are moved into the beta region
    when they fall outside it.
    """
    comps = fuzzify_moments(s, n_bins)
    vec = FuzzyVector(comps, CompletelyInteractive())
    if kl is None:
        kl = kl_decompose(s.L, s.h, ell, preserved_std_fraction)
    f = FuzzyStochasticField(kl, vec, project=project)
    return f
