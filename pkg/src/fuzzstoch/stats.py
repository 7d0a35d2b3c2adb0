"""Sample statistics: pointwise moments, correlation, histograms, ECDFs and p-boxes."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVariance
from .microdata import SampleSet


@dataclass
class MomentCurves:
    x: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        """Grid points where the variance vanishes and the shape moments are undefined."""
        return ~(self.sigma > 0)


def pointwise_moments(s: SampleSet | np.ndarray, x: np.ndarray | None = None) -> MomentCurves:
    """Mean, standard deviation, skewness and excess kurtosis across samples.

    All moments use ``1/M`` normalization. Points with zero variance get NaN
    shape moments; inspect ``MomentCurves.degenerate`` to find them.
    """
    if isinstance(s, SampleSet):
        values, x = s.values, s.x
    else:
        values = np.atleast_2d(np.asarray(s, dtype=float))
        x = np.arange(values.shape[1], dtype=float) if x is None else np.asarray(x, dtype=float)
    M = values.shape[0]
    if M < 2:
        raise ValueError("at least two samples are required")
    mu = values.mean(axis=0)
    d = values - mu
    var = np.mean(d * d, axis=0)
    sigma = np.sqrt(var)
    # relative threshold so that round-off in constant columns counts as zero
    scale = np.maximum(np.abs(mu), np.max(np.abs(values), axis=0))
    ok = sigma > 1e-13 * np.where(scale > 0, scale, 1.0)
    sigma = np.where(ok, sigma, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = d / np.where(ok, sigma, np.nan)
        g1 = np.mean(zs**3, axis=0)
        g2 = np.mean(zs**4, axis=0) - 3.0
    return MomentCurves(x, mu, sigma, np.where(ok, g1, np.nan), np.where(ok, g2, np.nan))


def require_nondegenerate(m: MomentCurves) -> None:
    bad = np.flatnonzero(m.degenerate)
    if bad.size:
        raise DegenerateVariance(f"zero variance at {bad.size} grid points (first index {bad[0]})")


@dataclass
class CorrelationCurve:
    r: np.ndarray
    C: np.ndarray


def correlation_function(sample, h: float, max_lag: int | None = None) -> CorrelationCurve:
    """Normalized empirical correlation of one sample at lags ``n h``.

    Fluctuations are taken about the sample mean over the whole bar. At lag
    ``n`` the pairs are ``(k, k + n)``; the cross sum is divided by the root of
    the product of the squared-fluctuation sums over the left and right pair
    members, which bounds the ratio by one.
    """
    b = np.asarray(sample, dtype=float).ravel()
    n_pts = b.size
    if n_pts < 2:
        raise ValueError("need at least two grid points")
    d = b - b.mean()
    tol = 1e-13 * max(np.max(np.abs(b)), 1e-300)
    if np.max(np.abs(d)) <= tol:
        raise DegenerateVariance("constant sample has no correlation structure")
    if max_lag is None:
        max_lag = n_pts - 1
    max_lag = min(max_lag, n_pts - 1)
    C = np.empty(max_lag + 1)
    d2 = d * d
    # prefix sums give the denominators for every lag in O(N)
    cs = np.concatenate([[0.0], np.cumsum(d2)])
    for n in range(max_lag + 1):
        num = np.dot(d[: n_pts - n], d[n:])
        left = cs[n_pts - n]
        right = cs[n_pts] - cs[n]
        den = np.sqrt(left) * np.sqrt(right)
        C[n] = num / den if den > 0 else np.nan
    return CorrelationCurve(np.arange(max_lag + 1) * h, np.clip(C, -1.0, 1.0))


def mean_correlation(samples, h: float, max_lag: int | None = None) -> CorrelationCurve:
    """Average of the per-sample correlation curves."""
    curves = [correlation_function(row, h, max_lag).C for row in np.atleast_2d(samples)]
    C = np.nanmean(np.vstack(curves), axis=0)
    return CorrelationCurve(np.arange(C.size) * h, C)


@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.bin_edges.size != self.counts.size + 1:
            raise ValueError("need one more edge than counts")
        if self.counts.size > 1 and np.any(np.diff(self.bin_edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def degenerate(self) -> bool:
        return self.counts.size == 1 and self.bin_edges[0] == self.bin_edges[1]


def histogram(values, n_bins: int = 10) -> Histogram:
    """Equal-width histogram over ``[min, max]`` with a closed last bin.

    When all values coincide the result is a single zero-width bin holding
    every value.
    """
    v = np.asarray(values, dtype=float).ravel()
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("histogram needs at least one finite value")
    lo, hi = float(v.min()), float(v.max())
    if not hi > lo:
        return Histogram(np.array([lo, hi]), np.array([v.size]))
    counts, edges = np.histogram(v, bins=n_bins, range=(lo, hi))
    return Histogram(edges, counts)


@dataclass
class ECDF:
    """Right-continuous empirical CDF stored as its jump points."""

    support: np.ndarray  # sorted distinct values
    probs: np.ndarray  # F at each support value

    def __call__(self, v) -> np.ndarray:
        idx = np.searchsorted(self.support, np.asarray(v, dtype=float), side="right")
        return np.concatenate([[0.0], self.probs])[idx]

    def quantile(self, p) -> np.ndarray:
        """Smallest support value ``v`` with ``F(v) >= p``."""
        p = np.asarray(p, dtype=float)
        idx = np.searchsorted(self.probs, p - 1e-12, side="left")
        return self.support[np.clip(idx, 0, self.support.size - 1)]


def ecdf(values) -> ECDF:
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("ecdf needs at least one value")
    support, last = np.unique(v, return_index=False, return_counts=True)
    probs = np.cumsum(last) / v.size
    probs[-1] = 1.0
    return ECDF(support, probs)


@dataclass
class PBox:
    members: list
    grid: np.ndarray  # union of member supports
    lower: np.ndarray  # pointwise min of member CDFs on grid
    upper: np.ndarray  # pointwise max of member CDFs on grid

    def _envelope(self, v, env):
        idx = np.searchsorted(self.grid, np.asarray(v, dtype=float), side="right")
        return np.concatenate([[0.0], env])[idx]

    def lower_cdf(self, v) -> np.ndarray:
        return self._envelope(v, self.lower)

    def upper_cdf(self, v) -> np.ndarray:
        return self._envelope(v, self.upper)

    def contains(self, F: ECDF, points) -> np.ndarray:
        Fv = F(points)
        return (self.lower_cdf(points) <= Fv) & (Fv <= self.upper_cdf(points))


def pbox(members) -> PBox:
    members = list(members)
    if not members:
        raise ValueError("p-box needs at least one member")
    grid = np.unique(np.concatenate([m.support for m in members]))
    vals = np.vstack([m(grid) for m in members])
    # both envelopes are step functions jumping only on the union grid
    return PBox(members, grid, vals.min(axis=0), vals.max(axis=0))


# ---------------------------------------------------------------------------
# CSV emitters


def _write_rows(path, header, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def write_moments_csv(m: MomentCurves, path) -> None:
    _write_rows(path, ["x_um", "mu", "sigma", "gamma1", "gamma2"], [m.x, m.mu, m.sigma, m.gamma1, m.gamma2])


def write_correlation_csv(c: CorrelationCurve, path) -> None:
    _write_rows(path, ["r_um", "C"], [c.r, c.C])


def write_ecdf_csv(F: ECDF, path) -> None:
    _write_rows(path, ["value", "prob"], [F.support, F.probs])
