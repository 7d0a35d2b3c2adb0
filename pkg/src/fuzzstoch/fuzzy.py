"""Convex fuzzy variables, joint alpha-cuts under interaction, and fuzzy calculus.

A fuzzy variable is a piecewise-linear membership function given by knots.
Joint alpha-cuts of fuzzy vectors are boxes (no interaction), segments along
the lower-to-upper corner diagonal (complete interaction) or boxes cut down to
a band around that diagonal (partial interaction). Functions of fuzzy vectors
are evaluated cut by cut as the min/max of the function over a discretized
joint cut.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DivisionByZeroInterval, FitFailure
from .stats import Histogram

# ---------------------------------------------------------------------------
# intervals


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval bounds out of order: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, other: "Interval | float", tol: float = 0.0) -> bool:
        if isinstance(other, Interval):
            return self.lo - tol <= other.lo and other.hi <= self.hi + tol
        return self.lo - tol <= other <= self.hi + tol

    def as_tuple(self) -> tuple[float, float]:
        return (self.lo, self.hi)


def fuzzy_add(r1: Interval, r2: Interval) -> Interval:
    return Interval(r1.lo + r2.lo, r1.hi + r2.hi)


def fuzzy_sub(r1: Interval, r2: Interval) -> Interval:
    return Interval(r1.lo - r2.hi, r1.hi - r2.lo)


def fuzzy_mul(r1: Interval, r2: Interval) -> Interval:
    p = [r1.lo * r2.lo, r1.lo * r2.hi, r1.hi * r2.lo, r1.hi * r2.hi]
    return Interval(min(p), max(p))


def fuzzy_div(r1: Interval, r2: Interval) -> Interval:
    if r2.lo <= 0.0 <= r2.hi:
        raise DivisionByZeroInterval(f"divisor range [{r2.lo}, {r2.hi}] contains zero")
    q = [r1.lo / r2.lo, r1.lo / r2.hi, r1.hi / r2.lo, r1.hi / r2.hi]
    return Interval(min(q), max(q))


# ---------------------------------------------------------------------------
# fuzzy variables


@dataclass(frozen=True)
class FuzzyVariable:
    """Normalized convex fuzzy number with piecewise-linear membership.

    ``z`` holds nondecreasing knot abscissae and ``mu`` the membership at each
    knot; outside ``[z[0], z[-1]]`` the membership is zero.
    """

    z: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        mu = np.asarray(self.mu, dtype=float).ravel()
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "mu", mu)
        if z.size == 0 or z.size != mu.size:
            raise ValueError("knot arrays must be nonempty and of equal length")
        if not np.all(np.isfinite(z)):
            raise ValueError("knots must be finite")
        if np.any(np.diff(z) < 0):
            raise ValueError("knot abscissae must be nondecreasing")
        if np.any(mu < 0) or np.any(mu > 1):
            raise ValueError("membership values must lie in [0, 1]")
        peak = np.flatnonzero(mu == 1.0)
        if peak.size == 0:
            raise ValueError("membership must reach 1")
        i0, i1 = peak[0], peak[-1]
        if np.any(np.diff(mu[: i0 + 1]) < 0) or np.any(np.diff(mu[i1:]) > 0) or np.any(mu[i0 : i1 + 1] != 1.0):
            raise ValueError("membership is not convex")

    @classmethod
    def crisp(cls, value: float) -> "FuzzyVariable":
        return cls(np.array([value]), np.array([1.0]))

    @classmethod
    def triangular(cls, lo: float, peak: float, hi: float) -> "FuzzyVariable":
        return cls(np.array([lo, peak, hi]), np.array([0.0 if lo < peak else 1.0, 1.0, 0.0 if hi > peak else 1.0]))

    @classmethod
    def trapezoidal(cls, lo: float, c0: float, c1: float, hi: float) -> "FuzzyVariable":
        return cls(
            np.array([lo, c0, c1, hi]),
            np.array([0.0 if lo < c0 else 1.0, 1.0, 1.0, 0.0 if hi > c1 else 1.0]),
        )

    @property
    def is_crisp(self) -> bool:
        return self.z[0] == self.z[-1]

    def membership(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.is_crisp:
            return np.where(v == self.z[0], 1.0, 0.0)
        out = np.zeros_like(v)
        inside = (v >= self.z[0]) & (v <= self.z[-1])
        peak = np.flatnonzero(self.mu == 1.0)
        i0, i1 = peak[0], peak[-1]
        zl, ml = self.z[: i0 + 1], self.mu[: i0 + 1]
        zr, mr = self.z[i1:], self.mu[i1:]
        left = v <= self.z[i0]
        right = v >= self.z[i1]
        res = np.ones_like(v)
        if zl.size > 1:
            res = np.where(left, _interp_right_continuous(v, zl, ml), res)
        if zr.size > 1:
            res = np.where(right & ~left, _interp_right_continuous(v, zr, mr), res)
        out[inside] = res[inside]
        return out

    def alpha_cut(self, alpha: float) -> Interval:
        return alpha_cut(self, alpha)

    def to_json(self) -> str:
        return json.dumps([{"z": float(a), "mu": float(b)} for a, b in zip(self.z, self.mu)])

    @classmethod
    def from_json(cls, text: str) -> "FuzzyVariable":
        knots = json.loads(text)
        return cls(np.array([k["z"] for k in knots]), np.array([k["mu"] for k in knots]))


def _interp_right_continuous(v, z, m):
    # np.interp on a possibly repeated abscissa: take the larger membership at jumps
    out = np.interp(v, z, m)
    for k in np.flatnonzero(np.diff(z) == 0):
        hit = v == z[k]
        out = np.where(hit, max(m[k], m[k + 1]), out)
    return out


def alpha_cut(v: FuzzyVariable, alpha: float) -> Interval:
    """Closed interval ``{z : mu(z) >= alpha}``; ``alpha = 0`` gives the support closure."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    z, mu = v.z, v.mu
    if v.is_crisp:
        return Interval(z[0], z[0])
    peak = np.flatnonzero(mu == 1.0)
    i0, i1 = peak[0], peak[-1]

    # left end: first knot reaching the level on the rising branch
    if alpha == 0.0:
        k = int(np.argmax(mu[: i0 + 1] > 0.0))
        lo = z[k - 1] if k > 0 else z[0]
    else:
        k = int(np.argmax(mu[: i0 + 1] >= alpha))
        if k == 0 or mu[k] == mu[k - 1]:
            lo = z[k]
        else:
            # interpolate from the inner knot so that alpha = mu[k] returns z[k] exactly
            lo = z[k] - (mu[k] - alpha) / (mu[k] - mu[k - 1]) * (z[k] - z[k - 1])

    zr, mr = z[i1:][::-1], mu[i1:][::-1]
    if alpha == 0.0:
        k = int(np.argmax(mr > 0.0))
        hi = zr[k - 1] if k > 0 else zr[0]
    else:
        k = int(np.argmax(mr >= alpha))
        if k == 0 or mr[k] == mr[k - 1]:
            hi = zr[k]
        else:
            hi = zr[k] - (mr[k] - alpha) / (mr[k] - mr[k - 1]) * (zr[k] - zr[k - 1])
    return Interval(float(min(lo, hi)), float(max(lo, hi)))


def write_alpha_table_csv(v: FuzzyVariable, alphas, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "lo", "hi"])
        for a in alphas:
            c = alpha_cut(v, float(a))
            w.writerow([repr(float(a)), repr(c.lo), repr(c.hi)])


# ---------------------------------------------------------------------------
# interaction and joint alpha-cuts


@dataclass(frozen=True)
class NonInteractive:
    pass


@dataclass(frozen=True)
class CompletelyInteractive:
    pass


@dataclass(frozen=True)
class PartiallyInteractive:
    """Band of half-thickness ``beta`` around the corner diagonal.

    ``beta`` is a scalar shared by all pairs or a symmetric ``(n, n)`` matrix
    of per-pair values. In the coordinates ``s_i = (z_i - lo_i) / (hi_i - lo_i)``
    of the component cuts the joint cut keeps points with
    ``|s_i - s_j| <= beta_ij / 2``; for two identical triangles on ``[-1, 1]``
    this is ``|z_1 - z_2| <= beta (1 - alpha)``, the level set of
    :func:`hexagon_membership`.
    """

    beta: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.beta, dtype=float) <= 0):
            raise ValueError("interaction parameter must be positive")

    def matrix(self, n: int) -> np.ndarray:
        b = np.asarray(self.beta, dtype=float)
        if b.ndim == 0:
            return np.full((n, n), float(b))
        if b.shape != (n, n) or not np.allclose(b, b.T):
            raise ValueError("per-pair beta must be a symmetric (n, n) matrix")
        return b


Interaction = NonInteractive | CompletelyInteractive | PartiallyInteractive


@dataclass(frozen=True)
class FuzzyVector:
    components: tuple
    interaction: Interaction = field(default_factory=NonInteractive)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) < 1:
            raise ValueError("fuzzy vector needs at least one component")

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def is_crisp(self) -> bool:
        return all(c.is_crisp for c in self.components)

    def peak(self) -> np.ndarray:
        """A point of the joint 1-cut (the lower corner of the core box)."""
        return np.array([alpha_cut(c, 1.0).lo for c in self.components])


@dataclass(frozen=True)
class Box:
    intervals: tuple

    @property
    def lo(self) -> np.ndarray:
        return np.array([i.lo for i in self.intervals])

    @property
    def hi(self) -> np.ndarray:
        return np.array([i.hi for i in self.intervals])

    def contains(self, z, tol=0.0) -> np.ndarray:
        z = np.atleast_2d(z)
        return np.all((z >= self.lo - tol) & (z <= self.hi + tol), axis=1)

    def points(self, M_f: int, cap: int = 1_000_000) -> np.ndarray:
        n = len(self.intervals)
        m = max(2, min(M_f, int(math.floor(cap ** (1.0 / n) + 1e-9))))
        axes = [np.linspace(i.lo, i.hi, m if i.hi > i.lo else 1) for i in self.intervals]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([g.ravel() for g in mesh])


@dataclass(frozen=True)
class Segment:
    endpoint_lo: np.ndarray
    endpoint_hi: np.ndarray

    def at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]
        return self.endpoint_lo[None, :] + t * (self.endpoint_hi - self.endpoint_lo)[None, :]

    def points(self, M_f: int) -> np.ndarray:
        if np.all(self.endpoint_lo == self.endpoint_hi):
            return self.endpoint_lo[None, :].copy()
        return self.at(np.linspace(0.0, 1.0, M_f))

    def contains(self, z, tol=1e-12) -> np.ndarray:
        z = np.atleast_2d(z)
        d = self.endpoint_hi - self.endpoint_lo
        dd = float(d @ d)
        if dd == 0:
            return np.all(np.abs(z - self.endpoint_lo) <= tol, axis=1)
        t = np.clip((z - self.endpoint_lo) @ d / dd, 0.0, 1.0)
        return np.all(np.abs(self.at(t) - z) <= tol * (1 + np.abs(z)), axis=1)


@dataclass(frozen=True)
class HexagonalRegion:
    box: Box
    beta: np.ndarray  # (n, n) per-pair band parameters

    def _normalized(self, z):
        lo, hi = self.box.lo, self.box.hi
        span = np.where(hi > lo, hi - lo, 1.0)
        return (np.atleast_2d(z) - lo) / span

    def contains(self, z, tol=0.0) -> np.ndarray:
        s = self._normalized(z)
        diff = np.abs(s[:, :, None] - s[:, None, :])
        band = np.all(diff <= self.beta[None] / 2 + tol, axis=(1, 2))
        return band & self.box.contains(z, tol)

    def points(self, M_f: int, cap: int = 1_000_000) -> np.ndarray:
        """Box grid pulled toward the diagonal until it meets the band constraints.

        Each box grid point ``s`` is replaced by ``c + lam (s - c)`` with ``c``
        the diagonal point of equal mean and ``lam`` the largest factor that
        satisfies every pair constraint, so boundary points are sampled too.
        """
        lo, hi = self.box.lo, self.box.hi
        s = self._normalized(self.box.points(M_f, cap))
        c = s.mean(axis=1, keepdims=True)
        diff = np.abs(s[:, :, None] - s[:, None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(diff > 0, (self.beta[None] / 2) / diff, np.inf)
        lam = np.minimum(1.0, ratio.min(axis=(1, 2)))[:, None]
        s = c + lam * (s - c)
        pts = lo + s * np.where(hi > lo, hi - lo, 0.0)
        return np.unique(pts, axis=0)


Geometry = Box | Segment | HexagonalRegion


@dataclass(frozen=True)
class JointAlphaCut:
    alpha: float
    geometry: Geometry

    def points(self, M_f: int) -> np.ndarray:
        return self.geometry.points(M_f)

    def contains(self, z, tol: float = 1e-12) -> np.ndarray:
        return self.geometry.contains(z, tol)


def joint_alpha_cut(vec: FuzzyVector, alpha: float) -> JointAlphaCut:
    cuts = tuple(alpha_cut(c, alpha) for c in vec.components)
    box = Box(cuts)
    it = vec.interaction
    if isinstance(it, NonInteractive):
        geom: Geometry = box
    elif isinstance(it, CompletelyInteractive):
        geom = Segment(box.lo, box.hi)
    elif isinstance(it, PartiallyInteractive):
        geom = HexagonalRegion(box, it.matrix(vec.n))
    else:
        raise TypeError(f"unknown interaction {it!r}")
    return JointAlphaCut(float(alpha), geom)


def hexagon_membership(z1, z2, beta: float):
    """Joint membership of two identical triangles on ``[-1, 1]`` with band ``beta``."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    inner = np.minimum(1.0 - np.abs(z1 - z2) / beta, 1.0 - np.maximum(np.abs(z1), np.abs(z2)))
    val = np.maximum(0.0, inner)
    out = np.where((np.abs(z1) <= 1.0) & (np.abs(z2) <= 1.0), val, 0.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# images of functions of fuzzy vectors


def image_alpha_cut(g: Callable[[np.ndarray], np.ndarray], cut: JointAlphaCut, M_f: int = 100) -> Interval:
    """Range of ``g`` over a discretized joint cut.

    ``g`` maps a ``(K, n)`` array of points to ``K`` values.
    """
    if M_f < 2:
        raise ValueError("M_f must be at least 2")
    vals = np.asarray(g(cut.points(M_f)), dtype=float).ravel()
    return Interval(float(vals.min()), float(vals.max()))


def fuzzy_image(g, vec: FuzzyVector, alphas: Sequence[float], M_f: int = 100) -> list[Interval]:
    return [image_alpha_cut(g, joint_alpha_cut(vec, a), M_f) for a in alphas]


def trapezoid_weights(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return np.ones(x.size) if x.size else np.zeros(0)
    dx = np.diff(x)
    w = np.zeros(x.size)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def fuzzy_integrate(
    g: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x,
    vec: FuzzyVector,
    alphas: Sequence[float],
    M_f: int = 100,
) -> list[Interval]:
    """Alpha-cuts of the integral of a fuzzy-valued function over the grid ``x``.

    ``g(x, Z)`` returns the integrand at every grid point for every joint-cut
    point, shape ``(len(x), K)``. The composite trapezoid sum is formed per
    joint-cut point and its extreme values give the cut of the integral.
    """
    x = np.asarray(x, dtype=float)
    w = trapezoid_weights(x)
    out = []
    for a in alphas:
        Z = joint_alpha_cut(vec, a).points(M_f)
        G = np.asarray(g(x, Z), dtype=float).reshape(x.size, Z.shape[0])
        total = w @ G
        out.append(Interval(float(total.min()), float(total.max())))
    return out


# ---------------------------------------------------------------------------
# fuzzification of histograms


PLATEAU_TOL = 0.10


def _fit_line(xs, ys):
    if xs.size == 1:
        raise FitFailure("cannot fit a line through one point")
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(intercept)


def _branch(xs, ys, edge):
    # a branch with a single bin anchors its line at the outer histogram edge
    if xs.size == 1:
        xs = np.array([edge, xs[0]])
        ys = np.array([0.0, ys[0]])
    return _fit_line(xs, ys)


def fuzzify_from_histogram(h: Histogram, fallback: bool = True, plateau_tol: float = PLATEAU_TOL) -> FuzzyVariable:
    """Membership function from least-squares lines through a histogram.

    The most populated bin (leftmost on ties) and every bin to its left give
    the rising line; that bin and every bin to its right give the falling
    line. Their crossing is the peak and their zeros bound the support. A run
    of two or more adjacent bins around the mode within ``plateau_tol`` of the
    maximum count turns the peak into a flat core across that run. If a line
    has the wrong slope sign the result is a triangle over the data range
    peaked at the mode bin, or ``FitFailure`` when ``fallback`` is false.
    """
    if h.degenerate:
        return FuzzyVariable.crisp(float(h.bin_edges[0]))
    counts = h.counts.astype(float)
    if np.count_nonzero(counts) < 1:
        raise ValueError("histogram is empty")
    mids, edges = h.midpoints, h.bin_edges
    k = int(np.argmax(counts))

    thr = (1.0 - plateau_tol) * counts[k]
    p0 = k
    while p0 > 0 and counts[p0 - 1] >= thr:
        p0 -= 1
    p1 = k
    while p1 < counts.size - 1 and counts[p1 + 1] >= thr:
        p1 += 1

    def fail(msg):
        if not fallback:
            raise FitFailure(msg)
        lo, hi = float(edges[0]), float(edges[-1])
        return FuzzyVariable.triangular(lo, float(mids[k]), hi)

    try:
        sl, il = _branch(mids[: p0 + 1], counts[: p0 + 1], edges[0])
        sr, ir = _branch(mids[p1:], counts[p1:], edges[-1])
    except FitFailure as exc:
        return fail(str(exc))
    # slopes within round-off of zero (e.g. a symmetric branch) count as flat
    flat = 1e-9 * counts.max() / max(float(edges[-1] - edges[0]), 1e-300)
    if not (sl > flat and sr < -flat):
        return fail(f"fitted branch slopes have wrong sign ({sl:.3g}, {sr:.3g})")
    zl, zr = -il / sl, -ir / sr

    if p1 > p0:
        c0, c1 = float(mids[p0]), float(mids[p1])
        if not (zl < c0 and c1 < zr):
            return fail("plateau lies outside the fitted support")
        return FuzzyVariable.trapezoidal(zl, c0, c1, zr)

    peak = (ir - il) / (sl - sr)
    height = sl * peak + il
    if not (height > 0 and zl < peak < zr):
        return fail("fitted lines do not cross above the axis")
    return FuzzyVariable.triangular(zl, peak, zr)
