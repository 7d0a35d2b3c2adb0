"""Quadrature solution of the 1D bar problem and the global-local scheme.

The bar ``(a u')' = f`` on ``[0, length]`` with ``u(0) = 0`` and a prescribed
end traction has ``a u' = F``, so ``u(x) = int_0^x b F``. Positions are in
micrometres, ``F`` in GPa and displacements in metres.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DegenerateDenominator, DimensionMismatch, DomainError
from .fuzzy import trapezoid_weights
from .homog import homogenize
from .microdata import SampleSet
from .fuzzy import CompletelyInteractive, FuzzyVector
from .randfield import (
    FuzzyStochasticField,
    KLBasis,
    beta_from_moments,
    fuzzify_moments,
    kl_decompose,
    sample_gaussian_field,
    translate,
)
from .stats import pointwise_moments

UM = 1e-6  # metres per micrometre


@dataclass(frozen=True)
class ProblemSpec:
    length: float = 1e6
    load: float = 2.0  # GPa, applied on [0, load_end)
    load_end: float = 0.5e6
    neumann: float = 1.0  # a u' at the right end, GPa
    x0: float = 0.75e6

    def __post_init__(self):
        if not 0 < self.x0 < self.length:
            raise ValueError("QoI point must lie inside the domain")
        if not 0 <= self.load_end <= self.length:
            raise ValueError("load region must lie inside the domain")

    @property
    def offset(self) -> float:
        # a u'(x) = neumann - int_x^length f = offset + int_0^x f
        return self.neumann - self.load * self.load_end * UM


def F_antiderivative(x, spec: ProblemSpec = ProblemSpec()):
    """Axial force ``a u'`` at ``x`` (um), in GPa."""
    x = np.asarray(x, dtype=float)
    return spec.load * np.minimum(x, spec.load_end) * UM + spec.offset


def F_integral(x, spec: ProblemSpec = ProblemSpec()):
    """Exact ``int_0^x F`` in GPa um."""
    x = np.asarray(x, dtype=float)
    xe = spec.load_end
    inside = spec.load * UM * 0.5 * np.minimum(x, xe) ** 2
    beyond = spec.load * UM * xe * np.maximum(x - xe, 0.0)
    return inside + beyond + spec.offset * x


@dataclass
class Solution:
    x: np.ndarray  # um
    u: np.ndarray  # m
    Q: float

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_um", "u_m"])
            for a, b in zip(self.x, self.u):
                w.writerow([repr(float(a)), repr(float(b))])


def _check_uniform(x):
    if x.size >= 3:
        d = np.diff(x)
        if np.max(np.abs(d - d.mean())) > 1e-9 * abs(d.mean()):
            raise DimensionMismatch("grid must be uniform")


def solve_direct(b, x, spec: ProblemSpec = ProblemSpec(), layout: str = "nodes") -> Solution:
    """``u(x) = int_0^x b F`` and ``Q = u(x0)``.

    With ``layout="nodes"`` the values sit on grid nodes starting at zero and
    the integral is the composite trapezoid rule. With ``layout="cells"`` the
    values are element averages centred at ``x`` and ``F`` is integrated
    exactly over each element; ``u`` is then reported at the element edges.
    """
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if b.shape != x.shape:
        raise DimensionMismatch("coefficient and grid lengths differ")
    if np.any(~(b > 0)):
        raise ValueError("coefficient must be positive")
    _check_uniform(x)
    if layout == "nodes":
        g = b * F_antiderivative(x, spec)
        dx = np.diff(x)
        u = np.concatenate([[0.0], np.cumsum(0.5 * dx * (g[1:] + g[:-1]))]) * UM
        if abs(x[0]) > 1e-9 * max(1.0, abs(x[-1])):
            raise ValueError("node grid must start at x = 0")
        Q = _value_at(x, u, b, spec, spec.x0)
        return Solution(x, u, Q)
    if layout == "cells":
        h = x[1] - x[0] if x.size > 1 else 2 * x[0]
        edges = np.concatenate([x - 0.5 * h, [x[-1] + 0.5 * h]])
        Fi = F_integral(edges, spec)
        u = np.concatenate([[0.0], np.cumsum(b * np.diff(Fi))]) * UM
        j = int(np.clip(np.searchsorted(edges, spec.x0, side="right") - 1, 0, b.size - 1))
        Q = float(u[j] + b[j] * (F_integral(spec.x0, spec) - Fi[j]) * UM)
        return Solution(edges, u, Q)
    raise ValueError(f"unknown layout {layout!r}")


def _value_at(x, u, b, spec, xq):
    k = int(np.searchsorted(x, xq))
    if k < x.size and abs(x[k] - xq) <= 1e-9 * max(1.0, abs(xq)):
        return float(u[k])
    k = int(np.clip(k, 1, x.size - 1))
    # trapezoid on the partial panel with b interpolated linearly
    t = (xq - x[k - 1]) / (x[k] - x[k - 1])
    bq = b[k - 1] + t * (b[k] - b[k - 1])
    g0 = b[k - 1] * F_antiderivative(x[k - 1], spec)
    gq = bq * F_antiderivative(xq, spec)
    return float(u[k - 1] + 0.5 * (xq - x[k - 1]) * (g0 + gq) * UM)


def solve_local_dirichlet(b_L, x, u_left: float, u_right: float, layout: str = "nodes", x0: float | None = None):
    """Zero-load problem on a subdomain with prescribed end displacements.

    ``u(x) = u_left + (u_right - u_left) A(x) / A(x_r)`` with ``A`` the running
    integral of ``b_L``. Returns the solution on the nodes (or element edges
    for ``layout="cells"``) and its value at ``x0`` (default: the midpoint).
    """
    b = np.asarray(b_L, dtype=float)
    x = np.asarray(x, dtype=float)
    if b.shape != x.shape:
        raise DimensionMismatch("coefficient and grid lengths differ")
    if not (np.isfinite(u_left) and np.isfinite(u_right)):
        raise ValueError("boundary data must be finite")
    _check_uniform(x)
    if layout == "nodes":
        pos = x
        A = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(x) * (b[1:] + b[:-1]))])
    elif layout == "cells":
        h = x[1] - x[0] if x.size > 1 else 1.0
        pos = np.concatenate([x - 0.5 * h, [x[-1] + 0.5 * h]])
        A = np.concatenate([[0.0], np.cumsum(b * h)])
    else:
        raise ValueError(f"unknown layout {layout!r}")
    total = A[-1]
    if not total > 0:
        raise DegenerateDenominator("integral of the local coefficient is not positive")
    u = u_left + (u_right - u_left) * A / total
    u[0], u[-1] = u_left, u_right
    xq = 0.5 * (pos[0] + pos[-1]) if x0 is None else x0
    if layout == "cells":
        j = int(np.clip(np.searchsorted(pos, xq, side="right") - 1, 0, b.size - 1))
        Aq = A[j] + b[j] * (xq - pos[j])
    else:
        k = int(np.searchsorted(pos, xq))
        if k < pos.size and abs(pos[k] - xq) <= 1e-9 * max(1.0, abs(xq)):
            Aq = A[k]
        else:
            k = int(np.clip(k, 1, pos.size - 1))
            t = (xq - pos[k - 1]) / (pos[k] - pos[k - 1])
            bq = b[k - 1] + t * (b[k] - b[k - 1])
            Aq = A[k - 1] + 0.5 * (xq - pos[k - 1]) * (b[k - 1] + bq)
    Q = u_left + (u_right - u_left) * Aq / total
    return Solution(pos, u, float(Q))


# ---------------------------------------------------------------------------
# global and local fields


@dataclass
class GlobalField:
    """Coarse-scale translation field built from homogenized samples.

    With crisp moments each node carries the beta law matched to the
    effective moments at the corresponding position of the effective samples
    (positions beyond the sample length wrap around). With fuzzy moments the
    field is a stationary fuzzy-stochastic field on the nodes and ``params``
    is empty. A single KL basis drives all nodes.
    """

    x: np.ndarray
    params: list  # BetaParams per node (crisp moments)
    kl: KLBasis
    L_rve: float
    spec: ProblemSpec
    fuzzy: FuzzyStochasticField | None = None

    @property
    def N(self) -> int:
        return self.kl.N

    @property
    def ell(self) -> float:
        return self.kl.ell

    def realize(self, y, z=None) -> np.ndarray:
        return self.translate(sample_gaussian_field(self.kl, y), z)

    def translate(self, G, z=None) -> np.ndarray:
        G = np.atleast_2d(G)
        if self.fuzzy is not None:
            if z is None:
                z = self.fuzzy.moments.peak()
            return translate(G, self.fuzzy.beta_params(z))
        out = np.empty_like(G)
        # nodes sharing a law are transformed together
        groups: dict = {}
        for j, bp in enumerate(self.params):
            groups.setdefault(id(bp), (bp, []))[1].append(j)
        for bp, cols in groups.values():
            out[:, cols] = translate(G[:, cols], bp)
        return out


def effective_samples(s: SampleSet, H: float) -> SampleSet:
    return SampleSet(h=s.h, values=homogenize(s.values, s.h, H), provenance=f"homogenized({H:g})", x=s.x)


def build_global_field(
    effective: SampleSet,
    L_rve: float,
    spec: ProblemSpec = ProblemSpec(),
    ell_factor: float = 5.0,
    preserved_std_fraction: float = 0.85,
    spacing: float | None = None,
    project: bool = True,
    fuzzy_moments: bool = False,
    kl: KLBasis | None = None,
) -> GlobalField:
    """Global field on nodes spaced ``L_rve / 10`` (or ``spacing``) over the domain.

    The correlation length is ``ell_factor * L_rve``. ``fuzzy_moments``
    fuzzifies the histograms of the effective moment curves instead of
    using them point by point.
    """
    if spacing is None:
        spacing = L_rve / 10.0
    n = int(round(spec.length / spacing))
    x = np.linspace(0.0, spec.length, n + 1)
    if kl is None:
        kl = kl_decompose(
            (0.0, spec.length), x, ell_factor * L_rve, preserved_std_fraction, weights=trapezoid_weights(x)
        )
    if fuzzy_moments:
        vec = FuzzyVector(fuzzify_moments(effective), CompletelyInteractive())
        fsf = FuzzyStochasticField(kl, vec, project=project)
        fsf.check_positive()
        return GlobalField(x, [], kl, float(L_rve), spec, fsf)
    m = pointwise_moments(effective)
    pos = np.mod(x, effective.L)
    idx = np.clip(np.searchsorted(effective.x, pos), 0, effective.n_points - 1)
    cache: dict = {}
    params = []
    for j in idx:
        if j not in cache:
            bp = beta_from_moments(m.mu[j], m.sigma[j], m.gamma1[j], m.gamma2[j], project=project)
            if not bp.loc > 0:
                raise DomainError(f"global beta support not positive at effective point {j}")
            cache[j] = bp
        params.append(cache[j])
    return GlobalField(x, params, kl, float(L_rve), spec)


@dataclass
class LocalField:
    """Fuzzy-stochastic field on ``[x0 - L_rve/2, x0 + L_rve/2]`` at element resolution."""

    field: FuzzyStochasticField
    x: np.ndarray  # absolute element centres, um
    h: float

    @property
    def x_left(self) -> float:
        return float(self.x[0] - 0.5 * self.h)

    @property
    def x_right(self) -> float:
        return float(self.x[-1] + 0.5 * self.h)


def local_field(fsf: FuzzyStochasticField, x0: float, L_rve: float, h: float) -> LocalField:
    n = int(round(L_rve / h))
    x = x0 - 0.5 * L_rve + (np.arange(n) + 0.5) * h
    if fsf.kl.phi.shape[0] != n:
        raise DimensionMismatch("local KL basis does not match the local grid")
    return LocalField(fsf, x, h)


@dataclass
class GlobalLocalModel:
    """Evaluates the QoI at ``x0`` by a coarse global solve and a fine local solve.

    ``x_global`` holds the global nodes (starting at 0) and ``x_local`` the
    element centres of the local domain with element size ``h``.
    """

    x_global: np.ndarray
    x_local: np.ndarray
    h: float
    spec: ProblemSpec = field(default_factory=ProblemSpec)

    def __post_init__(self):
        self.x_global = np.asarray(self.x_global, dtype=float)
        self.x_local = np.asarray(self.x_local, dtype=float)
        if not (0 <= self.x_left < self.spec.x0 < self.x_right <= self.spec.length):
            raise ValueError("local domain must lie inside the global domain and contain x0")

    @classmethod
    def from_fields(cls, gf: GlobalField, lf: LocalField, spec: ProblemSpec | None = None) -> "GlobalLocalModel":
        return cls(gf.x, lf.x, lf.h, gf.spec if spec is None else spec)

    @property
    def x_left(self) -> float:
        return float(self.x_local[0] - 0.5 * self.h)

    @property
    def x_right(self) -> float:
        return float(self.x_local[-1] + 0.5 * self.h)

    def boundary_data(self, b_G) -> tuple[np.ndarray, np.ndarray]:
        """Global displacements at the local domain ends for each global realization."""
        b_G = np.atleast_2d(b_G)
        x = self.x_global
        g = b_G * F_antiderivative(x, self.spec)[None, :]
        u = np.concatenate([np.zeros((b_G.shape[0], 1)), np.cumsum(0.5 * np.diff(x) * (g[:, 1:] + g[:, :-1]), axis=1)], axis=1) * UM
        ends = np.array([self.x_left, self.x_right])
        k = np.searchsorted(x, ends)
        if np.all(k < x.size) and np.allclose(x[np.minimum(k, x.size - 1)], ends, rtol=1e-12, atol=0):
            return u[:, k[0]], u[:, k[1]]
        vals = PchipInterpolator(x, u, axis=1)(ends)
        return vals[:, 0], vals[:, 1]

    def ratio_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Element weights of the partial and full local integrals ``A`` and ``B``."""
        h = self.h
        edges_lo = self.x_local - 0.5 * h
        wA = np.clip(self.spec.x0 - edges_lo, 0.0, h)
        wB = np.full(self.x_local.size, h)
        return wA, wB

    def qoi(self, b_G, b_L) -> np.ndarray:
        """QoI for paired global and local realizations (batched along axis 0)."""
        ul, ur = self.boundary_data(b_G)
        wA, wB = self.ratio_weights()
        b_L = np.atleast_2d(b_L)
        return ul + (ur - ul) * (b_L @ wA) / (b_L @ wB)


def global_local_qoi(gf: GlobalField, lf: LocalField, y, z, spec: ProblemSpec | None = None) -> float:
    """QoI for one draw ``y = (y_I, y_II)`` and one moment point ``z``.

    ``z`` holds the four local moments, preceded by the four global moments
    when the global field is fuzzy.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float).ravel()
    yI, yII = y[: gf.N], y[gf.N :]
    model = GlobalLocalModel.from_fields(gf, lf, spec)
    if gf.fuzzy is not None:
        b_G = gf.realize(yI, z[:4])
        z = z[4:]
    else:
        b_G = gf.realize(yI)
    bp = lf.field.beta_params(z)
    b_L = translate(sample_gaussian_field(lf.field.kl, yII), bp)
    return float(model.qoi(b_G, b_L)[0])
