"""Monte-Carlo CDFs of alpha-cut limits, truth p-boxes and containment metrics."""

from __future__ import annotations

import csv
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fuzzy import CompletelyInteractive, FuzzyVector, joint_alpha_cut
from .microdata import SampleSet
from .randfield import FuzzyStochasticField, TranslationTable, sample_gaussian_field
from .solver import GlobalField, GlobalLocalModel, F_antiderivative, UM
from .stats import PBox, ecdf, pbox

PROB_GRID = np.linspace(0.0, 1.0, 101)
DEFAULT_BATCH = 500


def batch_rng(seed: int, stream: int, batch: int) -> np.random.Generator:
    """Independent generator for one fixed-size batch of one stream."""
    return np.random.default_rng([int(seed), int(stream), int(batch)])


def standard_normal_batches(n_dims: int, M_s: int, seed: int, stream: int = 0, batch_size: int = DEFAULT_BATCH):
    """Batches of standard normal vectors; the split never depends on thread count."""
    starts = range(0, M_s, batch_size)
    for b, s in enumerate(starts):
        yield b, batch_rng(seed, stream, b).standard_normal((min(batch_size, M_s - s), n_dims))


@dataclass
class AlphaCutCDFs:
    alphas: np.ndarray
    q_left: np.ndarray  # (n_alpha, M_s)
    q_right: np.ndarray
    M_s: int
    M_f: int
    seed: int
    left: list = field(init=False)
    right: list = field(init=False)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.left = [ecdf(q) for q in self.q_left]
        self.right = [ecdf(q) for q in self.q_right]

    def index(self, alpha: float) -> int:
        hit = np.flatnonzero(np.isclose(self.alphas, alpha, rtol=0, atol=1e-12))
        if hit.size == 0:
            raise KeyError(f"band has no level {alpha}")
        return int(hit[0])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["alpha", "side", "value", "prob"])
            for a, Fl, Fr in zip(self.alphas, self.left, self.right):
                for side, F in (("left", Fl), ("right", Fr)):
                    for v, p in zip(F.support, F.probs):
                        w.writerow([repr(float(a)), side, repr(float(v)), repr(float(p))])

    def write_samples_csv(self, path) -> None:
        """Per-draw limits, one row per Gaussian draw and level."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y_index", "alpha", "Q_left", "Q_right"])
            for i, a in enumerate(self.alphas):
                for m in range(self.q_left.shape[1]):
                    w.writerow([m, repr(float(a)), repr(float(self.q_left[i, m])), repr(float(self.q_right[i, m]))])


def qoi_alpha_cdfs(
    qoi: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n_dims: int,
    vec: FuzzyVector,
    alphas: Sequence[float],
    M_s: int = 10_000,
    M_f: int = 100,
    seed: int = 0,
    threads: int = 1,
    batch_size: int = DEFAULT_BATCH,
    nested: bool = True,
) -> AlphaCutCDFs:
    """Left/right limits of the QoI alpha-cuts for ``M_s`` Gaussian draws.

    ``qoi(Y, Z)`` evaluates a ``(B, n_dims)`` batch of standard normal vectors
    against ``K`` points of the joint moment cut and returns ``(B, K)``. For
    each draw and level the limits are the min and max over the ``M_f``
    discretization points of the cut.

    Diagonals of the component boxes at two levels need not contain one
    another when the components have different shapes, so with ``nested``
    the cut at ``alpha`` is taken as the union of the diagonals at all
    requested levels ``>= alpha``. The limits then nest for every draw.
    """
    if not isinstance(vec.interaction, CompletelyInteractive):
        raise ValueError("Monte-Carlo alpha-cut limits expect completely interactive moments")
    if M_s < 1 or M_f < 1:
        raise ValueError("M_s and M_f must be positive")
    alphas = np.asarray(alphas, dtype=float)
    Zs = [joint_alpha_cut(vec, a).points(M_f) for a in alphas]
    down = np.argsort(-alphas, kind="stable")

    def run(item):
        _, Y = item
        lo = np.empty((alphas.size, Y.shape[0]))
        hi = np.empty_like(lo)
        for i, Z in enumerate(Zs):
            V = np.asarray(qoi(Y, Z), dtype=float).reshape(Y.shape[0], Z.shape[0])
            lo[i], hi[i] = V.min(axis=1), V.max(axis=1)
        if nested:
            lo[down] = np.minimum.accumulate(lo[down], axis=0)
            hi[down] = np.maximum.accumulate(hi[down], axis=0)
        return lo, hi

    batches = standard_normal_batches(n_dims, M_s, seed, 0, batch_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, batches))
    else:
        parts = [run(b) for b in batches]
    q_left = np.concatenate([p[0] for p in parts], axis=1)
    q_right = np.concatenate([p[1] for p in parts], axis=1)
    return AlphaCutCDFs(alphas, q_left, q_right, M_s, M_f, seed)


class _TableCache:
    def __init__(self):
        self._tables: dict = {}
        self._lock = threading.Lock()

    def get(self, field_: FuzzyStochasticField, Z: np.ndarray) -> TranslationTable:
        key = (id(field_), Z.shape, Z.tobytes())
        with self._lock:
            tab = self._tables.get(key)
            if tab is None:
                tab = TranslationTable.build([field_.beta_params(z) for z in Z])
                self._tables[key] = tab
        return tab


class IntegralQoI:
    """``sum_j w_j b(x_j, y, z)`` for a fuzzy-stochastic field, via tabulated transforms."""

    def __init__(self, field_: FuzzyStochasticField, weights: np.ndarray):
        self.field = field_
        self.weights = np.asarray(weights, dtype=float)
        self._cache = _TableCache()

    @property
    def n_dims(self) -> int:
        return self.field.kl.N

    def __call__(self, Y, Z):
        G = sample_gaussian_field(self.field.kl, Y)
        return self._cache.get(self.field, np.atleast_2d(Z)).integrate(G, self.weights)


def half_domain_weights(n_points: int, h: float) -> np.ndarray:
    """Element weights of ``int_0^{L/2} b`` for element-wise constant data."""
    w = np.zeros(n_points)
    half = 0.5 * n_points * h
    edges = np.arange(n_points) * h
    w[:] = np.clip(half - edges, 0.0, h)
    return w


def local_qoi_direct(b: np.ndarray, h: float) -> float:
    return float(half_domain_weights(b.size, h) @ b)


class GlobalLocalQoI:
    """QoI at ``x0`` from a global field and a local fuzzy-stochastic field.

    With a fuzzy global field the joint moment points carry the four global
    moments followed by the four local ones; a crisp global field uses the
    node-wise laws and only the local moments vary.
    """

    def __init__(self, gf: GlobalField, lf_field: FuzzyStochasticField, model: GlobalLocalModel):
        self.gf = gf
        self.lf = lf_field
        self.model = model
        x = gf.x
        Fx = F_antiderivative(x, model.spec) * UM
        self.w_left = self._partial_trapezoid(x, model.x_left) * Fx
        self.w_right = self._partial_trapezoid(x, model.x_right) * Fx
        self.wA, self.wB = model.ratio_weights()
        self._cache = _TableCache()

    @staticmethod
    def _partial_trapezoid(x, xe):
        k = int(np.searchsorted(x, xe))
        if k >= x.size or abs(x[k] - xe) > 1e-9 * max(1.0, xe):
            raise ValueError("local domain ends must be global nodes")
        w = np.zeros(x.size)
        dx = np.diff(x[: k + 1])
        w[:k] += 0.5 * dx
        w[1 : k + 1] += 0.5 * dx
        return w

    @property
    def n_dims(self) -> int:
        return self.gf.N + self.lf.kl.N

    @property
    def fuzzy_global(self) -> bool:
        return self.gf.fuzzy is not None

    def moment_vector(self) -> FuzzyVector:
        comps = self.lf.moments.components
        if self.fuzzy_global:
            comps = self.gf.fuzzy.moments.components + comps
        return FuzzyVector(comps, CompletelyInteractive())

    def __call__(self, Y, Z):
        Y = np.atleast_2d(Y)
        Z = np.atleast_2d(Z)
        YI, YII = Y[:, : self.gf.N], Y[:, self.gf.N :]
        GI = sample_gaussian_field(self.gf.kl, YI)
        if self.fuzzy_global:
            tG = self._cache.get(self.gf.fuzzy, np.ascontiguousarray(Z[:, :4]))
            ul = tG.integrate(GI, self.w_left)
            ur = tG.integrate(GI, self.w_right)
            ZL = np.ascontiguousarray(Z[:, 4:])
        else:
            bG = self.gf.translate(GI)
            ul = (bG @ self.w_left)[:, None]
            ur = (bG @ self.w_right)[:, None]
            ZL = Z
        GII = sample_gaussian_field(self.lf.kl, YII)
        tL = self._cache.get(self.lf, ZL)
        A = tL.integrate(GII, self.wA)
        B = tL.integrate(GII, self.wB)
        return ul + (ur - ul) * A / B


# ---------------------------------------------------------------------------
# truth p-box and containment


@dataclass
class TruthPBox:
    qoi: np.ndarray  # true QoI of every sample
    groups: list  # index arrays of the members
    members: list  # ECDF per group
    box: PBox


def truth_pbox_from_qoi(Q, N_b: int = 20, M_tilde: int = 50, seed: int = 0) -> TruthPBox:
    Q = np.asarray(Q, dtype=float).ravel()
    if not (N_b >= 1 and 1 <= M_tilde < Q.size):
        raise ValueError("need N_b >= 1 and 1 <= M_tilde < M")
    rng = batch_rng(seed, 1, 0)
    groups = [np.sort(rng.choice(Q.size, size=M_tilde, replace=False)) for _ in range(N_b)]
    members = [ecdf(Q[g]) for g in groups]
    return TruthPBox(Q, groups, members, pbox(members))


def truth_pbox(s: SampleSet, qoi_direct: Callable[[np.ndarray], float], N_b: int = 20, M_tilde: int = 50, seed: int = 0) -> TruthPBox:
    """P-box of the true QoI over ``N_b`` groups of ``M_tilde`` distinct samples."""
    Q = np.array([qoi_direct(row) for row in s.values])
    return truth_pbox_from_qoi(Q, N_b, M_tilde, seed)


def containment(truth: TruthPBox, band: AlphaCutCDFs, alpha: float, probs=PROB_GRID) -> float:
    """Share of member quantiles that fall between the band's limit quantiles.

    At every probability level ``p`` of the grid the quantile of each truth
    member is compared with the quantiles of the left-limit and right-limit
    CDFs at the same level.
    """
    i = band.index(alpha)
    lo = band.left[i].quantile(probs)
    hi = band.right[i].quantile(probs)
    hits = [(lo <= F.quantile(probs)) & (F.quantile(probs) <= hi) for F in truth.members]
    return float(np.mean(hits))


@dataclass
class CalibrationReport:
    values: list
    containment_alpha0: list
    containment_alpha1: list
    selected: float
    selected_index: int

    def as_dict(self, name: str) -> dict:
        return {
            f"{name}_grid": [float(v) for v in self.values],
            "containment_alpha0": [float(v) for v in self.containment_alpha0],
            "containment_alpha1": [float(v) for v in self.containment_alpha1],
            f"selected_{name}": float(self.selected),
        }


def select_best(values, bands: list, truth: TruthPBox) -> CalibrationReport:
    """Pick the candidate with the largest 1-cut containment (first on ties)."""
    c0 = [containment(truth, b, 0.0) for b in bands]
    c1 = [containment(truth, b, 1.0) for b in bands]
    k = int(np.argmax(c1))
    return CalibrationReport(list(values), c0, c1, float(values[k]), k)


def write_containment_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
