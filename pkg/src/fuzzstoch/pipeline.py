"""Pipeline stages shared by the command line and the acceptance checks.

Each stage is a pure function of its inputs and an integer seed; stage seeds
are derived from the run seed and a fixed stage tag so that reruns and
partial reruns draw identical random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fuzzy import CompletelyInteractive, FuzzyVector
from .homog import DEFAULT_RVE_CANDIDATES, RveReport, rve_length
from .microdata import (
    FiberMapSpec,
    PhaseModuli,
    SampleSet,
    bootstrap,
    cell_centers,
    extract_1d_samples,
    generate_microstructure,
    rasterize,
)
from .randfield import FuzzyStochasticField, build_fuzzy_stochastic_field, fuzzify_moments, kl_decompose
from .solver import (
    GlobalField,
    GlobalLocalModel,
    ProblemSpec,
    build_global_field,
    effective_samples,
    local_field,
    solve_direct,
)
from .validate import (
    AlphaCutCDFs,
    CalibrationReport,
    GlobalLocalQoI,
    IntegralQoI,
    TruthPBox,
    containment,
    half_domain_weights,
    local_qoi_direct,
    qoi_alpha_cdfs,
    select_best,
    truth_pbox,
)

STAGE_TAGS = {
    "bootstrap_local": 1,
    "bootstrap_rve": 2,
    "truth_local": 3,
    "mc_local": 4,
    "bootstrap_global_truth": 5,
    "truth_global": 6,
    "mc_global": 7,
}


def stage_seed(seed: int, stage: str) -> int:
    """Deterministic 63-bit seed for a pipeline stage."""
    ss = np.random.SeedSequence([int(seed), STAGE_TAGS[stage]])
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


@dataclass
class RunConfig:
    seed: int = 7
    micro: FiberMapSpec = field(default_factory=FiberMapSpec)
    pixel_size: float = 1.0
    moduli: PhaseModuli = field(default_factory=PhaseModuli)
    strip_height: float = 10.0
    element: float = 10.0
    bootstrap_M: int = 100
    bootstrap_L: float = 1e4
    n_bins: int = 10
    project_moments: bool = True
    ell: float = 100.0
    ell_sweep: tuple = (25.0, 50.0, 100.0, 200.0, 400.0)
    preserved_std_fraction: float = 0.85
    rve_lengths: tuple = DEFAULT_RVE_CANDIDATES
    rve_tol: float = 0.05
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    global_ell_factor: float = 5.0
    global_ell_sweep: tuple = (0.25, 0.5, 1.0, 2.0, 5.0)
    global_fuzzy_moments: bool = True
    global_truth_M: int = 100
    M_s: int = 10_000
    M_f: int = 100
    N_b: int = 20
    M_tilde: int = 50
    alphas: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    threads: int = 1


# ---------------------------------------------------------------------------
# data stages


def synth(cfg: RunConfig):
    fmap = generate_microstructure(cfg.micro)
    return fmap, rasterize(fmap, cfg.pixel_size)


def extract(cfg: RunConfig, bmap) -> SampleSet:
    return extract_1d_samples(bmap, cfg.moduli, cfg.strip_height, cfg.element)


def local_bootstrap(cfg: RunConfig, src: SampleSet, L: float | None = None) -> SampleSet:
    L = cfg.bootstrap_L if L is None else L
    return bootstrap(src, cfg.bootstrap_M, L, stage_seed(cfg.seed, "bootstrap_local"))


def rve_samples(cfg: RunConfig, src: SampleSet) -> SampleSet:
    return bootstrap(src, cfg.bootstrap_M, max(cfg.rve_lengths), stage_seed(cfg.seed, "bootstrap_rve"))


def rve(cfg: RunConfig, src: SampleSet) -> tuple[RveReport, SampleSet]:
    s = rve_samples(cfg, src)
    return rve_length(s, cfg.rve_lengths, cfg.rve_tol), s


# ---------------------------------------------------------------------------
# local validation


@dataclass
class LocalValidation:
    truth: TruthPBox
    bands: dict  # ell -> AlphaCutCDFs
    report: CalibrationReport
    fields: dict  # ell -> FuzzyStochasticField

    @property
    def best(self) -> AlphaCutCDFs:
        return self.bands[self.report.selected]


def fit_field(cfg: RunConfig, s: SampleSet, ell: float | None = None) -> FuzzyStochasticField:
    ell = cfg.ell if ell is None else ell
    f = build_fuzzy_stochastic_field(s, ell, cfg.preserved_std_fraction, cfg.n_bins, project=cfg.project_moments)
    f.check_positive(cfg.M_f)
    return f


def local_band(cfg: RunConfig, f: FuzzyStochasticField, s: SampleSet) -> AlphaCutCDFs:
    qoi = IntegralQoI(f, half_domain_weights(s.n_points, s.h))
    return qoi_alpha_cdfs(
        qoi, qoi.n_dims, f.moments, cfg.alphas, cfg.M_s, cfg.M_f, stage_seed(cfg.seed, "mc_local"), cfg.threads
    )


def local_truth(cfg: RunConfig, s: SampleSet) -> TruthPBox:
    return truth_pbox(s, lambda b: local_qoi_direct(b, s.h), cfg.N_b, cfg.M_tilde, stage_seed(cfg.seed, "truth_local"))


def validate_local(cfg: RunConfig, s: SampleSet, ells=None) -> LocalValidation:
    """Bands for each candidate correlation length; the best 1-cut fit is selected."""
    ells = tuple(cfg.ell_sweep if ells is None else ells)
    truth = local_truth(cfg, s)
    bands, fields = {}, {}
    vec = FuzzyVector(fuzzify_moments(s, cfg.n_bins), CompletelyInteractive())
    for ell in ells:
        kl = kl_decompose(s.L, s.h, ell, cfg.preserved_std_fraction)
        f = FuzzyStochasticField(kl, vec, project=cfg.project_moments)
        f.check_positive(cfg.M_f)
        fields[ell] = f
        bands[ell] = local_band(cfg, f, s)
    return LocalValidation(truth, bands, select_best(list(ells), [bands[e] for e in ells], truth), fields)


# ---------------------------------------------------------------------------
# global-local validation


@dataclass
class GlobalLocalValidation:
    L_rve: float
    truth: TruthPBox
    bands: dict  # ell factor -> AlphaCutCDFs
    report: CalibrationReport
    global_fields: dict
    local: FuzzyStochasticField

    @property
    def best(self) -> AlphaCutCDFs:
        return self.bands[self.report.selected]


def global_truth(cfg: RunConfig, src: SampleSet) -> TruthPBox:
    """True QoI of bootstrap samples spanning the whole bar."""
    spec = cfg.problem
    s = bootstrap(src, cfg.global_truth_M, spec.length, stage_seed(cfg.seed, "bootstrap_global_truth"))
    x = cell_centers(s.n_points, s.h)
    return truth_pbox(
        s,
        lambda b: solve_direct(b, x, spec, layout="cells").Q,
        cfg.N_b,
        cfg.M_tilde,
        stage_seed(cfg.seed, "truth_global"),
    )


def global_local_band(cfg: RunConfig, gf: GlobalField, lf_field: FuzzyStochasticField) -> AlphaCutCDFs:
    lf = local_field(lf_field, cfg.problem.x0, gf.L_rve, cfg.element)
    model = GlobalLocalModel.from_fields(gf, lf, cfg.problem)
    qoi = GlobalLocalQoI(gf, lf_field, model)
    return qoi_alpha_cdfs(
        qoi,
        qoi.n_dims,
        qoi.moment_vector(),
        cfg.alphas,
        cfg.M_s,
        cfg.M_f,
        stage_seed(cfg.seed, "mc_global"),
        cfg.threads,
    )


def validate_global_local(
    cfg: RunConfig,
    src: SampleSet,
    rve_report: RveReport,
    rve_set: SampleSet,
    ell_local: float | None = None,
    factors=None,
) -> GlobalLocalValidation:
    """Global-local bands for each global correlation length factor."""
    L_rve = rve_report.L_rve
    if L_rve is None:
        raise ValueError("no RVE length available")
    factors = tuple(cfg.global_ell_sweep if factors is None else factors)
    eff = effective_samples(rve_set, L_rve)
    s_loc = local_bootstrap(cfg, src, L_rve)
    lf_field = fit_field(cfg, s_loc, ell_local)
    truth = global_truth(cfg, src)
    bands, gfs = {}, {}
    for fac in factors:
        gf = build_global_field(
            eff,
            L_rve,
            cfg.problem,
            ell_factor=fac,
            preserved_std_fraction=cfg.preserved_std_fraction,
            project=cfg.project_moments,
            fuzzy_moments=cfg.global_fuzzy_moments,
        )
        gfs[fac] = gf
        bands[fac] = global_local_band(cfg, gf, lf_field)
    report = select_best(list(factors), [bands[f] for f in factors], truth)
    return GlobalLocalValidation(L_rve, truth, bands, report, gfs, lf_field)


def band_containment(truth: TruthPBox, band: AlphaCutCDFs) -> dict:
    return {f"{a:g}": containment(truth, band, a) for a in band.alphas}


def fuzzy_summary(vec: FuzzyVector) -> list:
    names = ("mean", "std", "skewness", "excess_kurtosis")
    return [
        {"moment": n, "knots": [{"z": float(z), "mu": float(m)} for z, m in zip(c.z, c.mu)]}
        for n, c in zip(names, vec.components)
    ]
