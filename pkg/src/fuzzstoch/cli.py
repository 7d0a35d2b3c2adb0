"""Command-line driver for the staged pipeline.

Every subcommand reads its inputs from the output directory, writes its
artifacts there and records their SHA-256 checksums in ``manifest.json``.
Failures leave a machine-readable ``error.json`` and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, pipeline
from .errors import ConfigError, FuzzStochError, MissingArtifact, NoRve
from .fuzzy import FuzzyVector, write_alpha_table_csv
from .homog import RveReport, homogenize
from .microdata import (
    FiberMapSpec,
    PhaseModuli,
    ingest_binary_map,
    read_samples_csv,
    write_binary_map,
    write_fiber_map,
    write_samples_csv,
)
from .randfield import fuzzify_moments, write_kl_basis
from .solver import ProblemSpec
from .stats import histogram, mean_correlation, pointwise_moments, write_correlation_csv, write_moments_csv
from .validate import write_containment_json

log = logging.getLogger("fuzzstoch")

MOMENT_NAMES = ("mean", "std", "skewness", "excess_kurtosis")


# ---------------------------------------------------------------------------
# configuration


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (converter, attribute path in the flat mapping)
SCHEMA = {
    "run": {"seed": int, "threads": int},
    "micro": {
        "width": float,
        "height": float,
        "volume_fraction": float,
        "r_min": float,
        "r_max": float,
        "ply_count": int,
        "ply_contrast": float,
        "max_iterations": int,
        "pixel_size": float,
    },
    "moduli": {"a_fiber": float, "a_matrix": float},
    "extract": {"strip_height": float, "element": float},
    "bootstrap": {"M": int, "L": float},
    "fuzzify": {"n_bins": int, "project": _bool},
    "field": {"ell": float, "ell_sweep": _floats, "preserved_std_fraction": float},
    "rve": {"lengths": _floats, "tol": float},
    "problem": {"length": float, "load": float, "load_end": float, "neumann": float, "x0": float},
    "global": {"ell_factor": float, "ell_sweep": _floats, "fuzzy_moments": _bool, "truth_M": int},
    "validate": {"M_s": int, "M_f": int, "N_b": int, "M_tilde": int, "alphas": _floats},
}


def parse_config_text(text: str) -> dict:
    """Typed ``{section: {key: value}}`` mapping; unknown sections or keys are rejected."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keys are case sensitive (M_s, M_tilde)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    out: dict = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                out.setdefault(section, {})[key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc
    return out


def build_config(values: dict | None = None, seed: int | None = None) -> pipeline.RunConfig:
    """Resolve a parsed mapping against the defaults and check ranges."""
    v = values or {}
    d = pipeline.RunConfig()
    g = lambda sec, key, default: v.get(sec, {}).get(key, default)  # noqa: E731
    run_seed = g("run", "seed", d.seed) if seed is None else seed
    try:
        micro = FiberMapSpec(
            width=g("micro", "width", d.micro.width),
            height=g("micro", "height", d.micro.height),
            volume_fraction=g("micro", "volume_fraction", d.micro.volume_fraction),
            radius_range=(g("micro", "r_min", d.micro.radius_range[0]), g("micro", "r_max", d.micro.radius_range[1])),
            seed=run_seed,
            ply_count=g("micro", "ply_count", d.micro.ply_count),
            ply_contrast=g("micro", "ply_contrast", d.micro.ply_contrast),
            max_iterations=g("micro", "max_iterations", d.micro.max_iterations),
        )
        cfg = pipeline.RunConfig(
            seed=run_seed,
            micro=micro,
            pixel_size=g("micro", "pixel_size", d.pixel_size),
            moduli=PhaseModuli(g("moduli", "a_fiber", d.moduli.a_fiber), g("moduli", "a_matrix", d.moduli.a_matrix)),
            strip_height=g("extract", "strip_height", d.strip_height),
            element=g("extract", "element", d.element),
            bootstrap_M=g("bootstrap", "M", d.bootstrap_M),
            bootstrap_L=g("bootstrap", "L", d.bootstrap_L),
            n_bins=g("fuzzify", "n_bins", d.n_bins),
            project_moments=g("fuzzify", "project", d.project_moments),
            ell=g("field", "ell", d.ell),
            ell_sweep=g("field", "ell_sweep", d.ell_sweep),
            preserved_std_fraction=g("field", "preserved_std_fraction", d.preserved_std_fraction),
            rve_lengths=g("rve", "lengths", d.rve_lengths),
            rve_tol=g("rve", "tol", d.rve_tol),
            problem=ProblemSpec(
                length=g("problem", "length", d.problem.length),
                load=g("problem", "load", d.problem.load),
                load_end=g("problem", "load_end", d.problem.load_end),
                neumann=g("problem", "neumann", d.problem.neumann),
                x0=g("problem", "x0", d.problem.x0),
            ),
            global_ell_factor=g("global", "ell_factor", d.global_ell_factor),
            global_ell_sweep=g("global", "ell_sweep", d.global_ell_sweep),
            global_fuzzy_moments=g("global", "fuzzy_moments", d.global_fuzzy_moments),
            global_truth_M=g("global", "truth_M", d.global_truth_M),
            M_s=g("validate", "M_s", d.M_s),
            M_f=g("validate", "M_f", d.M_f),
            N_b=g("validate", "N_b", d.N_b),
            M_tilde=g("validate", "M_tilde", d.M_tilde),
            alphas=g("validate", "alphas", d.alphas),
            threads=g("run", "threads", d.threads),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _check_ranges(cfg)
    return cfg


def _check_ranges(cfg: pipeline.RunConfig) -> None:
    checks = [
        (cfg.bootstrap_M >= 2, "bootstrap.M must be at least 2"),
        (cfg.bootstrap_L > 0, "bootstrap.L must be positive"),
        (cfg.n_bins >= 2, "fuzzify.n_bins must be at least 2"),
        (cfg.ell > 0 and all(e > 0 for e in cfg.ell_sweep) and len(cfg.ell_sweep) > 0, "correlation lengths must be positive"),
        (0 < cfg.preserved_std_fraction <= 1, "field.preserved_std_fraction must lie in (0, 1]"),
        (0 < cfg.rve_tol < 1, "rve.tol must lie in (0, 1)"),
        (len(cfg.rve_lengths) > 0 and all(a < b for a, b in zip(cfg.rve_lengths, cfg.rve_lengths[1:])), "rve.lengths must be ascending"),
        (len(cfg.global_ell_sweep) > 0 and all(f > 0 for f in cfg.global_ell_sweep), "global.ell_sweep must be positive"),
        (cfg.M_s >= 1 and cfg.M_f >= 2, "validate.M_s >= 1 and validate.M_f >= 2 required"),
        (cfg.N_b >= 1 and 1 <= cfg.M_tilde < cfg.bootstrap_M, "need N_b >= 1 and 1 <= M_tilde < bootstrap.M"),
        (cfg.M_tilde < cfg.global_truth_M, "global.truth_M must exceed validate.M_tilde"),
        (all(0 <= a <= 1 for a in cfg.alphas) and 0.0 in cfg.alphas and 1.0 in cfg.alphas, "alphas must lie in [0, 1] and include 0 and 1"),
        (cfg.pixel_size > 0 and cfg.strip_height > 0 and cfg.element > 0, "pixel and element sizes must be positive"),
        (cfg.threads >= 1, "run.threads must be positive"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def load_config(path: str | os.PathLike | None, seed: int | None = None) -> pipeline.RunConfig:
    if path is None:
        return build_config(None, seed)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"configuration file {p} not found")
    return build_config(parse_config_text(p.read_text()), seed)


def config_hash(cfg: pipeline.RunConfig) -> str:
    """Checksum of every setting that can change an artifact (thread count excluded)."""
    d = dataclasses.asdict(cfg)
    d.pop("threads")
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=list).encode()).hexdigest()


# ---------------------------------------------------------------------------
# run context and manifest


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Context:
    def __init__(self, cfg: pipeline.RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = out / "manifest.json"
        self.manifest = self._load_manifest()

    def _load_manifest(self) -> dict:
        fresh = {
            "config_hash": config_hash(self.cfg),
            "seed": self.cfg.seed,
            "versions": {
                "fuzzstoch": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "stages": {},
        }
        if self.manifest_path.is_file():
            old = json.loads(self.manifest_path.read_text())
            if old.get("config_hash") == fresh["config_hash"]:
                fresh["stages"] = old.get("stages", {})
        return fresh

    def path(self, name: str) -> Path:
        return self.out / name

    def require(self, name: str) -> Path:
        p = self.path(name)
        if not p.is_file():
            raise MissingArtifact(f"upstream artifact {name} is missing from {self.out}; run the producing stage first")
        return p

    def record(self, stage: str, inputs: list, outputs: list, seconds: float) -> None:
        self.manifest["stages"][stage] = {
            "inputs": {n: sha256_file(self.path(n)) for n in inputs},
            "outputs": {n: sha256_file(self.path(n)) for n in outputs},
            "seconds": round(seconds, 3),
            "threads": self.cfg.threads,
        }
        _dump_json(self.manifest_path, self.manifest)


# ---------------------------------------------------------------------------
# stages


def _samples(ctx: Context, name: str, provenance: str):
    return read_samples_csv(ctx.require(name), provenance)


def stage_synth(ctx: Context):
    fmap, bmap = pipeline.synth(ctx.cfg)
    write_fiber_map(fmap, ctx.path("fibers.csv"))
    write_binary_map(bmap, ctx.path("micro.bmap"))
    _dump_json(
        ctx.path("synth.json"),
        {
            "n_disks": fmap.n_disks,
            "area_fraction": fmap.area_fraction,
            "raster_fraction": bmap.fiber_fraction,
            "max_overlap_um": fmap.max_overlap(),
        },
    )
    return [], ["fibers.csv", "micro.bmap", "synth.json"]


def stage_extract(ctx: Context):
    bmap = ingest_binary_map(ctx.require("micro.bmap"))
    write_samples_csv(pipeline.extract(ctx.cfg, bmap), ctx.path("samples_extracted.csv"))
    return ["micro.bmap"], ["samples_extracted.csv"]


def stage_bootstrap(ctx: Context):
    src = _samples(ctx, "samples_extracted.csv", "extracted")
    write_samples_csv(pipeline.local_bootstrap(ctx.cfg, src), ctx.path("samples_bootstrap.csv"))
    return ["samples_extracted.csv"], ["samples_bootstrap.csv"]


CORRELATION_WINDOWS = (100.0, 500.0)


def stage_stats(ctx: Context):
    s = _samples(ctx, "samples_bootstrap.csv", "bootstrap")
    write_moments_csv(pointwise_moments(s), ctx.path("moments.csv"))
    outputs = ["moments.csv", "correlation.csv"]
    max_lag = int(round(1000.0 / s.h))
    write_correlation_csv(mean_correlation(s.values, s.h, max_lag), ctx.path("correlation.csv"))
    for H in CORRELATION_WINDOWS:
        if H > s.L:
            continue
        name = f"correlation_H{H:g}.csv"
        eff = homogenize(s.values, s.h, H)
        write_correlation_csv(mean_correlation(eff, s.h, max_lag + int(round(H / s.h))), ctx.path(name))
        outputs.append(name)
    return ["samples_bootstrap.csv"], outputs


def stage_fuzzify(ctx: Context):
    s = _samples(ctx, "samples_bootstrap.csv", "bootstrap")
    m = pointwise_moments(s)
    comps = fuzzify_moments(s, ctx.cfg.n_bins)
    _dump_json(ctx.path("fuzzy_moments.json"), pipeline.fuzzy_summary(FuzzyVector(comps)))
    outputs = ["fuzzy_moments.json"]
    for name, curve, comp in zip(MOMENT_NAMES, (m.mu, m.sigma, m.gamma1, m.gamma2), comps):
        h = histogram(curve[np.isfinite(curve)], ctx.cfg.n_bins)
        hist_name, cut_name = f"histogram_{name}.csv", f"alpha_cuts_{name}.csv"
        with open(ctx.path(hist_name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["edge_lo", "edge_hi", "count"])
            for lo, hi, c in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        write_alpha_table_csv(comp, ctx.cfg.alphas, ctx.path(cut_name))
        outputs += [hist_name, cut_name]
    return ["samples_bootstrap.csv"], outputs


def stage_fit_field(ctx: Context):
    s = _samples(ctx, "samples_bootstrap.csv", "bootstrap")
    f = pipeline.fit_field(ctx.cfg, s)
    write_kl_basis(f.kl, ctx.path("kl_eigenvalues.csv"), ctx.path("kl_phi.bin"))
    with open(ctx.path("beta_params.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "k", "mu", "sigma", "gamma1", "gamma2", "p", "q", "loc", "scale"])
        for a in ctx.cfg.alphas:
            for k, z in enumerate(f.segment_points(a, 11)):
                bp = f.beta_params(z)
                w.writerow([repr(float(a)), k] + [repr(float(v)) for v in (*z, bp.p, bp.q, bp.loc, bp.scale)])
    return ["samples_bootstrap.csv"], ["kl_eigenvalues.csv", "kl_phi.bin", "beta_params.csv"]


def _write_truth(truth, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "lower", "upper"])
        for v, lo, hi in zip(truth.box.grid, truth.box.lower, truth.box.upper):
            w.writerow([repr(float(v)), repr(float(lo)), repr(float(hi))])


def stage_validate_local(ctx: Context):
    s = _samples(ctx, "samples_bootstrap.csv", "bootstrap")
    lv = pipeline.validate_local(ctx.cfg, s)
    lv.best.write_csv(ctx.path("band_local.csv"))
    lv.best.write_samples_csv(ctx.path("qoi_local.csv"))
    _write_truth(lv.truth, ctx.path("truth_local.csv"))
    payload = lv.report.as_dict("ell")
    payload["containment_selected"] = pipeline.band_containment(lv.truth, lv.best)
    payload["M_s"], payload["M_f"] = ctx.cfg.M_s, ctx.cfg.M_f
    write_containment_json(ctx.path("containment_local.json"), payload)
    return ["samples_bootstrap.csv"], ["band_local.csv", "qoi_local.csv", "truth_local.csv", "containment_local.json"]


def stage_rve(ctx: Context):
    src = _samples(ctx, "samples_extracted.csv", "extracted")
    report, _ = pipeline.rve(ctx.cfg, src)
    report.write_csv(ctx.path("rve.csv"))
    ctx.path("rve.json").write_text(report.to_json() + "\n")
    return ["samples_extracted.csv"], ["rve.csv", "rve.json"]


def stage_global_local(ctx: Context):
    src = _samples(ctx, "samples_extracted.csv", "extracted")
    rdoc = json.loads(ctx.require("rve.json").read_text())
    report = RveReport(np.array(rdoc["lengths_um"]), np.array(rdoc["epsilon"]), rdoc["tol"], rdoc["L_rve_um"])
    if report.L_rve is None:
        raise NoRve("no RVE length passed the tolerance; global-local validation needs one", report)
    ell_local = json.loads(ctx.require("containment_local.json").read_text())["selected_ell"]
    rve_set = pipeline.rve_samples(ctx.cfg, src)
    gv = pipeline.validate_global_local(ctx.cfg, src, report, rve_set, ell_local)
    gv.best.write_csv(ctx.path("band_global_local.csv"))
    gv.best.write_samples_csv(ctx.path("qoi_global_local.csv"))
    _write_truth(gv.truth, ctx.path("truth_global_local.csv"))
    payload = gv.report.as_dict("ell_factor")
    payload["containment_selected"] = pipeline.band_containment(gv.truth, gv.best)
    payload["L_rve_um"] = gv.L_rve
    payload["ell_local_um"] = float(ell_local)
    payload["selected_ell_um"] = gv.report.selected * gv.L_rve
    write_containment_json(ctx.path("containment_global_local.json"), payload)
    inputs = ["samples_extracted.csv", "rve.json", "containment_local.json"]
    outputs = ["band_global_local.csv", "qoi_global_local.csv", "truth_global_local.csv", "containment_global_local.json"]
    return inputs, outputs


STAGES = {
    "synth": stage_synth,
    "extract": stage_extract,
    "bootstrap": stage_bootstrap,
    "stats": stage_stats,
    "fuzzify": stage_fuzzify,
    "fit_field": stage_fit_field,
    "validate_local": stage_validate_local,
    "rve": stage_rve,
    "global_local": stage_global_local,
}


def run_stage(ctx: Context, name: str) -> None:
    t0 = time.perf_counter()
    inputs, outputs = STAGES[name](ctx)
    dt = time.perf_counter() - t0
    ctx.record(name, inputs, outputs, dt)
    log.info("%s: %d artifacts in %.1f s", name, len(outputs), dt)


# ---------------------------------------------------------------------------
# entry point


def _threads(arg: int | None, cfg_threads: int) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("FUZZSTOCH_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"FUZZSTOCH_THREADS must be an integer, got {env!r}") from exc
    return cfg_threads


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuzzstoch", description="Fuzzy-stochastic multiscale pipeline")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--out", default="out", help="artifact directory (default: out)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help="worker threads (default: FUZZSTOCH_THREADS or config)")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=f"run the {name} stage")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    out = Path(args.out)
    try:
        cfg = load_config(args.config, args.seed)
        cfg = dataclasses.replace(cfg, threads=_threads(args.threads, cfg.threads))
        if cfg.threads < 1:
            raise ConfigError("thread count must be positive")
        ctx = Context(cfg, out)
        err = ctx.path("error.json")
        if err.exists():
            err.unlink()
        names = list(STAGES) if args.command == "run" else [args.command]
        for name in names:
            run_stage(ctx, name)
    except (FuzzStochError, ValueError, ArithmeticError, OSError) as exc:
        out.mkdir(parents=True, exist_ok=True)
        _dump_json(out / "error.json", {"command": args.command, "error": type(exc).__name__, "message": str(exc)})
        log.error("%s failed: %s: %s", args.command, type(exc).__name__, exc)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
