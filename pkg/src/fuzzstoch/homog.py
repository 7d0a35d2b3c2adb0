"""Moving-window homogenization of compliance samples and RVE length selection."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NoRve, WindowTooLarge
from .microdata import SampleSet, n_cells

DEFAULT_RVE_CANDIDATES = (1e2, 1e3, 5e3, 1e4, 2e4, 5e4)


def window_cells(H: float, h: float) -> int:
    return n_cells(H, h)


def homogenize(values, h: float, H: float) -> np.ndarray:
    """Centered moving average of ``b`` over ``H / h`` elements.

    Element ``j`` averages elements ``j - (w-1)//2 .. j + w//2``; windows are
    cut off at the sample ends. Averaging the compliance equals taking the
    harmonic mean of the modulus.
    """
    b = np.asarray(values, dtype=float)
    one_d = b.ndim == 1
    b = np.atleast_2d(b)
    n = b.shape[1]
    w = window_cells(H, h)
    if w > n:
        raise WindowTooLarge(f"window of {w} elements exceeds sample length {n}")
    if w == 1:
        out = b.copy()
    else:
        cs = np.concatenate([np.zeros((b.shape[0], 1)), np.cumsum(b, axis=1)], axis=1)
        j = np.arange(n)
        lo = np.maximum(j - (w - 1) // 2, 0)
        hi = np.minimum(j + w // 2, n - 1) + 1
        out = (cs[:, hi] - cs[:, lo]) / (hi - lo)
    return out[0] if one_d else out


def homogenize_samples(s: SampleSet, H: float) -> SampleSet:
    return SampleSet(h=s.h, values=homogenize(s.values, s.h, H), provenance=f"homogenized({H:g})", x=s.x)


@dataclass
class RveReport:
    lengths: np.ndarray
    epsilon: np.ndarray
    tol: float
    L_rve: float | None
    mean_effective: np.ndarray = field(default=None)

    def to_json(self) -> str:
        return json.dumps(
            {
                "L_rve_um": None if self.L_rve is None else float(self.L_rve),
                "tol": float(self.tol),
                "lengths_um": [float(v) for v in self.lengths],
                "epsilon": [float(v) for v in self.epsilon],
            },
            indent=2,
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["L_um", "epsilon"])
            for L, e in zip(self.lengths, self.epsilon):
                w.writerow([repr(float(L)), repr(float(e))])


def relative_scatter(values: np.ndarray) -> float:
    """Mean over x of the across-sample std divided by the mean over x of the mean."""
    mu = values.mean(axis=0)
    sd = values.std(axis=0)
    return float(sd.mean() / mu.mean())


def rve_length(s: SampleSet, lengths=DEFAULT_RVE_CANDIDATES, tol: float = 0.05, strict: bool = False) -> RveReport:
    """Smallest homogenization length whose effective parameter scatter is within ``tol``.

    When no candidate passes the report has ``L_rve = None``; ``strict``
    raises ``NoRve`` carrying that report instead.
    """
    lengths = np.asarray(lengths, dtype=float)
    if lengths.size == 0 or np.any(np.diff(lengths) <= 0):
        raise ValueError("candidate lengths must be nonempty and strictly ascending")
    if lengths[-1] > s.L + 1e-9:
        raise WindowTooLarge(f"candidate {lengths[-1]:g} um exceeds sample length {s.L:g} um")
    eps = np.array([relative_scatter(homogenize(s.values, s.h, L)) for L in lengths])
    passing = np.flatnonzero(eps <= tol)
    L_rve = float(lengths[passing[0]]) if passing.size else None
    report = RveReport(lengths, eps, tol, L_rve)
    if L_rve is None and strict:
        raise NoRve(f"no candidate length reaches tolerance {tol}", report)
    return report
