"""Two-phase fiber cross sections and the 1D coefficient samples cut from them.

Lengths are in micrometres, moduli in GPa and compliances ``b = 1/a`` in
GPa^-1 throughout.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, FormatError, LabelError, PackingFailure

BMAP_MAGIC = b"FSM1"
_BMAP_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class PhaseModuli:
    a_fiber: float = 24.0
    a_matrix: float = 3.6

    def __post_init__(self):
        if not (self.a_fiber > 0 and self.a_matrix > 0):
            raise ValueError("phase moduli must be strictly positive")
        if not self.a_fiber > self.a_matrix:
            raise ValueError("fiber modulus must exceed matrix modulus")

    @property
    def b_range(self) -> tuple[float, float]:
        return 1.0 / self.a_fiber, 1.0 / self.a_matrix


@dataclass(frozen=True)
class FiberMapSpec:
    """Inputs of the synthetic packing generator.

    ``ply_count`` and ``ply_contrast`` impose a smooth through-thickness
    variation of the local fiber fraction, ``vf(y) = vf * (1 + c cos(2 pi y
    ply_count / height))`` with ``c = ply_contrast / vf``, mimicking resin-rich
    layers between plies. ``ply_contrast = 0`` gives a homogeneous packing.
    """

    width: float = 1700.0
    height: float = 500.0
    volume_fraction: float = 0.63
    radius_range: tuple[float, float] = (2.0, 5.0)
    seed: int = 7
    ply_count: int = 4
    ply_contrast: float = 0.095
    overlap_tolerance: float = 0.0
    max_iterations: int = 6000

    def __post_init__(self):
        if not 0 < self.volume_fraction <= 0.64:
            raise ValueError("volume_fraction must lie in (0, 0.64]")
        r_lo, r_hi = self.radius_range
        if not (2.0 <= r_lo <= r_hi <= 5.0):
            raise ValueError("radius_range must lie within [2, 5] um")
        if min(self.width, self.height) < 2 * r_hi:
            raise ValueError("domain too small for the largest disk")
        if self.max_iterations < 1 or self.ply_count < 0 or self.ply_contrast < 0:
            raise ValueError("max_iterations must be positive and ply settings nonnegative")


@dataclass
class FiberMap:
    domain_width: float
    domain_height: float
    disks: np.ndarray  # (n, 3): center_x, center_y, radius
    target_volume_fraction: float

    def __post_init__(self):
        self.disks = np.asarray(self.disks, dtype=float).reshape(-1, 3)

    @property
    def n_disks(self) -> int:
        return len(self.disks)

    @property
    def area_fraction(self) -> float:
        r = self.disks[:, 2]
        return float(np.pi * np.sum(r * r) / (self.domain_width * self.domain_height))

    def max_overlap(self) -> float:
        """Largest pairwise overlap depth (negative when all disks are apart)."""
        if self.n_disks < 2:
            return -np.inf
        xy, r = self.disks[:, :2], self.disks[:, 2]
        pairs = cKDTree(xy).query_pairs(2 * r.max(), output_type="ndarray")
        if len(pairs) == 0:
            return -np.inf
        i, j = pairs[:, 0], pairs[:, 1]
        dist = np.hypot(*(xy[i] - xy[j]).T)
        return float(np.max(r[i] + r[j] - dist))

    def validate(self, radius_range=(2.0, 5.0), overlap_tolerance=0.0):
        r = self.disks[:, 2]
        lo, hi = radius_range
        if np.any(r < lo) or np.any(r > hi):
            raise ValueError("disk radius outside the admissible range")
        x, y = self.disks[:, 0], self.disks[:, 1]
        if np.any(x < 0) or np.any(x > self.domain_width) or np.any(y < 0) or np.any(y > self.domain_height):
            raise ValueError("disk center outside the domain")
        if self.max_overlap() > overlap_tolerance:
            raise ValueError("disks overlap beyond tolerance")


@dataclass
class BinaryMap:
    width_px: int
    height_px: int
    pixel_size: float
    phases: np.ndarray  # (height_px, width_px) uint8, row-major, 1 = fiber

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=np.uint8)
        if self.phases.shape != (self.height_px, self.width_px):
            raise DimensionMismatch(
                f"phase grid shape {self.phases.shape} != ({self.height_px}, {self.width_px})"
            )
        if self.phases.size and self.phases.max() > 1:
            raise LabelError("phase labels must be 0 or 1")

    @property
    def fiber_fraction(self) -> float:
        return float(self.phases.mean())


@dataclass
class SampleSet:
    """``M`` one-dimensional samples of ``b`` on a cell-centred grid of spacing ``h``.

    Grid point ``j`` is the centre ``(j + 1/2) h`` of the ``j``-th element; the
    samples are element-wise constant over ``[0, L]``.
    """

    h: float
    values: np.ndarray  # (M, N_x)
    provenance: str = "extracted"
    x: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.x is None:
            self.x = cell_centers(self.n_points, self.h)
        self.x = np.asarray(self.x, dtype=float)
        if self.x.shape != (self.n_points,):
            raise DimensionMismatch("grid length does not match sample length")
        if np.any(~(self.values > 0)):
            raise ValueError("coefficient samples must be strictly positive")

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    @property
    def L(self) -> float:
        return self.n_points * self.h


def cell_centers(n: int, h: float, start: float = 0.0) -> np.ndarray:
    return start + (np.arange(n) + 0.5) * h


def n_cells(length: float, h: float) -> int:
    n = length / h
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise DimensionMismatch(f"length {length} is not a positive multiple of {h}")
    return k


# ---------------------------------------------------------------------------
# generation


def _radii(rng, target_area, r_lo, r_hi):
    radii = []
    area = 0.0
    while area < target_area:
        r = rng.uniform(r_lo, r_hi)
        radii.append(r)
        area += math.pi * r * r
    # retune the last radius so the analytic fraction lands on target
    rest = target_area - (area - math.pi * radii[-1] ** 2)
    radii[-1] = min(max(math.sqrt(max(rest, 0.0) / math.pi), r_lo), r_hi)
    return np.array(radii)


def _initial_positions(rng, n, spec: FiberMapSpec):
    W, H = spec.width, spec.height
    ny = max(1, int(round(math.sqrt(n * H / W))))
    nx = int(math.ceil(n / ny))
    cells = rng.permutation(nx * ny)[:n]
    u = (cells % nx + rng.uniform(0.0, 1.0, n)) / nx
    v = (cells // nx + rng.uniform(0.0, 1.0, n)) / ny
    if spec.ply_contrast > 0:
        c = spec.ply_contrast / spec.volume_fraction
        yg = np.linspace(0.0, H, 4001)
        dens = 1.0 + c * np.cos(2 * np.pi * spec.ply_count * yg / H)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]))])
        y = np.interp(v, cdf / cdf[-1], yg)
    else:
        y = v * H
    return np.column_stack([u * W, y])


def generate_microstructure(spec: FiberMapSpec = FiberMapSpec()) -> FiberMap:
    """Pack non-overlapping disks to the requested area fraction.

    Disks start on a jittered lattice with slightly shrunk radii; overlapping
    pairs are then pushed apart along their center line while the radii grow
    back to full size. Raises ``PackingFailure`` if overlaps persist after
    ``spec.max_iterations`` sweeps.
    """
    r_lo, r_hi = spec.radius_range
    W, H = spec.width, spec.height

    rng = np.random.Generator(np.random.Philox(spec.seed))
    r = _radii(rng, spec.volume_fraction * W * H, r_lo, r_hi)
    pos = _initial_positions(rng, len(r), spec)
    tol = spec.overlap_tolerance

    grow_steps = 200
    for it in range(spec.max_iterations):
        s = min(1.0, 0.85 + 0.15 * it / grow_steps)
        rr = r * s
        np.clip(pos[:, 0], rr, W - rr, out=pos[:, 0])
        np.clip(pos[:, 1], rr, H - rr, out=pos[:, 1])
        if len(r) < 2:
            break
        pairs = cKDTree(pos).query_pairs(2 * r_hi * s, output_type="ndarray")
        if len(pairs) == 0:
            if s == 1.0:
                break
            continue
        i, j = pairs[:, 0], pairs[:, 1]
        d = pos[j] - pos[i]
        dist = np.hypot(d[:, 0], d[:, 1])
        ov = rr[i] + rr[j] - dist
        hit = ov > (tol if s == 1.0 else 0.0)
        if s == 1.0 and not hit.any():
            break
        i, j, d, dist, ov = i[hit], j[hit], d[hit], dist[hit], ov[hit]
        # coincident centers get an arbitrary but deterministic direction
        unit = np.where(dist[:, None] > 1e-12, d / np.maximum(dist, 1e-12)[:, None], [1.0, 0.0])
        push = (1.02 * ov + 2e-6)[:, None] * unit
        wi = (rr[j] ** 2 / (rr[i] ** 2 + rr[j] ** 2))[:, None]
        disp = np.zeros_like(pos)
        np.add.at(disp, i, -push * wi)
        np.add.at(disp, j, push * (1.0 - wi))
        pos += disp
    else:
        raise PackingFailure(
            f"overlaps remain after {spec.max_iterations} relaxation sweeps "
            f"(n={len(r)}, vf={spec.volume_fraction})"
        )

    return FiberMap(W, H, np.column_stack([pos, r]), spec.volume_fraction)


def rasterize(fmap: FiberMap, pixel_size: float = 1.0) -> BinaryMap:
    """Label a pixel as fiber iff its center lies inside some disk."""
    if not pixel_size > 0:
        raise ValueError("pixel_size must be positive")
    nx = int(round(fmap.domain_width / pixel_size))
    ny = int(round(fmap.domain_height / pixel_size))
    phases = np.zeros((ny, nx), dtype=np.uint8)
    for cx, cy, r in fmap.disks:
        i0 = max(0, int(math.floor((cx - r) / pixel_size - 0.5)))
        i1 = min(nx, int(math.ceil((cx + r) / pixel_size + 0.5)))
        j0 = max(0, int(math.floor((cy - r) / pixel_size - 0.5)))
        j1 = min(ny, int(math.ceil((cy + r) / pixel_size + 0.5)))
        if i0 >= i1 or j0 >= j1:
            continue
        px = (np.arange(i0, i1) + 0.5) * pixel_size - cx
        py = (np.arange(j0, j1) + 0.5) * pixel_size - cy
        inside = px[None, :] ** 2 + py[:, None] ** 2 <= r * r
        phases[j0:j1, i0:i1] |= inside.astype(np.uint8)
    return BinaryMap(nx, ny, pixel_size, phases)


def extract_1d_samples(
    bmap: BinaryMap,
    moduli: PhaseModuli = PhaseModuli(),
    strip_height: float = 10.0,
    element: float = 10.0,
) -> SampleSet:
    """Cut the map into horizontal strips and average each square element.

    The element modulus is the harmonic mean of the pixel moduli, so the
    stored compliance is the arithmetic mean of the pixel compliances.
    """
    sh = strip_height / bmap.pixel_size
    el = element / bmap.pixel_size
    ksh, kel = int(round(sh)), int(round(el))
    if (
        abs(sh - ksh) > 1e-9
        or abs(el - kel) > 1e-9
        or ksh < 1
        or kel < 1
        or bmap.height_px % ksh
        or bmap.width_px % kel
    ):
        raise DimensionMismatch(
            f"{bmap.height_px}x{bmap.width_px} px map cannot be tiled by "
            f"{strip_height} um strips and {element} um elements"
        )
    b_fiber, b_matrix = moduli.b_range
    b_pix = np.where(bmap.phases == 1, b_fiber, b_matrix)
    M, N = bmap.height_px // ksh, bmap.width_px // kel
    values = b_pix.reshape(M, ksh, N, kel).mean(axis=(1, 3))
    return SampleSet(h=element, values=values, provenance="extracted")


def bootstrap(src: SampleSet, M_out: int, L_out: float, seed: int) -> SampleSet:
    """Concatenate randomly drawn source samples up to length ``L_out``.

    Each output sample joins ``ceil(L_out / src.L)`` source samples drawn
    uniformly with replacement, in draw order, and drops the trailing excess.
    """
    if src.provenance != "extracted":
        raise ValueError("bootstrap expects extracted samples")
    if L_out < src.L - 1e-9:
        raise ValueError("L_out must not be shorter than the source samples")
    n_out = n_cells(L_out, src.h)
    n_seg = math.ceil(n_out / src.n_points)
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.integers(0, src.M, size=(M_out, n_seg))
    values = src.values[draws].reshape(M_out, n_seg * src.n_points)[:, :n_out]
    return SampleSet(h=src.h, values=values, provenance="bootstrap")


# ---------------------------------------------------------------------------
# file formats


def write_binary_map(bmap: BinaryMap, path) -> None:
    pixel_nm = int(round(bmap.pixel_size * 1000))
    with open(path, "wb") as fh:
        fh.write(_BMAP_HEADER.pack(BMAP_MAGIC, bmap.width_px, bmap.height_px, pixel_nm))
        fh.write(np.ascontiguousarray(bmap.phases, dtype=np.uint8).tobytes())


def ingest_binary_map(path) -> BinaryMap:
    data = Path(path).read_bytes()
    if len(data) < _BMAP_HEADER.size:
        raise FormatError("file shorter than the BMAP header")
    magic, w, h, pixel_nm = _BMAP_HEADER.unpack_from(data)
    if magic != BMAP_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    payload = data[_BMAP_HEADER.size :]
    if len(payload) != w * h:
        raise FormatError(f"payload has {len(payload)} bytes, expected {w * h}")
    if pixel_nm == 0:
        raise FormatError("pixel size must be positive")
    phases = np.frombuffer(payload, dtype=np.uint8).reshape(h, w)
    if phases.size and phases.max() > 1:
        raise LabelError("labels must be 0 or 1")
    return BinaryMap(w, h, pixel_nm / 1000.0, phases.copy())


def write_fiber_map(fmap: FiberMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["center_x_um", "center_y_um", "radius_um"])
        for row in fmap.disks:
            w.writerow([repr(float(v)) for v in row])


def read_fiber_map(path, width: float, height: float, target: float) -> FiberMap:
    disks = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return FiberMap(width, height, disks, target)


def write_samples_csv(s: SampleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_um"] + [f"b_{m + 1}" for m in range(s.M)])
        for j in range(s.n_points):
            w.writerow([repr(float(s.x[j]))] + [repr(float(v)) for v in s.values[:, j]])


def read_samples_csv(path, provenance: str = "extracted") -> SampleSet:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x = table[:, 0]
    h = float(x[1] - x[0]) if len(x) > 1 else 2.0 * float(x[0])
    return SampleSet(h=h, values=table[:, 1:].T.copy(), provenance=provenance, x=x)
