"""Dispersal kernels: continuum specs, lattice discretisation, 1D marginals.

A kernel is a compactly supported probability density on the plane that
is invariant under reflection in either axis.  ``discretize`` turns a
spec into masses on the lattice with spacing 1/L by integrating the
density over the half-open cell around each lattice point; the result
is symmetrised exactly and renormalised, so the symmetry and total-mass
invariants hold bit for bit, not just approximately.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("uniform-square", "truncated-gaussian", "table")

# 1e-9: continuum normalisation check; 1e-12: discrete mass-sum invariant.
NORM_TOL = 1e-9
MASS_TOL = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Continuum kernel description.

    families:
      uniform-square(radius)            density 1/(2r)^2 on [-r, r]^2
      truncated-gaussian(sigma, cutoff) radial gaussian restricted to the
                                        disk |x| <= cutoff, renormalised
      table(entries)                    explicit (dx, dy, mass) atoms
    """

    family: str
    params: dict = field(default_factory=dict)

    def support_radius(self) -> float:
        """Largest |x| (sup-norm free: Euclidean) carrying density."""
        if self.family == "uniform-square":
            return self.params["radius"] * math.sqrt(2.0)
        if self.family == "truncated-gaussian":
            return self.params["cutoff"]
        entries = self.params["entries"]
        return max(math.hypot(dx, dy) for dx, dy, _ in entries)

    def to_json(self) -> str:
        return json.dumps({"family": self.family, "params": self.params},
                          sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "KernelSpec":
        data = json.loads(text)
        params = dict(data["params"])
        if "entries" in params:
            params["entries"] = [tuple(e) for e in params["entries"]]
        return build_kernel(KernelSpec(data["family"], params))


def build_kernel(spec: KernelSpec) -> KernelSpec:
    """Validate a spec: positive finite parameters, exact reflection
    symmetry, unit total mass within ``NORM_TOL``."""
    if spec.family not in FAMILIES:
        raise ValueError(f"unknown kernel family {spec.family!r}")
    p = spec.params
    if spec.family == "uniform-square":
        r = p.get("radius")
        _require_positive("radius", r)
    elif spec.family == "truncated-gaussian":
        _require_positive("sigma", p.get("sigma"))
        _require_positive("cutoff", p.get("cutoff"))
    else:
        entries = p.get("entries")
        if not entries:
            raise ValueError("table kernel needs at least one entry")
        entries = [(float(dx), float(dy), float(m)) for dx, dy, m in entries]
        total = math.fsum(m for _, _, m in entries)
        if any(m < 0 for _, _, m in entries):
            raise ValueError("table masses must be nonnegative")
        if abs(total - 1.0) > NORM_TOL:
            raise ValueError(f"table masses sum to {total}, expected 1")
        atlas = {(dx, dy): m for dx, dy, m in entries}
        for (dx, dy), m in atlas.items():
            for ref in ((-dx, dy), (dx, -dy)):
                if abs(atlas.get(ref, 0.0) - m) > NORM_TOL:
                    raise ValueError(
                        f"table not reflection-symmetric at offset ({dx}, {dy})")
        p = dict(p, entries=sorted(entries))
    return KernelSpec(spec.family, p)


def _require_positive(name, value):
    if value is None or not math.isfinite(value) or value <= 0:
        raise ValueError(f"kernel parameter {name!r} must be positive and finite")


def density(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Continuum density (analytic families only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.family == "uniform-square":
        r = spec.params["radius"]
        inside = (np.abs(x) <= r) & (np.abs(y) <= r)
        return inside / (4.0 * r * r)
    if spec.family == "truncated-gaussian":
        sig = spec.params["sigma"]
        cut = spec.params["cutoff"]
        # mass of the untruncated gaussian inside the cutoff disk
        inside_mass = 1.0 - math.exp(-cut * cut / (2.0 * sig * sig))
        norm = 1.0 / (2.0 * math.pi * sig * sig * inside_mass)
        r2 = x * x + y * y
        vals = norm * np.exp(-r2 / (2.0 * sig * sig))
        return np.where(r2 <= cut * cut, vals, 0.0)
    raise ValueError("table kernels have no continuum density")


@dataclass
class DiscreteKernel:
    """Probability masses on lattice offsets at spacing 1/L.

    offsets are integer multiples of 1/L, stored lexicographically so
    the sampling CDF has a canonical order.  support_diameter is the
    max pairwise distance between offsets of nonzero mass, which by the
    point symmetry of the support equals 2 max |w|.
    """

    L: int
    offsets: np.ndarray   # (n, 2) int64, lattice steps
    masses: np.ndarray    # (n,) float64, sums to 1 within MASS_TOL
    support_diameter: float

    def __post_init__(self):
        self._cdf = np.cumsum(self.masses)

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def points(self) -> np.ndarray:
        """Offsets in continuum coordinates."""
        return self.offsets / float(self.L)

    def sample_indices(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0,1) to rows of ``offsets`` by inverse CDF."""
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, len(self.masses) - 1)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("dx,dy,mass\n")
            inv_l = 1.0 / self.L
            for (i, j), m in zip(self.offsets, self.masses):
                fh.write(f"{float(i * inv_l)!r},{float(j * inv_l)!r},{float(m)!r}\n")


def _interval_overlap(lo1, hi1, lo2, hi2):
    return np.maximum(0.0, np.minimum(hi1, hi2) - np.maximum(lo1, lo2))


def discretize(spec: KernelSpec, L: int) -> DiscreteKernel:
    """Integrate the density over half-open cells [w - 1/2L, w + 1/2L)
    around each lattice point w (ties toward the cell whose lower edge
    the point sits on), then symmetrise and renormalise exactly.

    Uniform squares use exact cell-overlap areas; the gaussian uses a
    4x4 midpoint rule per cell; tables bin their atoms to nearest cell.
    """
    spec = build_kernel(spec)
    if L < 1 or int(L) != L:
        raise ValueError("L must be a positive integer")
    L = int(L)
    h = 1.0 / L

    if spec.family == "uniform-square":
        r = spec.params["radius"]
        imax = int(math.floor(r * L + 0.5))
        idx = np.arange(-imax, imax + 1)
        centers = idx * h
        ov = _interval_overlap(centers - h / 2, centers + h / 2, -r, r) / (2 * r)
        keep = ov > 0
        idx, ov = idx[keep], ov[keep]
        ii, jj = np.meshgrid(idx, idx, indexing="ij")
        grid = np.outer(ov, ov)
    elif spec.family == "truncated-gaussian":
        cut = spec.params["cutoff"]
        imax = int(math.floor(cut * L + 0.5))
        idx = np.arange(-imax, imax + 1)
        # midpoint rule, 4x4 subcells
        sub = (np.arange(4) + 0.5) / 4.0 - 0.5
        xs = idx[:, None] * h + sub[None, :] * h
        pts = xs.reshape(-1)
        px, py = np.meshgrid(pts, pts, indexing="ij")
        vals = density(spec, px, py)
        n = len(idx)
        grid = vals.reshape(n, 4, n, 4).sum(axis=(1, 3)) * (h / 4.0) ** 2
        ii, jj = np.meshgrid(idx, idx, indexing="ij")
    else:
        atoms = {}
        for dx, dy, m in spec.params["entries"]:
            i = int(math.floor(dx * L + 0.5))
            j = int(math.floor(dy * L + 0.5))
            atoms[(i, j)] = atoms.get((i, j), 0.0) + m
        keys = sorted(atoms)
        ii = np.array([k[0] for k in keys], dtype=np.int64)
        jj = np.array([k[1] for k in keys], dtype=np.int64)
        grid = np.array([atoms[k] for k in keys])

    offsets = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.int64)
    masses = grid.ravel().astype(float)
    keep = masses > 0
    offsets, masses = offsets[keep], masses[keep]

    # exact symmetrisation: average the four reflections of every offset
    table = {(int(i), int(j)): m for (i, j), m in zip(offsets, masses)}
    sym = {}
    for (i, j) in table:
        refs = [(i, j), (-i, j), (i, -j), (-i, -j)]
        sym[(i, j)] = math.fsum(table.get(rf, 0.0) for rf in refs) / 4.0
    keys = sorted(sym)
    offsets = np.array(keys, dtype=np.int64).reshape(-1, 2)
    masses = np.array([sym[k] for k in keys])
    masses = masses / masses.sum()

    norms = np.hypot(offsets[:, 0], offsets[:, 1]) * h
    diameter = 2.0 * float(norms.max()) if len(norms) else 0.0
    return DiscreteKernel(L=L, offsets=offsets, masses=masses,
                          support_diameter=diameter)


@dataclass
class Kernel1D:
    """Even probability masses on the 1D grid m * delta."""

    delta: float
    masses: np.ndarray  # odd length, centered

    @property
    def halfwidth(self) -> int:
        return (len(self.masses) - 1) // 2


def unit_direction(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    n = float(np.hypot(xi[0], xi[1]))
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit vector, |xi| = {n}")
    return xi / n


def marginal_1d(dk: DiscreteKernel, xi, delta: float) -> Kernel1D:
    """Line marginal of dk along the unit direction xi, binned to the
    grid m*delta with half-open bins, then symmetrised exactly."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    xi = unit_direction(xi)
    proj = (dk.offsets @ xi) / dk.L
    bins = np.floor(proj / delta + 0.5).astype(np.int64)
    hw = int(np.max(np.abs(bins))) if len(bins) else 0
    masses = np.zeros(2 * hw + 1)
    np.add.at(masses, bins + hw, dk.masses)
    masses = 0.5 * (masses + masses[::-1])   # exact evenness
    return Kernel1D(delta=float(delta), masses=masses)


def sample_offset(dk: DiscreteKernel, rng: np.random.Generator, size=None):
    """Draw offsets (continuum coordinates) from dk's masses."""
    u = rng.random(size if size is not None else 1)
    idx = dk.sample_indices(np.atleast_1d(u))
    pts = dk.offsets[idx] / float(dk.L)
    return pts if size is not None else pts[0]
