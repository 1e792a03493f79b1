"""Reproducible experiment harnesses across the whole stack.

Every harness is deterministic given (config, seed list): all coins
come from the counter-based streams keyed by seed and step, so runs at
different beta on the same seed are automatically monotonically
coupled, and re-runs are bit-identical at any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from . import comparison, lattice
from .ide import Field2D, evolve
from .kernel import KernelSpec, build_kernel, discretize
from .mean_field import Params, equilibria
from .rng import LatticeRng
from .wavespeed import PhiData


def parallel_map(fn, items, threads: int = 1):
    """Order-preserving map; results independent of the worker count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ExperimentConfig:
    beta: float = 1.0
    eta: float = 0.05
    kernel: KernelSpec = field(
        default_factory=lambda: KernelSpec("uniform-square", {"radius": 1.0}))
    L_list: tuple = (50, 100, 200, 400)
    gamma: float = 0.3
    W: float = 4.0
    steps: int = 5
    horizon: int = 500
    K: float = 1.0
    block_N: int = 30
    delta: float | None = None
    seeds: tuple = (1, 2, 3, 4, 5)
    beta_grid: tuple = ()
    eta_grid: tuple = ()
    phase_L: int = 10
    phase_W: float = 8.0
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma < 0.5:
            raise ValueError("gamma must lie in (0, 1/2)")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")

    @property
    def params(self) -> Params:
        return Params(self.beta, self.eta)


def _field_values(u0, xs, ys):
    if isinstance(u0, Field2D):
        fx = np.clip(np.round((xs - u0.x0) / u0.h).astype(int), 0, u0.nx - 1)
        fy = np.clip(np.round((ys - u0.y0) / u0.h).astype(int), 0, u0.ny - 1)
        return u0.values[np.ix_(fx, fy)]
    if callable(u0):
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.asarray(u0(gx, gy), dtype=float)
    return np.full((len(xs), len(ys)), float(u0))


def hydro_convergence(cfg: ExperimentConfig, u0) -> list:
    """Box-density error between the particle system and the density
    recursion after cfg.steps steps, per L and seed.

    u0 may be a constant, a vectorized callable (x, y) -> density, or a
    Field2D to resample.  Returns rows with sup-box errors for the
    particle count S/m against u_n and the pair count R/m against
    u_n^2.
    """
    spec = build_kernel(cfg.kernel)
    p = cfg.params
    rows = []
    for L in cfg.L_list:
        dk = discretize(spec, L)
        side = int(round(cfg.W * L))
        xs = np.arange(side) / L
        vals = _field_values(u0, xs, xs)
        u_field = Field2D(0.0, 0.0, 1.0 / L, vals, boundary="periodic")
        u_n = evolve(u_field, dk, p, cfg.steps, method="auto")[-1]

        def one_seed(seed, L=L, dk=dk, side=side, u_field=u_field, u_n=u_n):
            rng = LatticeRng(seed)
            state = lattice.init("from_field", L, side=side, rng=rng,
                                 field=u_field)
            for _ in range(cfg.steps):
                state, _ = lattice.step(state, dk, p, rng, anchor="site")
            stats = lattice.box_stats(state, cfg.gamma)
            b, nb = stats.b, stats.nb
            corners = u_n.values[0:nb * b:b, 0:nb * b:b]
            s_err = float(np.max(np.abs(stats.density() - corners)))
            r_err = float(np.max(np.abs(stats.R / stats.m - corners ** 2)))
            return {"L": L, "seed": seed, "n": cfg.steps,
                    "sup_S_err": s_err, "sup_R_err": r_err,
                    "boxes": int(nb * nb), "m": int(stats.m)}

        rows.extend(parallel_map(one_seed, cfg.seeds, cfg.threads))
    return rows


def block_goodness(cfg: ExperimentConfig) -> dict:
    """Estimate the probability that goodness of the center block
    propagates to both horizontal neighbor blocks after block_N steps.

    A block is good when every box fully inside it has density at least
    rho_u + 2 delta.  The initial state is supercritical product
    measure inside the center block and empty outside.
    """
    p = cfg.params
    eq = equilibria(p)
    if eq.rho_u is None:
        raise ValueError("block construction needs bistable parameters")
    delta = cfg.delta if cfg.delta is not None else (eq.rho_s - eq.rho_u) / 8.0
    if not eq.rho_s - 2 * delta > eq.rho_u + 2 * delta:
        raise ValueError("delta too large: need rho_s - 2d > rho_u + 2d")
    L = cfg.L_list[0]
    dk = discretize(build_kernel(cfg.kernel), L)
    side = int(round(cfg.W * L))
    mid = 0.5 * cfg.W
    K, N = cfg.K, cfg.block_N
    if mid - 3 * K < 0 or mid + 3 * K > cfg.W:
        raise ValueError("window too small for the three blocks")
    p0 = min(0.95, eq.rho_u + 2 * delta + 0.1)

    def block_boxes(stats, center_x):
        lo_x, hi_x = center_x - K, center_x + K
        lo_y, hi_y = mid - K, mid + K
        w = stats.b / stats.L
        sel = []
        for bi in range(stats.nb):
            for bj in range(stats.nb):
                x0, y0, x1, y1 = stats.box_rect(bi, bj)
                if x0 >= lo_x - 1e-9 and x1 <= hi_x + 1e-9 \
                        and y0 >= lo_y - 1e-9 and y1 <= hi_y + 1e-9:
                    sel.append((bi, bj))
        return sel

    def good(stats, boxes):
        dens = stats.density()
        return all(dens[b] >= eq.rho_u + 2 * delta for b in boxes)

    def one_seed(seed):
        rng = LatticeRng(seed)
        state = lattice.init("product", L, side=side, rng=rng, p=p0)
        inside = np.zeros((side, side), dtype=np.uint8)
        i0, i1 = int((mid - K) * L), int((mid + K) * L)
        inside[i0:i1, i0:i1] = 1
        state.occ = state.occ * inside
        stats0 = lattice.box_stats(state, cfg.gamma)
        if not good(stats0, block_boxes(stats0, mid)):
            raise RuntimeError("initial block not good; raise p0")
        for _ in range(N):
            state, _ = lattice.step(state, dk, p, rng, anchor="site")
        stats = lattice.box_stats(state, cfg.gamma)
        return (good(stats, block_boxes(stats, mid + 2 * K))
                and good(stats, block_boxes(stats, mid - 2 * K)))

    outcomes = parallel_map(one_seed, cfg.seeds, cfg.threads)
    k = sum(outcomes)
    nn = len(outcomes)
    lo, hi = _wilson_interval(k, nn)
    return {"L": L, "K": K, "N": N, "delta": delta, "p0": p0,
            "seeds": nn, "good_both": k, "estimate": k / nn,
            "eps_hat": 1.0 - k / nn, "ci_low": lo, "ci_high": hi}


def _wilson_interval(k: int, n: int, z: float = 1.96):
    if n == 0:
        return (0.0, 1.0)
    ph = k / n
    denom = 1.0 + z * z / n
    center = (ph + z * z / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def survival_floor(p: Params, fallback: float = 0.05) -> float:
    eq = equilibria(p)
    return eq.rho_u / 2.0 if eq.rho_u is not None else fallback


def phase_scan(cfg: ExperimentConfig, init: str = "all_ones",
               square_side: float = 2.0) -> list:
    """Survival frequencies over the (beta, eta) grid.

    init 'all_ones': survival means final density at least the floor
    (rho_u/2 when bistable, a fixed fallback otherwise).  init
    'finite_square': survival means any particle alive at the horizon.
    Same-seed runs across the grid share coins, hence are monotonically
    coupled in beta.
    """
    betas = cfg.beta_grid or (cfg.beta,)
    etas = cfg.eta_grid or (cfg.eta,)
    L, W = cfg.phase_L, cfg.phase_W
    dk = discretize(build_kernel(cfg.kernel), L)
    side = int(round(W * L))

    def one(cell):
        beta, eta, seed = cell
        p = Params(beta, eta)
        rng = LatticeRng(seed)
        if init == "all_ones":
            state = lattice.init("all_ones", L, side=side)
        elif init == "finite_square":
            state = lattice.init("all_ones", L, side=side)
            mask = np.zeros((side, side), dtype=np.uint8)
            half = square_side / 2.0
            i0 = int((W / 2 - half) * L)
            i1 = int((W / 2 + half) * L)
            if i0 < 0 or i1 > side:
                raise ValueError("square does not fit the window")
            mask[i0:i1, i0:i1] = 1
            state.occ = state.occ * mask
        else:
            raise ValueError(f"unknown init {init!r}")
        for _ in range(cfg.horizon):
            state, _ = lattice.step(state, dk, p, rng, anchor="site")
            if not state.occ.any():
                break
        dens = state.density()
        if init == "all_ones":
            survived = dens >= survival_floor(p)
        else:
            survived = dens > 0.0
        return {"beta": beta, "eta": eta, "seed": seed, "init": init,
                "final_density": dens, "survived": int(survived)}

    cells = [(b, e, s) for e in etas for b in betas for s in cfg.seeds]
    return parallel_map(one, cells, cfg.threads)


def survival_table(rows):
    """Aggregate scan rows to per-cell frequencies."""
    table = {}
    for r in rows:
        key = (r["beta"], r["eta"])
        table.setdefault(key, []).append(r["survived"])
    return {k: sum(v) / len(v) for k, v in sorted(table.items())}


def threshold_estimate(freqs: dict, eta: float) -> float | None:
    """Smallest beta on the grid with survival frequency >= 1/2."""
    betas = sorted(b for (b, e) in freqs if e == eta)
    for b in betas:
        if freqs[(b, eta)] >= 0.5:
            return b
    return None


# -- coupled lattice / comparison runs ------------------------------------

@dataclass
class CoupledRunResult:
    seed: int
    L: int
    steps: int
    boxes: int
    points: list
    reports: list
    n_regions: int

    @property
    def violations(self) -> int:
        return sum(len(r.violations) for r in self.reports)

    @property
    def error_rate(self) -> float:
        return len(self.points) / (self.boxes * self.steps)


def aligned_side(L: int, gamma: float, W: float) -> int:
    """Torus side in sites, rounded to whole boxes so no remainder
    strip goes unmonitored."""
    b = lattice.box_side_sites(L, gamma)
    return b * max(1, int(round(W * L / b)))


def run_coupled(p: Params, dk, gamma: float, side: int, steps: int,
                seed: int, phi: PhiData, cfg: comparison.ComparisonConfig,
                audit_every: int = 1) -> CoupledRunResult:
    """Full coupled trajectory from all-ones: lattice drives errors,
    errors drive regions, containment audited at integer times."""
    rng = LatticeRng(seed)
    state = lattice.init("all_ones", dk.L, side=side)
    stats = lattice.box_stats(state, gamma)
    rs = comparison.RegionSet(cfg)
    cache = comparison.ProfileCache(phi)
    points, reports = [], []
    for n in range(1, steps + 1):
        state, _ = lattice.step(state, dk, p, rng, anchor="site")
        prev, stats = stats, lattice.box_stats(state, gamma)
        errs = comparison.detect_errors(prev, stats, rs, phi, cfg, rng,
                                        cache=cache)
        points.extend(errs)
        comparison.evolve_regions(rs, n - 1, n, spawns=errs)
        if n % audit_every == 0:
            reports.append(
                comparison.check_containment(stats, rs, phi, cfg, n))
    return CoupledRunResult(seed=seed, L=dk.L, steps=steps,
                            boxes=int(stats.nb ** 2), points=points,
                            reports=reports, n_regions=len(rs.regions))


def error_rate(cfg: ExperimentConfig, phi: PhiData) -> list:
    """Empirical error rates per L against the Chebyshev bound, plus
    the point-process property checks on the pooled points."""
    p = cfg.params
    spec = build_kernel(cfg.kernel)
    rows = []
    for L in cfg.L_list:
        dk = discretize(spec, L)
        cmp_cfg = comparison.make_comparison_config(phi, dk, L, cfg.gamma)
        side = aligned_side(L, cfg.gamma, cfg.W)

        def one_seed(seed, dk=dk, cmp_cfg=cmp_cfg, side=side):
            return run_coupled(p, dk, cfg.gamma, side, cfg.steps, seed,
                               phi, cmp_cfg)

        results = parallel_map(one_seed, cfg.seeds, cfg.threads)
        pooled = [pt for r in results for pt in r.points]
        w_cont = side / L
        prop5 = property5_check(pooled, w_cont, cfg.steps,
                                box_width=cmp_cfg.box_side / L)
        prop6 = property6_check(pooled, w_cont, cfg.steps,
                                eps=cmp_cfg.error_rate_bound(),
                                l_gamma_sq=cmp_cfg.box_side / L)
        rate = (sum(len(r.points) for r in results)
                / sum(r.boxes * r.steps for r in results))
        rows.append({
            "L": L, "gamma": cfg.gamma, "seeds": len(cfg.seeds),
            "steps": cfg.steps, "empirical_rate": rate,
            "bound": cmp_cfg.error_rate_bound(),
            "within_bound": int(rate <= cmp_cfg.error_rate_bound()),
            "violations": sum(r.violations for r in results),
            "type_I": sum(1 for pt in pooled if pt.type == "I"),
            "type_II": sum(1 for pt in pooled if pt.type == "II"),
            "prop5_pass": int(prop5["passed"]),
            "prop6_pass": int(prop6["passed"]),
        })
    return rows


# -- point-process property checks -----------------------------------------

def property5_check(points, space_side: float, horizon: float,
                    box_width: float, n_probes: int = 400,
                    level: float = 0.01, probe_seed: int = 0) -> dict:
    """Small-box multiplicity: the chance of seeing two or more points
    in a small space-time box must be quadratic in its volume.

    One-sided binomial test at the given level of H0: P(>= 2 in B) <=
    2 (nu lambda)^2 with nu the empirical space-time intensity.
    """
    a = 1.5 * box_width
    tau = 1.5
    vol = a * a * tau
    nu = len(points) / (space_side ** 2 * horizon) if horizon > 0 else 0.0
    bound = min(1.0, 2.0 * (nu * vol) ** 2)
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [probe_seed, 5], dtype=np.uint64)))
    lows = gen.random((n_probes, 3))
    lows[:, :2] *= max(space_side - a, 0.0)
    lows[:, 2] *= max(horizon - tau, 0.0)
    pts = np.array([[pt.location[0], pt.location[1], pt.t]
                    for pt in points]).reshape(-1, 3)
    observed = 0
    for lo in lows:
        hi = lo + np.array([a, a, tau])
        if len(pts):
            inside = np.all((pts >= lo) & (pts < hi), axis=1)
            if int(inside.sum()) >= 2:
                observed += 1
    # reject only if observed count is implausibly high under the bound
    critical = int(binom.ppf(1.0 - level, n_probes, bound))
    return {"passed": observed <= max(critical, 0), "observed": observed,
            "probes": n_probes, "bound": bound, "critical": critical}


def property6_check(points, space_side: float, horizon: float, eps: float,
                    l_gamma_sq: float, n_families: int = 100,
                    level: float = 0.01, probe_seed: int = 1) -> dict:
    """Product bound for disjoint small cubes: joint hit frequencies may
    not exceed the product of the per-cube bounds 2 eps L^{2 gamma}
    lambda(B_j).

    l_gamma_sq is the box width L^-gamma; cubes are drawn with spatial
    side below it and unit time depth, and each family is tested by
    sliding over integer time translates.
    """
    gen = np.random.Generator(np.random.Philox(key=np.array(
        [probe_seed, 6], dtype=np.uint64)))
    pts = np.array([[pt.location[0], pt.location[1], pt.t]
                    for pt in points]).reshape(-1, 3)
    area_unit = l_gamma_sq ** 2
    failures = 0
    translates = max(1, int(horizon) - 1)
    for _ in range(n_families):
        m = int(gen.integers(2, 4))
        sides = (0.3 + 0.6 * gen.random(m)) * l_gamma_sq
        anchors = gen.random((m, 2)) * (space_side - sides[:, None])
        t_len = 0.5 + 0.4 * gen.random(m)
        t_off = gen.random(m) * (1.0 - t_len).clip(min=0.0)
        # per-cube bound: 2 eps L^{2 gamma} lambda(B); L^{2 gamma} is
        # 1/area of one box, so the rate is per unit volume
        bounds = np.minimum(
            1.0, 2.0 * eps * (sides ** 2 / area_unit) * t_len)
        target = float(np.prod(bounds))
        hits = 0
        for shift in range(translates):
            ok = True
            for k in range(m):
                lo = np.array([anchors[k, 0], anchors[k, 1],
                               shift + t_off[k]])
                hi = lo + np.array([sides[k], sides[k], t_len[k]])
                if not (len(pts) and np.any(
                        np.all((pts >= lo) & (pts < hi), axis=1))):
                    ok = False
                    break
            hits += ok
        # one-sided binomial test of freq <= target
        critical = int(binom.ppf(1.0 - level, translates, min(target, 1.0)))
        if hits > critical:
            failures += 1
    return {"passed": failures == 0, "families": n_families,
            "failures": failures}
