"""Triangular vacant-region comparison process and the containment audit.

All regions share one triple of outward unit normals.  A region is
{x : xi_j . (x - y) <= h_j(t)} with per-edge support offsets h_j that
move at exactly rate -c (inward) or +b (outward); offsets are therefore
piecewise linear in time with breakpoints only at events, and the whole
evolution is event driven and exact.

Writing lam for the positive coefficients with sum_j lam_j xi_j = 0 and
sum_j lam_j = 1, the inradius of a support vector g is lam . g
(independent of the centering), which gives closed forms for vanish
times, pairwise contact times and overlap formation.

Lattice errors spawn inward-shrinking triangles of inradius r; when
regions touch, the maximal collection with a common point spawns an
overlap region (their intersection) whose edges move outward at rate b
until each catches the outermost parent edge, then turn inward.  The
containment audit checks that every low-density box lies inside the
union of regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .ide import Profile1D, apply_Q_1d
from .lattice import BoxStats
from .mean_field import equilibria, mf_step
from .wavespeed import PhiData

_EPS = 1e-12
_EVENT_GUARD = 1_000_000

# same-time event ordering: creations first, then interactions
_PRIO_SPAWN = 0
_PRIO_CONTACT = 1
_PRIO_CATCHUP = 2
_PRIO_VANISH = 3


def lambda_coeffs(directions: np.ndarray) -> np.ndarray:
    """Positive lam with lam @ directions = 0, normalised to sum 1."""
    d = np.asarray(directions, dtype=float)
    lam = np.array([
        d[1, 0] * d[2, 1] - d[1, 1] * d[2, 0],
        d[2, 0] * d[0, 1] - d[2, 1] * d[0, 0],
        d[0, 0] * d[1, 1] - d[0, 1] * d[1, 0],
    ])
    if np.all(lam < 0):
        lam = -lam
    if not np.all(lam > 0):
        raise ValueError("normals must positively span the plane")
    return lam / lam.sum()


@dataclass(frozen=True)
class ComparisonConfig:
    """Geometry and thresholds tying the lattice to the region process."""

    alpha: float      # bad-box density threshold, in (rho_u, rho_s)
    c: float          # inward edge rate
    b: float          # outward (interaction) rate, 2 d(k)
    r: float          # inradius of spawned triangles
    delta1: float     # spontaneous-drop slack, in (0, Q(alpha) - alpha)
    delta2: float     # recovery-profile slack
    gamma: float
    L: int
    d_k: float
    d_B: float        # box diameter
    box_side: int     # sites per box side
    directions: np.ndarray
    lam: np.ndarray

    def error_rate_bound(self) -> float:
        """C L^(2 gamma - 2) with C from the two Chebyshev constants."""
        c1 = self._cmax / self.delta1 ** 2
        c2 = self._cmax / self.delta2 ** 2
        return max(c1, c2) * self.L ** (2.0 * self.gamma - 2.0)

    @property
    def _cmax(self) -> float:
        return 1.0  # max{1, beta^2} with beta <= 1


def make_comparison_config(phi: PhiData, dk, L: int, gamma: float,
                           ceil_r: bool = True,
                           delta1: float | None = None) -> ComparisonConfig:
    """Derive all constants from the recovery profile."""
    from .lattice import box_side_sites
    if not 0.0 < gamma < 0.5:
        raise ValueError("gamma must lie in (0, 1/2)")
    p = phi.params
    eq = equilibria(p)
    alpha = phi.alpha
    if not eq.rho_u < alpha < eq.rho_s:
        raise ValueError("alpha must lie strictly between the equilibria")
    margin = mf_step(p, alpha) - alpha
    if margin <= 0:
        raise ValueError("alpha has no one-step rise; rebuild phi with "
                         "fewer iterations")
    if delta1 is None:
        delta1 = margin / 2.0
    if not 0.0 < delta1 < margin:
        raise ValueError(f"delta1 must lie in (0, {margin})")

    # smallest strict bound on Q_i[phi] - phi over s < 0
    neg = phi.phi.grid < 0.0
    gap = 0.0
    for k1 in phi.kernels1d:
        img = apply_Q_1d(phi.phi, k1, p)
        gap = max(gap, float(np.max(img.values[neg] - phi.phi.values[neg])))
    delta2 = max(gap, 1e-9) * (1.0 + 1e-9)

    d_k = dk.support_diameter
    if d_k <= 0:
        raise ValueError("point-mass kernels give interaction rate 0")
    bside = box_side_sites(L, gamma)
    d_B = math.sqrt(2.0) * bside / L
    c = phi.c
    r = phi.l + d_B + c + d_k
    if ceil_r:
        r = float(math.ceil(r))
    return ComparisonConfig(alpha=alpha, c=c, b=2.0 * d_k, r=r,
                            delta1=delta1, delta2=delta2, gamma=gamma, L=L,
                            d_k=d_k, d_B=d_B, box_side=bside,
                            directions=phi.directions,
                            lam=lambda_coeffs(phi.directions))


@dataclass(frozen=True)
class ErrorPoint:
    """One lattice error: a point uniform in the erroring box with a
    time uniform in [n-1, n)."""

    location: tuple
    t: float
    type: str        # 'I' | 'II'
    box: tuple       # (bi, bj)
    step: int


class _Edge:
    __slots__ = ("segments", "mode", "targets")

    def __init__(self, t0: float, h0: float, rate: float, mode: str,
                 targets=()):
        self.segments = [(t0, h0, rate)]
        self.mode = mode
        self.targets = list(targets)

    def offset_at(self, t: float) -> float:
        segs = self.segments
        k = len(segs) - 1
        while k > 0 and segs[k][0] > t:
            k -= 1
        t0, h0, rate = segs[k]
        return h0 + rate * (t - t0)

    @property
    def rate(self) -> float:
        return self.segments[-1][2]

    def switch(self, t: float, h: float, rate: float, mode: str):
        self.segments.append((t, h, rate))
        self.mode = mode
        self.targets = []


class VacantRegion:
    """Triangle with per-edge offset histories; see module docstring."""

    def __init__(self, rid: int, kind: str, created_at: float,
                 created_step: int, center, h0, rates, modes,
                 parents=(), targets=()):
        self.id = rid
        self.kind = kind               # 'spawned' | 'overlap' | 'collision'
        self.created_at = float(created_at)
        self.created_step = int(created_step)
        self.center = np.asarray(center, dtype=float)
        self.parents = tuple(parents)
        self.vanished_at = None
        self.circumradius = None
        self.edges = [_Edge(created_at, h0[j], rates[j], modes[j],
                            targets if modes[j] == "out" else ())
                      for j in range(3)]

    def alive_at(self, t: float) -> bool:
        return (self.created_at <= t + _EPS
                and (self.vanished_at is None or t <= self.vanished_at + _EPS))

    def offsets_at(self, t: float) -> np.ndarray:
        return np.array([e.offset_at(t) for e in self.edges])

    def supports_at(self, t: float, normals: np.ndarray) -> np.ndarray:
        return normals @ self.center + self.offsets_at(t)

    def rates(self) -> np.ndarray:
        return np.array([e.rate for e in self.edges])


def _vertices(normals: np.ndarray, g: np.ndarray) -> np.ndarray:
    verts = []
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        A = np.array([normals[i], normals[j]])
        verts.append(np.linalg.solve(A, np.array([g[i], g[j]])))
    return np.array(verts)


def spawn_region(e: ErrorPoint, cfg: ComparisonConfig,
                 directions: np.ndarray, rid: int = 0) -> VacantRegion:
    """Inward-shrinking triangle of inradius r centered at the error."""
    normals = np.asarray(directions, dtype=float)
    reg = VacantRegion(rid, "spawned", e.t, e.step, e.location,
                       h0=[cfg.r] * 3, rates=[-cfg.c] * 3,
                       modes=["in"] * 3)
    g = reg.supports_at(e.t, normals)
    verts = _vertices(normals, g)
    reg.circumradius = float(np.max(np.hypot(*(verts - reg.center).T)))
    return reg


class RegionSet:
    """All regions of one trajectory plus the evolution clock."""

    def __init__(self, cfg: ComparisonConfig):
        self.cfg = cfg
        self.normals = np.asarray(cfg.directions, dtype=float)
        self.lam = np.asarray(cfg.lam, dtype=float)
        self.regions: dict[int, VacantRegion] = {}
        self.next_id = 0
        self.horizon = 0.0
        self.contacts: set[frozenset] = set()

    # -- queries ---------------------------------------------------------

    def alive(self, t: float) -> list:
        return [R for R in self.regions.values() if R.alive_at(t)]

    def inradius(self, R: VacantRegion, t: float) -> float:
        return float(self.lam @ R.offsets_at(t))

    def membership(self, x, t: float) -> bool:
        x = np.asarray(x, dtype=float)
        for R in self.alive(t):
            if np.all(self.normals @ (x - R.center)
                      <= R.offsets_at(t) + 1e-9):
                return True
        return False

    # -- evolution -------------------------------------------------------

    def insert_spawn(self, e: ErrorPoint) -> VacantRegion:
        reg = spawn_region(e, self.cfg, self.normals, rid=self.next_id)
        self.next_id += 1
        self.regions[reg.id] = reg
        return reg

    def evolve_to(self, t1: float, spawns=()) -> None:
        spawn_queue = sorted(spawns, key=lambda e: (e.t, e.type, e.box))
        for e in spawn_queue:
            if e.t > t1 + _EPS:
                raise ValueError("spawn scheduled beyond the target time")
        for _ in range(_EVENT_GUARD):
            now = self.horizon
            self._rearm_contacts(now)
            event = self._next_event(now, t1, spawn_queue)
            if event is None:
                break
            t, prio, payload = event
            self.horizon = max(self.horizon, t)
            if prio == _PRIO_SPAWN:
                spawn_queue.pop(0)
                self.insert_spawn(payload)
            elif prio == _PRIO_CONTACT:
                self._form_overlap(payload, t)
            elif prio == _PRIO_CATCHUP:
                self._do_catchup(payload, t)
            else:
                self._do_vanish(payload, t)
        else:
            raise RuntimeError("event guard exceeded; runaway geometry")
        self.horizon = t1

    def _rearm_contacts(self, now: float) -> None:
        stale = []
        for pair in self.contacts:
            a, b = tuple(pair)
            ra, rb = self.regions[a], self.regions[b]
            if not (ra.alive_at(now) and rb.alive_at(now)):
                stale.append(pair)
            elif self._pair_inradius(ra, rb, now) < -1e-9:
                stale.append(pair)
        for pair in stale:
            self.contacts.discard(pair)

    def _pair_inradius(self, A, B, t: float) -> float:
        ga = A.supports_at(t, self.normals)
        gb = B.supports_at(t, self.normals)
        return float(self.lam @ np.minimum(ga, gb))

    def _next_event(self, now: float, t1: float, spawn_queue):
        best = None

        def consider(t, prio, payload):
            nonlocal best
            if t is None or t > t1 + _EPS:
                return
            t = max(t, now)
            key = (t, prio)
            if best is None or key < (best[0], best[1]):
                best = (t, prio, payload)

        if spawn_queue:
            e = spawn_queue[0]
            consider(max(e.t, now), _PRIO_SPAWN, e)

        # event sources: regions created and not yet vanished (a region
        # stays a member of the vacant set at its vanish instant, but
        # generates no further events)
        alive = sorted((R for R in self.regions.values()
                        if R.vanished_at is None
                        and R.created_at <= now + _EPS),
                       key=lambda R: R.id)
        for R in alive:
            rho = self.inradius(R, now)
            slope = float(self.lam @ R.rates())
            if slope < -_EPS and rho > -_EPS:
                consider(now + max(rho, 0.0) / (-slope), _PRIO_VANISH, R.id)
            for j, edge in enumerate(R.edges):
                if edge.mode != "out":
                    continue
                t_c = self._catchup_time(R, j, now)
                if t_c is not None:
                    consider(t_c, _PRIO_CATCHUP, (R.id, j))

        for a in range(len(alive)):
            for b in range(a + 1, len(alive)):
                A, B = alive[a], alive[b]
                if frozenset((A.id, B.id)) in self.contacts:
                    continue
                t_c = self._contact_time(A, B, now, t1)
                if t_c is not None:
                    consider(t_c, _PRIO_CONTACT, (A.id, B.id))
        return best

    def _catchup_time(self, R: VacantRegion, j: int, now: float):
        edge = R.edges[j]
        g_self = float(self.normals[j] @ R.center + edge.offset_at(now))
        live = [pid for pid in edge.targets
                if self.regions[pid].alive_at(now)]
        if not live:
            return now
        t_best = now
        for pid in live:
            P = self.regions[pid]
            g_p = float(self.normals[j] @ P.center
                        + P.edges[j].offset_at(now))
            rate_p = P.edges[j].rate
            if g_self >= g_p - _EPS:
                continue
            if edge.rate <= rate_p + _EPS:
                return None   # cannot close the gap in this regime
            t_best = max(t_best, now + (g_p - g_self) / (edge.rate - rate_p))
        return t_best

    def _contact_time(self, A, B, now: float, t1: float):
        ga = A.supports_at(now, self.normals)
        gb = B.supports_at(now, self.normals)
        ra, rb = A.rates(), B.rates()
        if float(self.lam @ np.minimum(ga, gb)) >= -1e-9:
            return now
        # kinks where the per-edge min switches branch
        kinks = [now]
        for j in range(3):
            dr = ra[j] - rb[j]
            if abs(dr) > _EPS:
                tk = now + (gb[j] - ga[j]) / dr
                if now < tk < t1:
                    kinks.append(tk)
        kinks.append(t1)
        kinks = sorted(set(kinks))
        for lo, hi in zip(kinks[:-1], kinks[1:]):
            v_lo = self._pair_inradius(A, B, lo)
            v_hi = self._pair_inradius(A, B, hi)
            if v_lo >= -1e-9:
                return lo
            if v_hi >= -1e-9:
                # linear on [lo, hi]
                frac = (0.0 - v_lo) / (v_hi - v_lo)
                return lo + frac * (hi - lo)
        return None

    def _form_overlap(self, pair, t: float):
        seed = [self.regions[i] for i in pair]
        alive = sorted(self.alive(t), key=lambda R: R.id)
        chosen = list(seed)
        common = np.minimum(*(R.supports_at(t, self.normals) for R in seed))
        if float(self.lam @ common) < -1e-9:
            # separated again before processing; drop silently
            self.contacts.add(frozenset(pair))
            return
        for R in alive:
            if R in chosen:
                continue
            trial = np.minimum(common, R.supports_at(t, self.normals))
            if float(self.lam @ trial) >= -1e-9:
                chosen.append(R)
                common = trial
        # incenter: equal margin to the three support lines
        A = np.column_stack([self.normals, np.ones(3)])
        sol = np.linalg.solve(A, common)
        center, rho = sol[:2], max(sol[2], 0.0)
        kind = ("overlap" if any(abs(R.created_at - t) <= _EPS
                                 for R in chosen) else "collision")
        step = int(math.ceil(t - 1e-9))
        ids = [R.id for R in chosen]
        reg = VacantRegion(self.next_id, kind, t, step, center,
                           h0=[rho] * 3, rates=[self.cfg.b] * 3,
                           modes=["out"] * 3, parents=ids, targets=ids)
        g = reg.supports_at(t, self.normals)
        verts = _vertices(self.normals, g)
        reg.circumradius = float(np.max(np.hypot(*(verts - center).T)))
        self.next_id += 1
        self.regions[reg.id] = reg
        for i in ids:
            self.contacts.add(frozenset((reg.id, i)))
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                self.contacts.add(frozenset((ids[a], ids[b])))

    def _do_catchup(self, payload, t: float):
        rid, j = payload
        R = self.regions[rid]
        edge = R.edges[j]
        if edge.mode != "out":
            return
        live = [pid for pid in edge.targets
                if self.regions[pid].alive_at(t)]
        if live:
            # land exactly on the outermost parent edge
            g_target = max(
                float(self.normals[j] @ self.regions[pid].center
                      + self.regions[pid].edges[j].offset_at(t))
                for pid in live)
            h_new = g_target - float(self.normals[j] @ R.center)
        else:
            h_new = edge.offset_at(t)
        edge.switch(t, h_new, -self.cfg.c, "in")

    def _do_vanish(self, rid: int, t: float):
        R = self.regions[rid]
        if not R.alive_at(t) or R.vanished_at is not None:
            return
        R.vanished_at = t
        for other in self.regions.values():
            for edge in other.edges:
                if edge.mode == "out" and rid in edge.targets:
                    edge.targets.remove(rid)


def evolve_regions(rs: RegionSet, t0: float, t1: float,
                   spawns=()) -> RegionSet:
    """Advance the set from t0 to t1 (t0 must match the current horizon)."""
    if abs(rs.horizon - t0) > 1e-9:
        raise ValueError(f"region set is at t={rs.horizon}, not {t0}")
    rs.evolve_to(t1, spawns=spawns)
    return rs


def vacant_membership(rs: RegionSet, x, t: float) -> bool:
    """True iff x lies in some (closed) region at time t."""
    return rs.membership(x, t)


# -- recovery profile field ----------------------------------------------

class ProfileCache:
    """Iterated recovery profiles per (direction, age), widened on the
    right so the advancing front never reads past the grid."""

    def __init__(self, phi: PhiData, max_age: int = 16):
        self.phi = phi
        self._build(max_age)

    def _build(self, cap: int):
        self.cap = cap
        base = self.phi.phi
        reach = max(k1.halfwidth for k1 in self.phi.kernels1d) * base.delta
        extra = int(math.ceil((cap * reach + 2 * reach) / base.delta))
        values = np.concatenate([base.values,
                                 np.full(extra, base.right_limit)])
        wide = Profile1D(base.s0, base.delta, values,
                         base.left_limit, base.right_limit)
        self.tables = []
        for k1 in self.phi.kernels1d:
            ladder = [wide]
            for _ in range(cap):
                ladder.append(apply_Q_1d(ladder[-1], k1, self.phi.params))
            self.tables.append(ladder)

    def profile(self, j: int, age: int) -> Profile1D:
        if age < 0:
            raise ValueError("age must be nonnegative")
        if age > self.cap:
            self._build(max(age, 2 * self.cap))
        return self.tables[j][age]


def h_field(rs: RegionSet, phi: PhiData, n: int,
            cache: ProfileCache | None = None):
    """Evaluator x -> h_n(x): max over edge directions of the infimum,
    over regions containing x, of the age-iterated profile at the
    signed edge coordinate.  Points outside every region get 0."""
    cache = cache or ProfileCache(phi)
    regs = [R for R in rs.regions.values() if R.alive_at(n)]
    normals = rs.normals

    def evaluate(x) -> float:
        x = np.asarray(x, dtype=float)
        holders = [R for R in regs
                   if np.all(normals @ (x - R.center)
                             <= R.offsets_at(n) + 1e-9)]
        if not holders:
            return 0.0
        best = -np.inf
        for j in range(3):
            inf_j = min(
                float(cache.profile(j, n - R.created_step).evaluate(
                    float(normals[j] @ (x - R.center))))
                for R in holders)
            best = max(best, inf_j)
        return best

    return evaluate


# -- geometric predicates for boxes ---------------------------------------

def _rect_corners(rect):
    x0, y0, x1, y1 = rect
    return np.array([[x0, y0], [x1, y0], [x0, y1], [x1, y1]])


def _rect_in_region(rect, normals, g) -> bool:
    corners = _rect_corners(rect)
    return bool(np.all(corners @ normals.T <= g + 1e-9))


def _rect_intersects_region(rect, normals, g, verts) -> bool:
    corners = _rect_corners(rect)
    proj = corners @ normals.T
    if np.any(proj.min(axis=0) > g + 1e-9):
        return False
    x0, y0, x1, y1 = rect
    if (verts[:, 0].max() < x0 - 1e-9 or verts[:, 0].min() > x1 + 1e-9
            or verts[:, 1].max() < y0 - 1e-9 or verts[:, 1].min() > y1 + 1e-9):
        return False
    return True


def _rect_distance(a, b) -> float:
    dx = max(0.0, max(a[0] - b[2], b[0] - a[2]))
    dy = max(0.0, max(a[1] - b[3], b[1] - a[3]))
    return math.hypot(dx, dy)


def _region_snapshot(rs: RegionSet, t: float):
    return [(R, g, _vertices(rs.normals, g))
            for R in rs.alive(t)
            for g in [R.supports_at(t, rs.normals)]]


def _rect_in_union(rect, snap, normals, depth: int = 6) -> bool:
    for _, g, _ in snap:
        if _rect_in_region(rect, normals, g):
            return True
    touching = [(R, g, v) for R, g, v in snap
                if _rect_intersects_region(rect, normals, g, v)]
    if not touching or depth == 0:
        return False
    x0, y0, x1, y1 = rect
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    quads = [(x0, y0, xm, ym), (xm, y0, x1, ym),
             (x0, ym, xm, y1), (xm, ym, x1, y1)]
    return all(_rect_in_union(q, touching, normals, depth - 1) for q in quads)


# -- error detection and containment --------------------------------------

def detect_errors(prev: BoxStats, cur: BoxStats, rs: RegionSet,
                  phi: PhiData, cfg: ComparisonConfig,
                  rng: _rng.LatticeRng,
                  cache: ProfileCache | None = None) -> list:
    """Compare two consecutive box statistics against the region set.

    Type I: a box whose d(k)-surroundings were region-free at n-1 and
    whose density fell to alpha or below at n.  Type II: a box meeting
    the region union at n whose density fell below the recovery demand
    h_n at the box center.  One uniformly placed point per erroring box.
    """
    n = cur.time
    if prev.time != n - 1:
        raise ValueError("box statistics must be one step apart")
    dens_prev = prev.density()
    dens_cur = cur.density()
    # all geometry is queried at n-1: the audit-time shrink is what the
    # +c term in the spawn inradius pays for
    snap_prev = _region_snapshot(rs, n - 1)
    normals = rs.normals
    errors = []

    # Type I
    bad_now = np.nonzero((dens_cur <= cfg.alpha) & (dens_prev > cfg.alpha))
    reach = int(math.ceil(cfg.d_k / (cur.b / cur.L))) + 1
    for bi, bj in zip(*bad_now):
        rect = cur.box_rect(bi, bj)
        clear = True
        for oi in range(max(0, bi - reach), min(cur.nb, bi + reach + 1)):
            for oj in range(max(0, bj - reach), min(cur.nb, bj + reach + 1)):
                other = cur.box_rect(oi, oj)
                if _rect_distance(rect, other) > cfg.d_k + 1e-9:
                    continue
                for _, g, v in snap_prev:
                    if _rect_intersects_region(other, normals, g, v):
                        clear = False
                        break
                if not clear:
                    break
            if not clear:
                break
        if clear:
            errors.append(("I", int(bi), int(bj)))

    # Type II
    if snap_prev:
        cache = cache or ProfileCache(phi)
        w = cur.b / cur.L
        candidates = set()
        for R, g, v in snap_prev:
            lo_x = int(math.floor(v[:, 0].min() / w)) - 1
            hi_x = int(math.ceil(v[:, 0].max() / w)) + 1
            lo_y = int(math.floor(v[:, 1].min() / w)) - 1
            hi_y = int(math.ceil(v[:, 1].max() / w)) + 1
            for bi in range(max(0, lo_x), min(cur.nb, hi_x + 1)):
                for bj in range(max(0, lo_y), min(cur.nb, hi_y + 1)):
                    candidates.add((bi, bj))
        for bi, bj in sorted(candidates):
            rect = cur.box_rect(bi, bj)
            meets = [(R, g) for R, g, v in snap_prev
                     if _rect_intersects_region(rect, normals, g, v)]
            if not meets:
                continue
            center = np.array([0.5 * (rect[0] + rect[2]),
                               0.5 * (rect[1] + rect[3])])
            h = max(
                min(float(cache.profile(j, n - R.created_step).evaluate(
                    float(normals[j] @ (center - R.center))))
                    for R, _ in meets)
                for j in range(3))
            if dens_cur[bi, bj] < h:
                errors.append(("II", int(bi), int(bj)))

    # uniform placements, drawn in canonical error order
    errors.sort()
    if not errors:
        return []
    u = rng.stream(n, _rng.PHASE_ERROR_POINT).random((len(errors), 3))
    out = []
    w = cur.b / cur.L
    for (etype, bi, bj), (ux, uy, ut) in zip(errors, u):
        x0, y0 = cur.box_corner(bi, bj)
        out.append(ErrorPoint(location=(x0 + ux * w, y0 + uy * w),
                              t=n - 1 + ut, type=etype, box=(bi, bj),
                              step=n))
    return out


@dataclass
class ContainmentReport:
    time: float
    n_bad: int
    bad_boxes: list
    violations: list = field(default_factory=list)

    @property
    def contained(self) -> bool:
        return not self.violations


def check_containment(stats: BoxStats, rs: RegionSet, phi: PhiData,
                      cfg: ComparisonConfig, t: float) -> ContainmentReport:
    """Verify every bad box (density <= alpha) sits inside the union of
    regions at time t.  Violations are data, not exceptions."""
    dens = stats.density()
    bad = sorted(zip(*np.nonzero(dens <= cfg.alpha)))
    snap = _region_snapshot(rs, t)
    violations = []
    for bi, bj in bad:
        rect = stats.box_rect(bi, bj)
        if not _rect_in_union(rect, snap, rs.normals):
            violations.append((int(bi), int(bj)))
    return ContainmentReport(time=t, n_bad=len(bad),
                             bad_boxes=[(int(a), int(b)) for a, b in bad],
                             violations=violations)


def regions_to_json(rs: RegionSet) -> list:
    """Snapshot of the region set for serialization."""
    out = []
    for R in sorted(rs.regions.values(), key=lambda r: r.id):
        out.append({
            "id": R.id,
            "kind": R.kind,
            "created_at": R.created_at,
            "created_step": R.created_step,
            "center": [float(c) for c in R.center],
            "parents": list(R.parents),
            "vanished_at": R.vanished_at,
            "circumradius": R.circumradius,
            "edges": [{"mode": e.mode,
                       "targets": list(e.targets),
                       "segments": [list(s) for s in e.segments]}
                      for e in R.edges],
        })
    return out
