import numpy as np
import pytest

from qcp.ide import Field2D
from qcp.kernel import discretize
from qcp.lattice import (BoxStats, LatticeState, box_side_sites, box_stats,
                         coupling_discrepancy, init, load_snapshot,
                         save_snapshot, step)
from qcp.mean_field import Params
from qcp.rng import LatticeRng


class TestInit:
    def test_all_ones(self):
        s = init("all_ones", 10, W=2.0)
        assert s.density() == 1.0
        assert s.side == 20

    def test_product_zero_empty(self):
        s = init("product", 10, W=2.0, rng=LatticeRng(1), p=0.0)
        assert s.density() == 0.0

    def test_product_density_clt(self):
        s = init("product", 50, W=4.0, rng=LatticeRng(2), p=0.37)
        n = s.side ** 2
        sigma = np.sqrt(0.37 * 0.63 / n)
        assert abs(s.density() - 0.37) < 4 * sigma

    def test_from_field_density(self):
        L, side = 100, 400
        u = Field2D(0.0, 0.0, 1.0 / L, np.full((side, side), 0.5))
        s = init("from_field", L, side=side, rng=LatticeRng(3), field=u)
        sigma = np.sqrt(0.25 / side ** 2)
        assert abs(s.density() - 0.5) < 4 * sigma

    def test_finite_set(self):
        s = init("finite_set", 10, W=2.0, points=[(0.5, 0.5), (1.0, 1.5)])
        assert int(s.occ.sum()) == 2
        assert s.occ[5, 5] == 1

    def test_finite_set_outside_window(self):
        with pytest.raises(ValueError, match="outside"):
            init("finite_set", 10, W=2.0, points=[(2.5, 0.5)])

    def test_product_determinism(self):
        a = init("product", 20, W=2.0, rng=LatticeRng(9), p=0.4)
        b = init("product", 20, W=2.0, rng=LatticeRng(9), p=0.4)
        assert np.array_equal(a.occ, b.occ)


class TestStep:
    def test_all_ones_deaths_only(self, dk8, p_main):
        s = init("all_ones", 8, W=4.0)
        rng = LatticeRng(11)
        s1, rep = step(s, dk8, p_main, rng)
        n = s.side ** 2
        assert rep.births_attempted == 0
        sigma = np.sqrt(p_main.eta * (1 - p_main.eta) / n)
        assert abs(s1.density() - (1 - p_main.eta)) < 4 * sigma

    def test_single_site_cannot_give_birth(self, dk8):
        p = Params(1.0, 0.1)
        s = init("finite_set", 8, W=4.0, points=[(2.0, 2.0)])
        rng = LatticeRng(12)
        total = s.occ.sum()
        for _ in range(20):
            s, rep = step(s, dk8, p, rng)
            assert rep.births == 0
            assert s.occ.sum() <= total
            total = s.occ.sum()

    def test_eta_one_kills_everything(self, dk8):
        s = init("all_ones", 8, W=4.0)
        s1, _ = step(s, dk8, Params(0.8, 1.0), LatticeRng(13))
        assert s1.occ.sum() == 0

    def test_bit_identical_trajectories(self, dk8, p_main):
        def run(seed):
            rng = LatticeRng(seed)
            s = init("product", 8, W=4.0, rng=rng, p=0.5)
            for _ in range(10):
                s, _ = step(s, dk8, p_main, rng)
            return s.occ

        assert np.array_equal(run(77), run(77))
        assert not np.array_equal(run(77), run(78))

    def test_monotone_coupling(self, dk8, p_main):
        rng_a, rng_b = LatticeRng(21), LatticeRng(21)
        a = init("product", 8, W=4.0, rng=LatticeRng(1), p=0.3)
        extra = init("product", 8, W=4.0, rng=LatticeRng(2), p=0.3)
        b = LatticeState(8, a.side, (a.occ | extra.occ).astype(np.uint8))
        for _ in range(20):
            a, _ = step(a, dk8, p_main, rng_a)
            b, _ = step(b, dk8, p_main, rng_b)
            assert np.all(a.occ <= b.occ)

    def test_box_corner_anchor_needs_gamma(self, dk8, p_main):
        s = init("all_ones", 8, W=4.0)
        with pytest.raises(ValueError, match="gamma"):
            step(s, dk8, p_main, LatticeRng(1), anchor="box_corner")

    def test_one_step_box_mean_matches_expectation(self, square_spec):
        # corner-anchored process: per-box mean over seeds against the
        # closed-form conditional expectation
        p = Params(1.0, 0.05)
        L, gamma, seeds = 50, 0.3, 60
        dk = discretize(square_spec, L)
        s0 = init("product", L, side=150, rng=LatticeRng(5), p=0.5)
        acc = None
        for k in range(seeds):
            rng = LatticeRng(100 + k)
            s1, rep = step(s0, dk, p, rng, anchor="box_corner", gamma=gamma,
                           with_expectation=(k == 0))
            if k == 0:
                expect = rep.exp_hat
            st = box_stats(s1, gamma)
            acc = st.density() if acc is None else acc + st.density()
        mean = acc / seeds
        m = box_side_sites(L, gamma) ** 2
        bound_sigma = np.sqrt(1.0 / m) / np.sqrt(seeds)
        assert np.max(np.abs(mean - expect)) < 4 * bound_sigma

    def test_one_step_variance_bound(self, square_spec):
        p = Params(1.0, 0.05)
        L, gamma, seeds = 50, 0.3, 100
        dk = discretize(square_spec, L)
        s0 = init("product", L, side=150, rng=LatticeRng(5), p=0.5)
        m = box_side_sites(L, gamma) ** 2
        samples = []
        for k in range(seeds):
            s1, _ = step(s0, dk, p, LatticeRng(500 + k), anchor="box_corner",
                         gamma=gamma)
            samples.append(box_stats(s1, gamma).S)
        var = np.var(np.array(samples, dtype=float), axis=0, ddof=1)
        c_bound = max(1.0, p.beta ** 2)
        slack = 3.0 * np.sqrt(2.0 / (seeds - 1))
        assert np.all(var <= c_bound * m * (1.0 + slack))

    def test_chebyshev_over_bound(self, square_spec):
        # P(sup-box |S/m - E| >= delta) is at most C L^{2 gamma} /
        # (delta^2 L^{2-2gamma}); check the empirical frequency under it
        p = Params(1.0, 0.05)
        L, gamma, seeds, delta = 50, 0.3, 60, 0.1
        dk = discretize(square_spec, L)
        s0 = init("product", L, side=150, rng=LatticeRng(5), p=0.5)
        m = box_side_sites(L, gamma) ** 2
        hits = 0
        for k in range(seeds):
            rng = LatticeRng(900 + k)
            s1, rep = step(s0, dk, p, rng, anchor="box_corner", gamma=gamma,
                           with_expectation=(k == 0))
            if k == 0:
                expect = rep.exp_hat
            dens = box_stats(s1, gamma).density()
            if np.max(np.abs(dens - expect)) >= delta:
                hits += 1
        nb = box_stats(s0, gamma).nb
        bound = max(1.0, p.beta ** 2) * nb * nb / (delta ** 2 * m)
        assert hits / seeds <= min(1.0, bound)


class TestBoxStats:
    def test_full_box_counts(self):
        # oracle: enumerate zeta over a fully occupied small box
        L, gamma = 16, 0.3
        b = box_side_sites(L, gamma)
        s = init("all_ones", L, side=4 * b)
        st = box_stats(s, gamma)
        assert np.all(st.S == b * b)
        zeta = 0.0
        for i in range(b - 1):
            for j in range(b - 1):
                zeta += 0.5 * (1 + 1)
        assert np.all(st.R == zeta)
        assert zeta == (b - 1) ** 2

    def test_single_pair_pattern(self):
        L, gamma = 16, 0.3
        b = box_side_sites(L, gamma)
        occ = np.zeros((2 * b, 2 * b), dtype=np.uint8)
        occ[1, 1] = 1
        occ[2, 1] = 1  # neighbor in +e1
        st = box_stats(LatticeState(L, 2 * b, occ), gamma)
        assert st.S[0, 0] == 2
        assert st.R[0, 0] == 0.5
        assert st.R.sum() == 0.5

    def test_empty_state(self):
        s = init("product", 16, W=2.0, rng=LatticeRng(1), p=0.0)
        st = box_stats(s, 0.3)
        assert np.all(st.S == 0) and np.all(st.R == 0)

    def test_gamma_validated(self):
        s = init("all_ones", 16, W=2.0)
        for g in (0.0, 0.5, 0.7):
            with pytest.raises(ValueError):
                box_stats(s, g)

    def test_r_at_most_s(self):
        s = init("product", 20, W=3.0, rng=LatticeRng(8), p=0.6)
        st = box_stats(s, 0.3)
        assert np.all(st.R <= st.S)
        assert 0 < st.m == st.b ** 2


class TestCouplingDiscrepancy:
    def test_point_mass_at_unit_resolution(self, point_mass_spec, p_main):
        # L=1 makes every site its own box corner, so the two kernels
        # coincide exactly
        dk = discretize(point_mass_spec, 1)
        s0 = init("product", 1, side=30, rng=LatticeRng(3), p=0.5)
        assert coupling_discrepancy(s0, dk, p_main, [4, 5], gamma=0.3) == 0.0

    def test_eta_one_no_discrepancy(self, square_spec):
        dk = discretize(square_spec, 10)
        s0 = init("product", 10, side=40, rng=LatticeRng(3), p=0.5)
        assert coupling_discrepancy(s0, dk, Params(1.0, 1.0), [4],
                                    gamma=0.3) == 0.0

    def test_decreases_with_l(self, square_spec, p_main):
        vals = []
        for L in (50, 100, 200):
            dk = discretize(square_spec, L)
            s0 = init("product", L, side=2 * L, rng=LatticeRng(3), p=0.5)
            vals.append(coupling_discrepancy(s0, dk, p_main, [11, 12],
                                             gamma=0.3))
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] > 0.0


class TestSnapshots:
    def test_round_trip(self, p_main, tmp_path):
        s = init("product", 12, W=3.0, rng=LatticeRng(6), p=0.4)
        s.time = 17
        path = tmp_path / "snap.json"
        save_snapshot(s, path, seed=6, params=p_main)
        back = load_snapshot(path)
        assert back.L == s.L and back.side == s.side and back.time == 17
        assert np.array_equal(back.occ, s.occ)
