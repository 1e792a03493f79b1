import json

import numpy as np
import pytest

from qcp.kernel import (KernelSpec, build_kernel, density, discretize,
                        marginal_1d, sample_offset)

from conftest import seeded


def overlap_area(cell, square):
    """Oracle: exact area of the intersection of two axis rectangles."""
    w = max(0.0, min(cell[2], square[2]) - max(cell[0], square[0]))
    h = max(0.0, min(cell[3], square[3]) - max(cell[1], square[1]))
    return w * h


class TestBuildKernel:
    def test_uniform_square_density(self):
        spec = build_kernel(KernelSpec("uniform-square", {"radius": 1.0}))
        assert density(spec, 0.3, -0.7) == 0.25
        assert density(spec, 1.2, 0.0) == 0.0

    def test_gaussian_renormalized(self):
        spec = build_kernel(KernelSpec("truncated-gaussian",
                                       {"sigma": 1.0, "cutoff": 3.0}))
        # total mass over a fine grid approaches 1
        xs = np.linspace(-3.2, 3.2, 801)
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        total = density(spec, gx, gy).sum() * (xs[1] - xs[0]) ** 2
        assert abs(total - 1.0) < 1e-3

    @pytest.mark.parametrize("params", [
        {"radius": -1.0}, {"radius": 0.0}, {"radius": float("inf")}])
    def test_bad_uniform_params(self, params):
        with pytest.raises(ValueError):
            build_kernel(KernelSpec("uniform-square", params))

    def test_asymmetric_table_rejected(self):
        entries = [(0.5, 0.0, 0.6), (-0.5, 0.0, 0.4)]
        with pytest.raises(ValueError, match="symmetric"):
            build_kernel(KernelSpec("table", {"entries": entries}))

    def test_table_mass_must_be_one(self):
        entries = [(0.0, 0.0, 0.5)]
        with pytest.raises(ValueError, match="sum"):
            build_kernel(KernelSpec("table", {"entries": entries}))

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            build_kernel(KernelSpec("cauchy", {}))

    def test_json_round_trip(self):
        spec = build_kernel(KernelSpec("uniform-square", {"radius": 2.0}))
        again = KernelSpec.from_json(spec.to_json())
        assert again == spec


class TestDiscretize:
    def test_uniform_square_l1_cell_areas(self, square_spec):
        # oracle: integrate the density over each half-open unit cell by
        # exact rectangle intersection
        dk = discretize(square_spec, 1)
        assert len(dk.masses) == 9
        table = {tuple(o): m for o, m in zip(dk.offsets, dk.masses)}
        for (i, j), mass in table.items():
            cell = (i - 0.5, j - 0.5, i + 0.5, j + 0.5)
            expect = overlap_area(cell, (-1, -1, 1, 1)) * 0.25
            assert mass == pytest.approx(expect, abs=1e-15)
        assert table[(0, 0)] == pytest.approx(0.25)
        assert table[(1, 0)] == pytest.approx(0.125)
        assert table[(1, 1)] == pytest.approx(0.0625)

    def test_total_variation_shrinks_with_l(self):
        # oracle: compare rescaled masses with the pointwise density; the
        # distance is carried by boundary cells (and curvature for the
        # gaussian) and shrinks as the grid refines
        square = build_kernel(KernelSpec("uniform-square", {"radius": 0.9}))
        gauss = build_kernel(KernelSpec("truncated-gaussian",
                                        {"sigma": 0.7, "cutoff": 2.0}))
        for spec in (square, gauss):
            tvs = []
            for L in (4, 16, 64):
                dk = discretize(spec, L)
                h = 1.0 / L
                pts = dk.offsets * h
                dens = density(spec, pts[:, 0], pts[:, 1]) * h * h
                tvs.append(0.5 * float(np.abs(dk.masses - dens).sum()))
            assert tvs[0] > tvs[1] > tvs[2]

    def test_point_mass_table(self, point_mass_spec):
        for L in (1, 7, 32):
            dk = discretize(point_mass_spec, L)
            assert len(dk.masses) == 1
            assert tuple(dk.offsets[0]) == (0, 0)
            assert dk.masses[0] == 1.0
            assert dk.support_diameter == 0.0

    @pytest.mark.parametrize("family,params", [
        ("uniform-square", {"radius": 1.0}),
        ("uniform-square", {"radius": 0.7}),
        ("truncated-gaussian", {"sigma": 1.0, "cutoff": 2.5}),
    ])
    @pytest.mark.parametrize("L", [1, 3, 8])
    def test_invariants(self, family, params, L):
        dk = discretize(KernelSpec(family, params), L)
        assert abs(dk.masses.sum() - 1.0) <= 1e-12
        table = {tuple(o): m for o, m in zip(dk.offsets, dk.masses)}
        for (i, j), m in table.items():
            assert table[(-i, j)] == m
            assert table[(i, -j)] == m
        # support diameter equals the max pairwise separation, brute force
        pts = dk.offsets / dk.L
        pair = max(np.hypot(*(a - b)) for a in pts for b in pts)
        assert dk.support_diameter == pytest.approx(pair, abs=1e-12)

    def test_bad_resolution(self, square_spec):
        with pytest.raises(ValueError):
            discretize(square_spec, 0)


class TestMarginal:
    def test_axis_uniform(self, dk1):
        k1 = marginal_1d(dk1, (1.0, 0.0), 1.0)
        assert np.allclose(k1.masses, [0.25, 0.5, 0.25])

    def test_reflected_direction_identical(self, dk8):
        a = marginal_1d(dk8, (1.0, 0.0), 0.05)
        b = marginal_1d(dk8, (-1.0, 0.0), 0.05)
        assert np.array_equal(a.masses, b.masses)

    def test_diagonal_triangular(self, dk8):
        xi = np.array([1.0, 1.0]) / np.sqrt(2.0)
        # bin width matched to the projected lattice so every projection
        # (i + j) / (L sqrt 2) sits at a bin center
        delta = 1.0 / (dk8.L * np.sqrt(2.0))
        k1 = marginal_1d(dk8, xi, delta)
        # oracle: bin every offset's projection by brute force
        hw = k1.halfwidth
        raw = np.zeros(2 * hw + 1)
        for (i, j), m in zip(dk8.offsets, dk8.masses):
            t = (i * xi[0] + j * xi[1]) / dk8.L
            raw[int(np.floor(t / delta + 0.5)) + hw] += m
        raw = 0.5 * (raw + raw[::-1])
        assert np.allclose(k1.masses, raw, atol=1e-15)
        # triangular shape: rises to the middle, support within sqrt(2)
        mid = hw
        assert k1.masses[mid] == k1.masses.max()
        assert np.all(np.diff(k1.masses[:mid + 1]) >= -1e-15)
        support = np.nonzero(k1.masses > 0)[0]
        assert (support[0] - hw) * delta >= -np.sqrt(2) - delta
        assert (support[-1] - hw) * delta <= np.sqrt(2) + delta

    def test_mass_conserved_and_even(self, dk8):
        for ang in (0.0, 20.0, 45.0, 77.0):
            xi = (np.cos(np.deg2rad(ang)), np.sin(np.deg2rad(ang)))
            k1 = marginal_1d(dk8, xi, 0.04)
            assert abs(k1.masses.sum() - 1.0) <= 1e-12
            assert np.array_equal(k1.masses, k1.masses[::-1])

    def test_bad_delta(self, dk8):
        with pytest.raises(ValueError):
            marginal_1d(dk8, (1.0, 0.0), 0.0)

    def test_non_unit_direction(self, dk8):
        with pytest.raises(ValueError):
            marginal_1d(dk8, (1.0, 1.0), 0.05)


class TestSampling:
    def test_point_mass_always_origin(self, point_mass_spec):
        dk = discretize(point_mass_spec, 4)
        pts = sample_offset(dk, seeded(0), size=100)
        assert np.all(pts == 0.0)

    def test_deterministic_given_state(self, dk8):
        a = sample_offset(dk8, seeded(123), size=1000)
        b = sample_offset(dk8, seeded(123), size=1000)
        assert np.array_equal(a, b)

    def test_multinomial_frequencies(self, dk1):
        n = 10 ** 6
        pts = sample_offset(dk1, seeded(7), size=n)
        for (i, j), m in zip(dk1.offsets, dk1.masses):
            freq = np.mean((pts[:, 0] == i) & (pts[:, 1] == j))
            sigma = np.sqrt(m * (1 - m) / n)
            assert abs(freq - m) < 4 * sigma

    def test_csv_dump(self, dk1, tmp_path):
        path = tmp_path / "kernel.csv"
        dk1.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "dx,dy,mass"
        assert len(lines) == 10
        total = sum(float(ln.split(",")[2]) for ln in lines[1:])
        assert abs(total - 1.0) < 1e-12
