import re

import numpy as np
import pytest
from importlib import resources
from scipy.stats import qmc

from pdmpval.cubature import (
    MC_CHUNK_NODES,
    CubatureSpec,
    RuleKind,
    cp_shift_vector,
    cranley_patterson_shift,
    first_primes,
    gauss_legendre,
    halton_column,
    halton_permutations,
    halton_scrambled_points,
    mc_chunk,
    mc_points,
    sobol_column,
    sobol_max_dim,
    sobol_points,
    star_discrepancy_1d,
    star_discrepancy_bruteforce,
)
from pdmpval.errors import InputError


class TestSobol:
    def test_first_point_is_half_everywhere(self):
        assert np.all(sobol_points(1, 64) == 0.5)

    def test_van_der_corput_prefix(self):
        assert np.array_equal(sobol_points(4, 1)[:, 0], [0.5, 0.25, 0.75, 0.125])

    def test_column_consistent_with_matrix(self):
        pts = sobol_points(100, 7)
        for j in range(7):
            assert np.array_equal(pts[:, j], sobol_column(j + 1, 1, 101))

    @pytest.mark.parametrize("d", [2, 3, 17, 64])
    def test_block_sets_match_scipy(self, d):
        # same points as the reference implementation, modulo ordering and the
        # skipped origin, on full dyadic blocks
        k = 9
        mine = np.sort(sobol_points(2 ** k - 1, d), axis=0)
        ref = np.sort(qmc.Sobol(d=d, scramble=False).random(2 ** k)[1:], axis=0)
        assert np.allclose(mine, ref, atol=1e-12)

    def test_prefix_star_discrepancy(self):
        for k in range(1, 13):
            dstar = star_discrepancy_1d(sobol_column(1, 1, 2 ** k + 1))
            assert dstar <= 2.0 ** (1 - k)

    def test_log_rate_bound(self):
        for k in range(1, 13):
            m = 2 ** k
            dstar = star_discrepancy_1d(sobol_column(1, 1, m + 1))
            assert dstar * m / (1 + k) <= 2.0

    def test_dimension_limit(self):
        assert sobol_max_dim() >= 1024
        with pytest.raises(InputError):
            sobol_points(4, sobol_max_dim() + 1)

    def test_coordinates_in_unit_interval(self):
        pts = sobol_points(1000, 1024)
        assert np.all(pts > 0.0) and np.all(pts < 1.0)

    def test_direction_file_format(self):
        text = resources.files("pdmpval.data").joinpath("sobol_directions.txt").read_text()
        lines = text.strip().splitlines()
        assert lines[0] == "2 1 0 1"
        assert lines[1] == "3 2 1 1 3"
        pat = re.compile(r"^\d+ \d+ \d+( \d+)+$")
        assert all(pat.match(ln) for ln in lines)
        # one line per dimension starting at 2, contiguous
        dims = [int(ln.split()[0]) for ln in lines]
        assert dims == list(range(2, 2 + len(lines)))


class TestHalton:
    def test_plain_prefixes(self):
        pts = halton_scrambled_points(4, 2)
        assert np.array_equal(pts[:, 0], [0.5, 0.25, 0.75, 0.125])
        assert pts[0, 1] == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_matches_scipy_plain(self):
        mine = halton_scrambled_points(32, 5)
        ref = qmc.Halton(d=5, scramble=False).random(33)[1:]
        assert np.allclose(mine, ref, atol=1e-12)

    def test_scramble_fixes_zero_off_corner(self):
        pts = halton_scrambled_points(200, 6, seed=123)
        assert np.all(pts > 0.0) and np.all(pts < 1.0)

    def test_scramble_deterministic_and_differs_from_plain(self):
        a = halton_scrambled_points(64, 4, seed=9)
        b = halton_scrambled_points(64, 4, seed=9)
        c = halton_scrambled_points(64, 4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_permutations_fix_zero(self):
        perms = halton_permutations(8, seed=5)
        for perm in perms:
            assert perm[0] == 0
            assert sorted(perm) == list(range(len(perm)))

    def test_log_rate_bound_first_two_bases(self):
        # D*(M) * M / (1 + log2 M) <= 2 for dyadic prefix sizes
        for dim in (1, 2):
            for k in range(1, 13):
                m = 2 ** k
                dstar = star_discrepancy_1d(halton_column(dim, 1, m + 1))
                assert dstar * m / (1 + k) <= 2.0

    def test_scramble_preserves_base3_prefix_discrepancy(self):
        # first 3^k points of the base-3 coordinate: digit permutations fixing 0
        # permute the full dyadic cells among themselves, so D* is unchanged
        for k in (2, 3, 4):
            m = 3 ** k
            plain = star_discrepancy_bruteforce(halton_column(2, 1, m + 1))
            for seed in (1, 2, 77):
                perms = halton_permutations(2, seed=seed)
                scr = star_discrepancy_bruteforce(halton_column(2, 1, m + 1, perms))
                assert scr == pytest.approx(plain, abs=1e-12)

    def test_primes(self):
        assert np.array_equal(first_primes(8), [2, 3, 5, 7, 11, 13, 17, 19])


class TestMC:
    def test_bit_identical_for_fixed_seed(self):
        a = mc_points(1000, 5, seed=42)
        b = mc_points(1000, 5, seed=42)
        assert np.array_equal(a, b)

    def test_chunked_prefix_stability(self):
        # values at node i depend only on (seed, replicate, i)
        full = mc_points(3 * MC_CHUNK_NODES, 2, seed=7)
        short = mc_points(MC_CHUNK_NODES + 500, 2, seed=7)
        assert np.array_equal(full[: MC_CHUNK_NODES + 500], short)
        block = mc_chunk(1, 500, 2, seed=7)
        assert np.array_equal(full[MC_CHUNK_NODES: MC_CHUNK_NODES + 500], block)

    def test_replicates_differ(self):
        a = mc_points(128, 3, seed=0, replicate=0)
        b = mc_points(128, 3, seed=0, replicate=1)
        assert not np.array_equal(a, b)

    def test_law_of_large_numbers(self):
        x = mc_points(1_000_000, 1, seed=1)
        assert abs(float(x.mean()) - 0.5) < 0.002

    def test_range(self):
        x = mc_points(10_000, 4, seed=3)
        assert np.all(x >= 0.0) and np.all(x < 1.0)


class TestCranleyPatterson:
    def test_zero_shift_is_identity(self):
        pts = sobol_points(64, 3)
        assert np.array_equal(cranley_patterson_shift(pts, shift=np.zeros(3)), pts)

    def test_wraparound(self):
        out = cranley_patterson_shift(np.array([[0.75]]), shift=[0.5])
        assert out[0, 0] == pytest.approx(0.25, abs=1e-15)

    def test_stays_in_unit_cube_and_preserves_differences(self, rng):
        pts = sobol_points(1000, 4)
        shifted = cranley_patterson_shift(pts, seed=11, replicate=2)
        assert np.all(shifted >= 0.0) and np.all(shifted < 1.0)
        i = rng.integers(0, 1000, 1000)
        j = rng.integers(0, 1000, 1000)
        d0 = np.mod(pts[i] - pts[j], 1.0)
        d1 = np.mod(shifted[i] - shifted[j], 1.0)
        assert np.max(np.abs(d0 - d1)) < 1e-12

    def test_seeded_shift_reproducible(self):
        assert np.array_equal(cp_shift_vector(6, 3, 1), cp_shift_vector(6, 3, 1))
        assert not np.array_equal(cp_shift_vector(6, 3, 1), cp_shift_vector(6, 3, 2))

    def test_requires_shift_or_seed(self):
        with pytest.raises(InputError):
            cranley_patterson_shift(np.zeros((2, 2)))


class TestGaussLegendre:
    def test_midpoint_rule(self):
        nodes, weights = gauss_legendre(1)
        assert np.array_equal(nodes, [0.5]) and np.array_equal(weights, [1.0])

    def test_two_point_rule(self):
        nodes, weights = gauss_legendre(2)
        ref = np.array([0.5 - 1.0 / (2.0 * np.sqrt(3.0)), 0.5 + 1.0 / (2.0 * np.sqrt(3.0))])
        assert np.allclose(np.sort(nodes), ref, atol=1e-15)
        assert np.allclose(weights, [0.5, 0.5], atol=1e-15)

    def test_cubic_exactness(self):
        nodes, weights = gauss_legendre(2)
        assert abs(float(np.dot(weights, nodes ** 3)) - 0.25) <= 1e-15

    @pytest.mark.parametrize("m", [1, 2, 5, 16, 64])
    def test_weights_positive_sum_one_nodes_interior(self, m):
        nodes, weights = gauss_legendre(m)
        assert np.all(weights > 0.0)
        assert abs(float(weights.sum()) - 1.0) <= 1e-14
        assert np.all((nodes > 0.0) & (nodes < 1.0))

    def test_polynomial_exactness_degree_2m_minus_1(self):
        m = 7
        nodes, weights = gauss_legendre(m)
        for k in range(2 * m):
            assert float(np.dot(weights, nodes ** k)) == pytest.approx(1.0 / (k + 1), abs=1e-13)

    def test_range_validation(self):
        with pytest.raises(InputError):
            gauss_legendre(0)
        with pytest.raises(InputError):
            gauss_legendre(65)


class TestStarDiscrepancy:
    def test_centered_equispaced(self):
        m = 10
        pts = (np.arange(m) + 0.5) / m
        assert star_discrepancy_1d(pts) == pytest.approx(1.0 / (2 * m), abs=1e-15)
        assert star_discrepancy_bruteforce(pts) == pytest.approx(1.0 / (2 * m), abs=1e-15)

    def test_single_point_at_origin(self):
        assert star_discrepancy_1d([0.0]) == pytest.approx(1.0, abs=1e-15)
        assert star_discrepancy_bruteforce(np.array([0.0])) == pytest.approx(1.0, abs=1e-15)

    def test_single_point_at_half(self):
        assert star_discrepancy_1d([0.5]) == pytest.approx(0.5, abs=1e-15)

    def test_2d_single_center_point(self):
        assert star_discrepancy_bruteforce(np.array([[0.5, 0.5]])) == pytest.approx(0.75, abs=1e-15)

    def test_1d_formula_matches_enumeration(self, rng):
        for _ in range(10):
            pts = rng.uniform(0.0, 1.0, rng.integers(1, 40))
            assert star_discrepancy_1d(pts) == pytest.approx(
                star_discrepancy_bruteforce(pts), abs=1e-13)

    def test_2d_product_grid(self):
        g = (np.arange(3) + 0.5) / 3.0
        pts = np.array([(x, y) for x in g for y in g])
        val = star_discrepancy_bruteforce(pts)
        # sup attained just above (5/6, 5/6): all 9 points inside, volume 25/36
        assert val == pytest.approx(1.0 - 25.0 / 36.0, abs=1e-12)

    def test_2d_halton_beats_random(self, rng):
        m = 256
        qmc_pts = halton_scrambled_points(m, 2)
        rnd = rng.uniform(size=(m, 2))
        assert star_discrepancy_bruteforce(qmc_pts) < star_discrepancy_bruteforce(rnd)

    def test_budget_enforced(self):
        with pytest.raises(InputError):
            star_discrepancy_bruteforce(np.zeros((10_001, 2)))
        with pytest.raises(InputError):
            star_discrepancy_bruteforce(np.zeros((1, 3)))


class TestCubatureSpec:
    def test_valid(self):
        spec = CubatureSpec(kind="sobol", M=128, d=64, seed=1, replicates=5)
        assert spec.kind is RuleKind.SOBOL

    def test_rejects_empty_rule(self):
        with pytest.raises(InputError):
            CubatureSpec(kind=RuleKind.MC, M=0, d=2)

    def test_rejects_bad_dimension(self):
        with pytest.raises(InputError):
            CubatureSpec(kind=RuleKind.SOBOL, M=8, d=0)
        with pytest.raises(InputError):
            CubatureSpec(kind=RuleKind.SOBOL, M=8, d=sobol_max_dim() + 1)

    def test_gauss_size_capped(self):
        with pytest.raises(InputError):
            CubatureSpec(kind=RuleKind.GAUSS_PRODUCT, M=65, d=2)
