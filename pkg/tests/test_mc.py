import math

import numpy as np
import pytest

from pdmpval.errors import InputError
from pdmpval.loan import LoanParams
from pdmpval.mc import mc_reference, ruin_probability, simulate_path

C, RHO, B, LAM, ALPHA, DELTA = 5.0, 0.05, 3.24289, 4.0, 1.0, 0.02


def path_rng(seed):
    return np.random.Generator(np.random.Philox(seed=np.random.SeedSequence(seed)))


class TestSimulatePath:
    def test_start_at_absorbing_edge(self, loan_params):
        res = simulate_path(loan_params, -C / RHO, path_rng(1))
        assert res.discounted_dividends == 0.0
        assert res.ruin_time == 0.0 and res.jumps_used == 0

    def test_no_jumps_perpetuity(self):
        params = LoanParams(lam=1e-12)  # effectively jump-free
        res = simulate_path(params, B, path_rng(2), max_jumps=4)
        assert res.discounted_dividends == pytest.approx(C / DELTA, rel=1e-6)

    def test_annuity_before_first_jump(self, loan_params):
        # replay the same stream to recover the first inter-jump time
        res = simulate_path(loan_params, B, path_rng(3), max_jumps=1)
        t1 = path_rng(3).exponential(1.0 / LAM)
        expect = C / DELTA * (1.0 - math.exp(-DELTA * t1))
        assert res.discounted_dividends == pytest.approx(expect, rel=1e-12)

    def test_dividends_bounded(self, loan_params):
        rng = path_rng(4)
        for _ in range(200):
            res = simulate_path(loan_params, 0.0, rng, max_jumps=64)
            assert 0.0 <= res.discounted_dividends <= C / DELTA

    def test_truncation_flagged(self, loan_params):
        res = simulate_path(loan_params, B, path_rng(5), max_jumps=3)
        assert res.truncated and res.jumps_used == 3 and res.ruin_time == math.inf

    def test_paths_never_reaching_barrier_pay_zero(self, loan_params):
        # from -99 the climb to b takes ~92 time units; one exp(4) inter-jump
        # time never gets there
        rng = path_rng(6)
        for _ in range(500):
            res = simulate_path(loan_params, -99.0, rng, max_jumps=1)
            assert res.discounted_dividends == 0.0

    def test_start_above_barrier_rejected(self, loan_params):
        with pytest.raises(InputError):
            simulate_path(loan_params, B + 1.0, path_rng(7))


class TestMCReference:
    def test_single_path(self, loan_params):
        est = mc_reference(loan_params, 0.0, 1, seed=8, max_jumps=16)
        assert est.std_error is None and est.M == 1

    def test_no_jump_degenerate_model_zero_variance(self):
        params = LoanParams(lam=1e-12)
        est = mc_reference(params, B, 64, seed=0, max_jumps=8)
        assert est.value == pytest.approx(C / DELTA, rel=1e-6)
        assert est.std_error == pytest.approx(0.0, abs=1e-9)

    def test_deterministic_for_fixed_seed(self, loan_params):
        a = mc_reference(loan_params, 0.0, 20_000, seed=13, max_jumps=32)
        b = mc_reference(loan_params, 0.0, 20_000, seed=13, max_jumps=32)
        assert a.value == b.value and a.std_error == b.std_error

    def test_chunking_invariance(self, loan_params):
        # the first 8192-path chunk is shared between runs of different sizes
        small = mc_reference(loan_params, 0.0, 8192, seed=21, max_jumps=16)
        big = mc_reference(loan_params, 0.0, 16384, seed=21, max_jumps=16)
        assert small.value != big.value  # more paths actually used
        again = mc_reference(loan_params, 0.0, 8192, seed=21, max_jumps=16)
        assert small.value == again.value

    def test_bounds(self, loan_params):
        est = mc_reference(loan_params, 0.0, 5000, seed=1, max_jumps=64)
        assert 0.0 <= est.value <= C / DELTA
        assert est.std_error > 0.0
        assert est.bias_bound == pytest.approx(250.0 * (4.0 / 4.02) ** 64, rel=1e-12)

    def test_monotone_in_start_value_coupled(self, loan_params):
        # identical streams across start values couple the paths
        means = [mc_reference(loan_params, x0, 1000, seed=5, max_jumps=64).value
                 for x0 in (-50.0, 0.0, 1.0, B)]
        assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))

    def test_matches_simulate_path_scale(self, loan_params):
        # vectorised engine against the scalar reference on aggregate scale
        est = mc_reference(loan_params, 0.0, 4000, seed=3, max_jumps=64)
        rng = path_rng(99)
        scalar = np.mean([simulate_path(loan_params, 0.0, rng, max_jumps=64).discounted_dividends
                          for _ in range(4000)])
        scalar_se = est.std_error * math.sqrt(2.0)
        assert abs(est.value - scalar) <= 4.0 * scalar_se

    def test_start_above_barrier_rejected(self, loan_params):
        with pytest.raises(InputError):
            mc_reference(loan_params, B + 0.1, 10, seed=0)


class TestRuinProbability:
    def test_classical_closed_form(self):
        # exponential claims: psi(x) = (lam/(c alpha)) exp(-(alpha - lam/c) x)
        p_hat, se = ruin_probability(C, LAM, ALPHA, 0.0, horizon=200.0,
                                     n_paths=20_000, seed=4)
        assert p_hat == pytest.approx(0.8, abs=max(0.02, 4 * se))

    def test_decays_in_initial_capital(self):
        p2, se2 = ruin_probability(C, LAM, ALPHA, 2.0, horizon=200.0,
                                   n_paths=20_000, seed=4)
        expect = 0.8 * math.exp(-0.2 * 2.0)
        assert p2 == pytest.approx(expect, abs=max(0.02, 4 * se2))

    def test_validation(self):
        with pytest.raises(InputError):
            ruin_probability(C, LAM, ALPHA, 0.0, horizon=0.0, n_paths=10)
        with pytest.raises(InputError):
            ruin_probability(C, LAM, ALPHA, 0.0, horizon=1.0, n_paths=0)
