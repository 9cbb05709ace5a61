import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from analysis import (
    BoundRow,
    covariance,
    dbar_bounds,
    discrepancy_bound,
    estimate_discrepancy,
    estimate_max_tail,
    max_tail_asymptote,
    mixing_check,
    rw_exponent,
    rw_phi,
    rw_spec,
    stopping_rows,
    supermartingale_violations,
    write_bound_csv,
)
from conftest import EXP_TOTAL
from errors import ConditionFailedError, ContractViolation
from interaction import ExplicitFamily, ExponentialKernel, InteractionModel, NearestNeighborKernel, gamma, tail_sum
from sketch import run_backward, stop_statistics


def nn_tail(m):
    """Closed form of P(M >= m) for the ±1/+2 walk at β = 0.05."""
    return 0.8435 * 0.594**m + 0.1565 * (-0.3727) ** m


class TestDiscrepancy:
    def test_finite_range_bound_vanishes(self, nn_model):
        assert discrepancy_bound(nn_model, 1) == 0.0
        est = estimate_discrepancy(nn_model, 1, (0,), replicas=300, seed=1)
        assert est.disagreements == 0
        assert est.passed

    def test_exponential_bound(self, exp_model):
        g = gamma(exp_model).low
        expected = -math.expm1(-0.05 * tail_sum(exp_model, (0,), 2)) / g
        assert_allclose(discrepancy_bound(exp_model, 2), expected)

    def test_estimate_below_bound(self, exp_model):
        est = estimate_discrepancy(exp_model, 1, (0,), replicas=3000, seed=2, threads=2)
        assert est.count == 3000
        assert est.ci_low <= est.estimate <= est.ci_high
        assert est.passed
        row = est.row()
        assert row.quantity == "discrepancy" and row.parameter == "L=1"

    def test_needs_positive_gamma(self, nn_hot):
        with pytest.raises(ConditionFailedError):
            discrepancy_bound(nn_hot, 1)

    def test_needs_translation_invariance(self):
        m = InteractionModel(ExplicitFamily(1, [([(0,), (1,)], 1.0)]), 0.1)
        with pytest.raises(ContractViolation):
            discrepancy_bound(m, 1)


class TestDbar:
    def test_exponential(self, exp_model):
        for L in (1, 2, 4, 8):
            b = dbar_bounds(exp_model, L)
            assert b.bound2_available
            assert_allclose(b.r, 0.05 * EXP_TOTAL)
            assert_allclose(b.bound2, 0.05 / (1 - b.r) * tail_sum(exp_model, (0,), L))
            assert b.ordered == (b.bound1 <= b.bound2)

    def test_decreasing_in_L(self, exp_model):
        bounds = [dbar_bounds(exp_model, L) for L in (1, 2, 4, 8)]
        assert all(a.bound1 > b.bound1 for a, b in zip(bounds, bounds[1:]))
        assert all(a.bound2 > b.bound2 for a, b in zip(bounds, bounds[1:]))

    def test_dobrushin_bound_without_positive_gamma(self):
        m = InteractionModel(ExponentialKernel(1, 1.0, 1.0), 0.3)
        b = dbar_bounds(m, 2)
        assert b.gamma.high < 0.0
        assert not b.bound1_available and b.bound1 is None
        assert b.bound2_available
        assert_allclose(b.r, 0.3 * EXP_TOTAL)
        assert_allclose(b.bound2, 0.3 / (1 - b.r) * tail_sum(m, (0,), 2))
        assert b.ordered is None

    def test_dobrushin_bound_refused_when_r_reaches_one(self):
        m = InteractionModel(NearestNeighborKernel(1, 1.0), 0.6)
        b = dbar_bounds(m, 1)
        assert_allclose(b.r, 1.2)
        assert not b.bound2_available and b.bound2 is None
        assert not b.bound1_available
        assert b.ordered is None


class TestRandomWalk:
    def test_phi_at_zero(self, nn_model, exp_model):
        for m in (nn_model, exp_model):
            assert rw_phi(m, 0.0).contains(1.0, tol=1e-9)

    def test_nearest_neighbor_exponent(self, nn_model):
        # root of λ0 e^{-ρ} + λ1 e^{2ρ} = 1 other than 0
        lam1 = 1 - math.exp(-0.2)
        x = (-lam1 + math.sqrt(lam1**2 + 4 * lam1 * (1 - lam1))) / (2 * lam1)
        exp_ = rw_exponent(nn_model)
        assert not exp_.unbounded
        assert_allclose(exp_.rho, math.log(x), rtol=1e-6)
        assert_allclose(exp_.rho, 0.5207, atol=2e-4)
        assert_allclose(exp_.drift, -gamma(nn_model).mid)

    def test_exponential_kernel_exponent(self, exp_model):
        rho = rw_exponent(exp_model).rho
        assert 0.0 < rho < 0.5
        assert rw_phi(exp_model, rho).high <= 1.0

    def test_heavy_tail_has_zero_exponent(self, power_model):
        assert rw_exponent(power_model).rho == 0.0

    def test_free_model_is_unbounded(self, free_model):
        assert rw_exponent(free_model).unbounded

    def test_increment_law(self, nn_model, exp_model):
        spec = rw_spec(nn_model)
        assert list(spec.increments) == [-1, 2]
        assert_allclose(spec.probabilities, [math.exp(-0.2), 1 - math.exp(-0.2)])
        mean = float(np.sum(spec.probabilities * spec.increments))
        assert_allclose(mean, -gamma(nn_model).mid, atol=1e-12)
        spec = rw_spec(exp_model)
        assert spec.tail_mass <= 1e-15
        draws = spec.draw(np.random.default_rng(0).random(200000))
        assert abs(draws.mean() + gamma(exp_model).mid) < 0.02


class TestMaxTail:
    def test_nearest_neighbor_closed_form(self, nn_model):
        n = 100000
        tail = estimate_max_tail(nn_model, [1, 2, 3, 5], replicas=n, seed=3, threads=2)
        assert tail.replicas == n
        for level, p in zip(tail.thresholds, tail.probabilities):
            exact = nn_tail(level)
            assert abs(p - exact) < 4 * math.sqrt(exact * (1 - exact) / n) + 1e-6
        assert tail.ci_low[0] <= tail.probabilities[0] <= tail.ci_high[0]

    def test_log_slope_matches_exponent(self, nn_model):
        tail = estimate_max_tail(nn_model, [1], replicas=200000, seed=4)
        slope = tail.log_slope(range(2, 9))
        assert abs(slope + tail.rho) < 0.2 * tail.rho

    def test_free_model_never_climbs(self, free_model):
        tail = estimate_max_tail(free_model, [1], replicas=1000, seed=5)
        assert tail.counts == (0,)
        assert tail.mean_exp_rho_m() == 1.0

    def test_heavy_tail_needs_horizon(self, power_model):
        with pytest.raises(ContractViolation):
            estimate_max_tail(power_model, [1], replicas=100, seed=6)
        tail = estimate_max_tail(power_model, [1, 3], replicas=2000, seed=6, horizon=200)
        assert tail.horizon == 200
        assert 0.0 < tail.bias_bound <= 1.0
        assert tail.probabilities[0] >= tail.probabilities[1]

    def test_deterministic(self, exp_model):
        a = estimate_max_tail(exp_model, [1, 2], replicas=5000, seed=7, threads=1)
        b = estimate_max_tail(exp_model, [1, 2], replicas=5000, seed=7, threads=3)
        assert a.counts == b.counts
        assert np.array_equal(a.maxima, b.maxima)


class TestMixing:
    def test_rejects_overlapping_supports(self, nn_model):
        with pytest.raises(ContractViolation):
            mixing_check(nn_model, [0], replicas=10, seed=1)

    def test_envelope_holds(self, nn_model):
        report = mixing_check(nn_model, [2, 3], replicas=4000, seed=8, walk_replicas=50000)
        assert [r.R for r in report.rows] == [2, 3]
        assert [r.half for r in report.rows] == [1, 2]
        assert [r.odd for r in report.rows] == [False, True]
        for row in report.rows:
            assert row.passed
            assert abs(row.covariance) <= 8 * row.tail + 3 * row.se
        assert report.mean_exp_rho_m >= 1.0

    def test_covariance_of_independent_signs(self):
        gen = np.random.default_rng(9)
        xs = gen.choice([-1.0, 1.0], size=20000)
        ys = gen.choice([-1.0, 1.0], size=20000)
        cov, se = covariance(xs, ys)
        assert abs(cov) < 4 * se
        assert_allclose(covariance(xs, xs)[0], xs.var(), rtol=1e-12)


class TestHeavyTailExpression:
    def test_methods_agree(self, power_model):
        for n in (1, 3, 6):
            shells = max_tail_asymptote(power_model, n, "shells")
            integrated = max_tail_asymptote(power_model, n, "integrated")
            assert shells > 0.0
            assert abs(shells - integrated) <= 1e-10

    def test_finite_range(self, nn_model):
        assert max_tail_asymptote(nn_model, 1) == 0.0
        assert max_tail_asymptote(nn_model, 1, "integrated") == 0.0
        three_lam1 = 3 * (1 - math.exp(-0.2)) / gamma(nn_model).mid
        assert_allclose(max_tail_asymptote(nn_model, 0), three_lam1)
        assert_allclose(max_tail_asymptote(nn_model, 0, "integrated"), three_lam1)

    def test_decreasing_in_n(self, power_model):
        values = [max_tail_asymptote(power_model, n) for n in range(1, 8)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_unknown_method(self, power_model):
        with pytest.raises(ContractViolation):
            max_tail_asymptote(power_model, 2, "simpson")


def test_supermartingale_domination(exp_model, plaquette_model):
    for m in (exp_model, plaquette_model):
        for replica in range(100):
            rec = run_backward(m, [m.origin], seed=10, replica=replica)
            assert supermartingale_violations(m, rec) == 0


def test_stopping_rows(nn_model):
    records = [run_backward(nn_model, [(0,)], seed=11, replica=r) for r in range(3000)]
    rows = stopping_rows(stop_statistics(records, grid=[1.0, 2.0]), gamma(nn_model))
    assert [r.quantity for r in rows] == ["mean_n_stop", "t_stop_survival", "t_stop_survival"]
    assert all(r.passed for r in rows)


def test_bound_csv_format():
    rows = [
        BoundRow("discrepancy", "L=1", 0.25, 0.2, 0.3, 0.5, True),
        BoundRow("rho", "", 0.5, passed=None),
    ]
    buf = io.StringIO()
    write_bound_csv(rows, buf)
    assert buf.getvalue() == (
        "quantity,parameter,value,ci_low,ci_high,bound,pass\n"
        "discrepancy,L=1,0.25,0.2,0.3,0.5,true\n"
        "rho,,0.5,,,,\n"
    )
