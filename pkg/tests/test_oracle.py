import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import ContractViolation, UnassignedSiteError
from interaction import InteractionModel, NearestNeighborKernel
from lattice import ball
from oracle import (
    MAX_VOLUME,
    condition_table,
    conditional_consistency,
    exact_finite_gibbs,
    magnetization,
    pair_correlation,
    site_conditional,
    transfer_matrix_1d,
)
from rates import gibbs_conditional

CHAIN = [(x,) for x in range(12)]


def draw(table, count, seed):
    gen = np.random.default_rng(seed)
    rows = gen.choice(len(table.probs), size=count, p=table.probs)
    return [dict(zip(table.volume, (int(s) for s in table.configs[r]))) for r in rows]


class TestEnumeration:
    def test_free_model_is_uniform(self, free_model):
        table = exact_finite_gibbs(free_model, CHAIN[:5])
        assert_allclose(table.probs, np.full(32, 1 / 32))

    def test_center_conditional(self, nn_model):
        table = exact_finite_gibbs(nn_model, [(-1,), (0,), (1,)])
        p = site_conditional(table, (0,), {(-1,): 1, (0,): 1, (1,): 1})
        assert_allclose(p, 0.54983, atol=1e-5)

    def test_matches_gibbs_conditional(self, plaquette_model):
        o = plaquette_model.origin
        table = exact_finite_gibbs(plaquette_model, ball(o, 2))
        gen = np.random.default_rng(0)
        for _ in range(20):
            config = {s: int(v) for s, v in zip(table.volume, gen.choice([-1, 1], size=len(table.volume)))}
            config[o] = 1
            assert_allclose(site_conditional(table, o, config), gibbs_conditional(plaquette_model, o, config), rtol=1e-12)

    def test_open_chain_correlations(self, nn_model):
        table = exact_finite_gibbs(nn_model, CHAIN)
        for r in range(1, 6):
            assert_allclose(pair_correlation(table, (3,), (3 + r,)), math.tanh(0.05) ** r, rtol=1e-10)
        assert abs(magnetization(table, (4,))) < 1e-14

    def test_plus_boundary_magnetizes(self, nn_model):
        table = exact_finite_gibbs(nn_model, CHAIN[:4], boundary={(-1,): 1, (4,): 1})
        assert magnetization(table, (0,)) > 0.0
        assert magnetization(table, (0,)) > magnetization(table, (1,))

    def test_boundary_must_cover_escaping_sets(self, nn_model):
        with pytest.raises(UnassignedSiteError):
            exact_finite_gibbs(nn_model, CHAIN[:4], boundary={(-1,): 1})

    def test_infinite_range_needs_radius(self, exp_model):
        with pytest.raises(ContractViolation):
            exact_finite_gibbs(exp_model, CHAIN[:4])
        table = exact_finite_gibbs(exp_model, CHAIN[:4], radius=3)
        assert table.remainder > 0.0
        assert_allclose(table.probs.sum(), 1.0)

    def test_volume_limit(self, nn_model):
        with pytest.raises(ContractViolation):
            exact_finite_gibbs(nn_model, [(x,) for x in range(MAX_VOLUME + 1)])
        with pytest.raises(ContractViolation):
            exact_finite_gibbs(nn_model, [])

    def test_condition_table(self, nn_model):
        table = exact_finite_gibbs(nn_model, CHAIN[:3])
        cond = condition_table(table, {(0,): 1, (2,): 1})
        assert cond.volume == ((1,),)
        assert_allclose(cond.probs.sum(), 1.0)
        with pytest.raises(ContractViolation):
            condition_table(table, {s: 1 for s in CHAIN[:3]})


class TestTransferMatrix:
    @pytest.mark.parametrize("r", [0, 1, 2, 5])
    def test_closed_form(self, r):
        assert_allclose(transfer_matrix_1d(0.05, 1.0, r), math.tanh(0.05) ** r, rtol=1e-10)

    def test_matches_long_chains(self, nn_model):
        for n in (12, 16):
            table = exact_finite_gibbs(nn_model, [(x,) for x in range(n)])
            mid = n // 2 - 1
            for r in (1, 2):
                assert_allclose(pair_correlation(table, (mid,), (mid + r,)), transfer_matrix_1d(0.05, 1.0, r), atol=1e-12)

    def test_negative_distance(self):
        with pytest.raises(ContractViolation):
            transfer_matrix_1d(0.05, 1.0, -1)


class TestConditionalConsistency:
    def test_gibbs_samples_pass(self, nn_model):
        table = exact_finite_gibbs(nn_model, CHAIN[:5])
        report = conditional_consistency(draw(table, 20000, 1), nn_model, (2,), 1)
        assert report.passed
        assert len(report.bins) == 4
        assert report.flagged == 0
        assert sum(b.count for b in report.bins) == 20000

    def test_wrong_temperature_is_caught(self, nn_model):
        hot = InteractionModel(NearestNeighborKernel(1, 1.0), 0.6)
        table = exact_finite_gibbs(hot, CHAIN[:5])
        report = conditional_consistency(draw(table, 20000, 2), nn_model, (2,), 1)
        assert not report.passed
        assert report.worst_z > report.threshold

    def test_sparse_bins_are_flagged(self, nn_model):
        table = exact_finite_gibbs(nn_model, CHAIN[:5])
        report = conditional_consistency(draw(table, 40, 3), nn_model, (2,), 1, min_count=30)
        assert report.flagged > 0

    def test_annulus_must_cover_range(self, plaquette_model):
        with pytest.raises(ContractViolation):
            conditional_consistency([], plaquette_model, (0, 0), 1)

    def test_missing_site(self, nn_model):
        with pytest.raises(UnassignedSiteError):
            conditional_consistency([{(0,): 1, (1,): 1}], nn_model, (1,), 1)
