"""Tests for block coordinate descent and the ablation variants."""

import itertools
import unittest

import numpy as np
import pytest

from prep_hin.config import PrepHyperparams
from prep_hin.counting import PathCountTable
from prep_hin.exceptions import ParameterError
from prep_hin.inference import (
    PrepInference,
    fit,
    pgd_update_phi,
    pgd_update_theta,
)
from prep_hin.model import PrepParameters, objective, sample_from_model
from tests.conftest import random_parameters, random_table


def small_hyperparams(**changes) -> PrepHyperparams:
    values = {
        "k": 2,
        "alpha": 2.0,
        "beta": 0.5,
        "delta": 1e-6,
        "max_outer": 25,
        "seed": 5,
    }
    values.update(changes)
    return PrepHyperparams(**values)


class TestBlockDescent(unittest.TestCase):
    """Test the outer loop on a small random table."""

    def setUp(self):
        """Set up a random table"""
        self.pc = random_table(np.random.default_rng(11), 10, 20, 3)

    def test_objective_never_increases(self):
        """Test every block update is a descent step"""
        result = PrepInference(self.pc, small_hyperparams()).run()
        values = [entry.objective for entry in result.trace]
        for before, after in itertools.pairwise(values):
            self.assertLessEqual(after, before + 1e-9 * abs(before))
        for entry in result.trace:
            for delta in entry.deltas():
                self.assertLessEqual(delta, 1e-9 * abs(entry.objective))

    def test_parameters_stay_feasible(self):
        """Test the fitted parameters satisfy the simplex bounds"""
        h = small_hyperparams()
        params = fit(self.pc, h)
        params.check(h.delta)
        self.assertTrue(np.all(params.rho > 0))

    def test_seed_makes_fits_repeatable(self):
        """Test equal seeds give identical fits"""
        h = small_hyperparams(max_outer=5)
        first = fit(self.pc, h)
        second = fit(self.pc, h)
        np.testing.assert_array_equal(first.phi, second.phi)
        np.testing.assert_array_equal(first.rho, second.rho)

    def test_trace_length_and_cap(self):
        """Test the loop stops at the iteration cap"""
        h = small_hyperparams(max_outer=3, outer_tol=0.0)
        result = PrepInference(self.pc, h).run()
        self.assertEqual(result.iterations, 3)
        self.assertFalse(result.converged)
        self.assertEqual(result.objective, result.trace[-1].objective)

    def test_parameter_convergence_rule(self):
        """Test the parameter-change stopping rule"""
        h = small_hyperparams(
            max_outer=500, convergence="parameters", outer_tol=1e-2
        )
        result = PrepInference(self.pc, h).run()
        self.assertTrue(result.converged)
        self.assertLess(result.iterations, 500)

    def test_threads_do_not_change_phi(self):
        """Test row chunks merge back in order"""
        one = fit(self.pc, small_hyperparams(max_outer=3, threads=1))
        many = fit(self.pc, small_hyperparams(max_outer=3, threads=3))
        np.testing.assert_allclose(one.phi, many.phi, rtol=1e-8)

    def test_alpha_is_resolved(self):
        """Test 'auto' alpha is estimated before fitting"""
        inference = PrepInference(self.pc, small_hyperparams(alpha="auto"))
        self.assertIsInstance(inference.h.alpha, float)


class TestProjectedGradientSteps:
    """Test the phi and theta blocks on their own."""

    def test_theta_step_descends(self, rng, hyper):
        """Test the theta block lowers O and stays on the simplex"""
        pc = random_table(rng)
        p = random_parameters(rng, pc)
        theta = pgd_update_theta(pc, p, hyper)
        np.testing.assert_allclose(theta.sum(axis=1), 1.0, atol=1e-12)
        assert objective(pc, p.replace(theta=theta), hyper) <= objective(
            pc, p, hyper
        )

    def test_phi_step_descends(self, rng, hyper):
        """Test the phi block lowers O and stays on the simplex"""
        pc = random_table(rng)
        p = random_parameters(rng, pc)
        phi = pgd_update_phi(pc, p, hyper)
        np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(phi >= hyper.delta)
        assert objective(pc, p.replace(phi=phi), hyper) <= objective(
            pc, p, hyper
        )

    def test_single_pattern_is_untouched(self, rng):
        """Test K=1 leaves phi at one"""
        pc = random_table(rng)
        p = random_parameters(rng, pc, k=1)
        h = PrepHyperparams(k=1, alpha=2.0, beta=0.5)
        np.testing.assert_array_equal(pgd_update_phi(pc, p, h), p.phi)


class TestVariants:
    """Test ablations keep their frozen blocks at the constants."""

    @pytest.fixture
    def table(self):
        return random_table(np.random.default_rng(19), 10, 20, 3)

    def test_without_node_visibility(self, table):
        """Test rho stays at one"""
        result = PrepInference(table, small_hyperparams(), "no-nv").run()
        np.testing.assert_array_equal(result.params.rho, 1.0)
        assert all(entry.rho == 0.0 for entry in result.trace)

    def test_without_path_selectivity(self, table):
        """Test eta stays at one"""
        result = PrepInference(table, small_hyperparams(), "no-ps").run()
        np.testing.assert_array_equal(result.params.eta, 1.0)

    def test_without_generating_patterns(self, table):
        """Test phi and theta stay uniform"""
        result = PrepInference(table, small_hyperparams(), "no-cs").run()
        np.testing.assert_array_equal(result.params.phi, 0.5)
        np.testing.assert_allclose(result.params.theta, 1.0 / 3.0)

    def test_extra_frozen_block(self, table):
        """Test freezing a block keeps its initial value"""
        inference = PrepInference(table, small_hyperparams(), frozen=["theta"])
        start = inference.initial_parameters()
        result = inference.run(start)
        np.testing.assert_array_equal(result.params.theta, start.theta)

    def test_unknown_variant(self, table):
        """Test unknown variant names are rejected"""
        with pytest.raises(ParameterError):
            PrepInference(table, small_hyperparams(), "no-xx")

    def test_unknown_frozen_block(self, table):
        """Test unknown block names are rejected"""
        with pytest.raises(ParameterError):
            PrepInference(table, small_hyperparams(), frozen=["gamma"])

    def test_empty_table(self):
        """Test fitting needs at least one pair"""
        empty = PathCountTable.from_rows([], metapath_ids=["m1"], node_ids=["a"])
        with pytest.raises(ParameterError):
            PrepInference(empty, small_hyperparams())


class TestGenerativeRecovery:
    """Test fitting counts drawn from the model itself."""

    def test_selectivity_is_recovered(self):
        """Test eta within 15% with one meta-path and one pattern"""
        rng = np.random.default_rng(2)
        num_nodes, num_pairs, alpha = 200, 2000, 50.0
        candidates = np.array(list(itertools.combinations(range(num_nodes), 2)))
        pairs = candidates[rng.choice(len(candidates), num_pairs, replace=False)]
        truth = PrepParameters(
            eta=[2.0],
            rho=np.full(num_nodes, alpha - 1.0),
            phi=np.ones((num_pairs, 1)),
            theta=[[1.0]],
        )
        h = PrepHyperparams(
            k=1, alpha=alpha, beta=0.5, delta=1e-6, max_outer=200, seed=1
        )
        pc = sample_from_model(truth, h, pairs)

        result = PrepInference(pc, h).run()
        assert result.params.eta[0] == pytest.approx(2.0, rel=0.15)
        assert result.objective <= objective(pc, truth, h)
