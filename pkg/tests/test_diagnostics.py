"""
Unit tests for GCS residuals and the simulated envelope.
"""

import math
import os
import sys
import unittest

import numpy as np

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from config import defaults
from config.classes import GeneratorFamily, OptimOptions, Theta, TobitDataset
from core.diagnostics import gcs_residuals, gcs_residuals_at, qq_envelope, simulate_response
from core.errors import ConvergenceError
from core.inference import fit
from evaluation.monte_carlo import simulate_dataset
from utils.functions import substream

NORMAL = GeneratorFamily.of("normal")


class TestResiduals(unittest.TestCase):

    def test_median_response_gives_log_two(self):
        for family in (NORMAL, GeneratorFamily.of("student-t", 4), GeneratorFamily.of("power-exponential", 0.5),
                       GeneratorFamily.of("birnbaum-saunders", 0.5)):
            with self.subTest(family=family.label):
                data = TobitDataset(y=[1.0], censored=[False], X=[[1.0]], gamma=0.0)
                theta = Theta(beta=[1.0], phi=None if family.fixed_phi else 1.0, family=family)
                report = gcs_residuals_at(theta, data)
                self.assertAlmostEqual(report.residuals[0], math.log(2.0), places=12)

    def test_unit_exponential_at_the_true_parameters(self):
        rng = substream(401)
        n = 2000
        X = np.column_stack([np.ones(n), rng.uniform(size=n)])
        y = X @ [1.0, 2.0] + 0.5 * rng.standard_normal(n)
        data = TobitDataset(y=y, censored=np.zeros(n, bool), X=X, gamma=y.min() - 1.0)
        report = gcs_residuals_at(Theta(beta=[1.0, 2.0], phi=0.5, family=NORMAL), data)
        self.assertAlmostEqual(float(np.mean(report.residuals)), 1.0, delta=0.1)
        self.assertGreater(report.ks_pvalue, 0.001)
        self.assertFalse(report.adjusted)

    def test_censoring_adjustment_shifts_censored_rows(self):
        data = simulate_dataset(NORMAL, 40, (1.0, 2.0), 0.8, 0.3, substream(402))
        fitted = fit(data, NORMAL)
        plain = gcs_residuals(fitted, data)
        adjusted = gcs_residuals(fitted, data, censoring_adjustment=True)
        shift = np.array(adjusted.residuals) - np.array(plain.residuals)
        np.testing.assert_allclose(shift, np.where(data.censored, 1.0, 0.0), atol=1e-14)
        self.assertEqual(plain.censored_flags, data.censored.tolist())
        self.assertTrue(adjusted.adjusted)

    def test_extreme_residuals_are_capped(self):
        data = TobitDataset(y=[40.0, 0.5], censored=[False, False], X=[[1.0], [1.0]], gamma=-1.0)
        report = gcs_residuals_at(Theta(beta=[0.0], phi=1.0, family=NORMAL), data)
        self.assertEqual(report.capped_flags, [True, False])
        self.assertEqual(report.residuals[0], defaults.RESIDUAL_CAP)
        self.assertIn("residuals-capped: 1", report.warning_flags)

    def test_normal_fit_to_heavy_tails_is_detected(self):
        heavy = GeneratorFamily.of("student-t", 2)
        worse = 0
        replications = 50
        for r in range(replications):
            data = simulate_dataset(heavy, 400, (1.0, 2.0), 1.0, 0.2, substream(404, r))
            wrong = gcs_residuals(fit(data, NORMAL, compute_se=False), data)
            right = gcs_residuals(fit(data, heavy, compute_se=False), data)
            worse += wrong.ks_statistic > right.ks_statistic
        self.assertGreaterEqual(worse / replications, 0.9)

    def test_non_converged_fit_is_rejected(self):
        data = simulate_dataset(NORMAL, 40, (1.0, 2.0), 0.8, 0.3, substream(403))
        fitted = fit(data, NORMAL, options=OptimOptions(max_iterations=1))
        self.assertFalse(fitted.converged)
        with self.assertRaises(ConvergenceError):
            gcs_residuals(fitted, data)


class TestEnvelope(unittest.TestCase):

    def setUp(self):
        self.data = simulate_dataset(NORMAL, 30, (1.0, 2.0), 0.8, 0.2, substream(501))
        self.fitted = fit(self.data, NORMAL)

    def test_simulated_response_keeps_the_design(self):
        simulated = simulate_response(self.fitted.theta_hat, self.data, substream(502))
        np.testing.assert_array_equal(simulated.X, self.data.X)
        self.assertEqual(simulated.gamma, self.data.gamma)
        np.testing.assert_array_equal(simulated.y[simulated.censored], self.data.gamma)

    def test_band_shape(self):
        band = qq_envelope(self.fitted, self.data, replications=19, level=0.9, seed=5)
        n = self.data.n
        self.assertEqual(len(band.observed), n)
        self.assertTrue(np.all(np.diff(band.observed) >= 0))
        self.assertTrue(np.all(np.diff(band.theoretical_quantiles) > 0))
        self.assertAlmostEqual(band.theoretical_quantiles[0], -math.log1p(-1.0 / (n + 1)), places=14)
        self.assertTrue(np.all(np.array(band.lower) <= np.array(band.upper)))
        self.assertEqual(band.replications, 19)
        self.assertEqual(sum(band.observed_censored), self.data.n_censored)
        self.assertTrue(0.0 <= band.observed_inside <= 1.0)

    def test_zero_level_collapses_to_the_median(self):
        band = qq_envelope(self.fitted, self.data, replications=9, level=0.0, seed=6)
        np.testing.assert_allclose(band.lower, band.median, rtol=0, atol=0)
        np.testing.assert_allclose(band.upper, band.median, rtol=0, atol=0)

    def test_worker_count_does_not_change_the_band(self):
        serial = qq_envelope(self.fitted, self.data, replications=12, seed=7, workers=1)
        threaded = qq_envelope(self.fitted, self.data, replications=12, seed=7, workers=3)
        self.assertEqual(serial.lower, threaded.lower)
        self.assertEqual(serial.upper, threaded.upper)
        self.assertEqual(serial.failures, threaded.failures)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            qq_envelope(self.fitted, self.data, replications=0)
        with self.assertRaises(ValueError):
            qq_envelope(self.fitted, self.data, replications=5, level=1.0)
        with self.assertRaises(ValueError):
            qq_envelope(self.fitted, self.data, replications=5, seed=None)


if __name__ == "__main__":
    unittest.main()
