"""
Unit tests for the BFGS maximizer, finite differences and starting values.
"""

import math
import os
import sys
import unittest

import numpy as np

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from config import defaults
from config.classes import GeneratorFamily, OptimOptions, TobitDataset
from core.errors import DataContractError, NumericalError
from core.optimizer import maximize, numerical_gradient, numerical_jacobian, starting_values
from utils.functions import substream


A = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]])
CENTER = np.array([1.0, -2.0, 0.5])


def bowl(x):
    d = np.asarray(x) - CENTER
    return -0.5 * float(d @ A @ d)


def bowl_gradient(x):
    return -A @ (np.asarray(x) - CENTER)


class TestMaximize(unittest.TestCase):

    def test_quadratic_bowl(self):
        result = maximize(bowl, bowl_gradient, [10.0, 10.0, -10.0])
        self.assertTrue(result.converged)
        self.assertEqual(result.message, "gradient tolerance reached")
        self.assertLessEqual(result.final_gradient_norm, result.gradient_tolerance)
        np.testing.assert_allclose(result.theta_hat, CENTER, atol=1e-7)
        self.assertAlmostEqual(result.loglik_at_max, 0.0, places=12)

    def test_start_at_the_maximum(self):
        result = maximize(bowl, bowl_gradient, CENTER)
        self.assertTrue(result.converged)
        self.assertEqual(result.iterations, 0)

    def test_deterministic(self):
        a = maximize(bowl, bowl_gradient, [3.0, 0.0, 0.0])
        b = maximize(bowl, bowl_gradient, [3.0, 0.0, 0.0])
        self.assertEqual(a.theta_hat, b.theta_hat)
        self.assertEqual(a.iterations, b.iterations)

    def test_iteration_limit(self):
        result = maximize(bowl, bowl_gradient, [10.0, 10.0, -10.0], OptimOptions(max_iterations=1))
        self.assertFalse(result.converged)
        self.assertEqual(result.iterations, 1)
        self.assertEqual(result.message, "maximum iterations reached")

    def test_line_search_failure_is_reported(self):
        # a gradient with the wrong sign makes every step a descent step
        result = maximize(bowl, lambda x: -bowl_gradient(x), [3.0, 0.0, 0.0])
        self.assertFalse(result.converged)
        self.assertEqual(result.message, "line search failed")

    def test_backtracks_out_of_the_support(self):
        def objective(x):
            return -(x[0] - 1.0) ** 2 if x[0] > 0.5 else defaults.LOGLIK_SENTINEL

        result = maximize(objective, lambda x: np.array([-2.0 * (x[0] - 1.0)]), [3.0])
        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.theta_hat[0], 1.0, places=8)

    def test_small_steps_still_update_the_curvature(self):
        # s'y stays far below 1e-10 here although the curvature is well defined
        scale = np.array([0.01, 1.0, 100.0])

        def f(x):
            return -0.5 * float(np.sum(scale * np.asarray(x) ** 2))

        result = maximize(f, lambda x: -scale * np.asarray(x), [1e-4, 1e-6, 1e-8])
        self.assertTrue(result.converged)
        self.assertEqual(result.skipped_updates, 0)
        self.assertLess(result.iterations, 100)

    def test_non_finite_start(self):
        with self.assertRaises(NumericalError):
            maximize(lambda x: math.nan, bowl_gradient, CENTER)

    def test_rosenbrock(self):
        def f(x):
            return -((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)

        def grad(x):
            return -np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])

        result = maximize(f, grad, [-1.2, 1.0], OptimOptions(max_iterations=2000, gradient_tolerance=1e-6))
        self.assertTrue(result.converged)
        np.testing.assert_allclose(result.theta_hat, [1.0, 1.0], atol=1e-5)


class TestFiniteDifferences(unittest.TestCase):

    def test_gradient_of_cubic(self):
        fd = numerical_gradient(lambda x: float(np.sum(x ** 3)), [1.0, 2.0])
        np.testing.assert_allclose(fd, [3.0, 12.0], rtol=1e-8)

    def test_jacobian(self):
        jac = numerical_jacobian(lambda x: np.array([x[0] * x[1], x[0] ** 2]), [2.0, 3.0])
        np.testing.assert_allclose(jac, [[3.0, 2.0], [4.0, 0.0]], atol=1e-8)

    def test_non_finite_evaluation_raises(self):
        with self.assertRaises(NumericalError):
            numerical_gradient(lambda x: math.inf if x[0] > 0 else 0.0, [0.0])
        with self.assertRaises(NumericalError):
            numerical_jacobian(lambda x: np.array([math.nan]), [1.0])


class TestStartingValues(unittest.TestCase):

    def setUp(self):
        rng = substream(3)
        self.X = np.column_stack([np.ones(30), rng.uniform(size=30)])
        self.latent = self.X @ [1.0, 2.0] + 0.5 * rng.standard_normal(30)

    def _data(self, latent, gamma):
        censored = latent <= gamma
        return TobitDataset(y=latent, censored=censored, X=self.X, gamma=gamma)

    def test_least_squares_on_uncensored_cases(self):
        gamma = float(np.quantile(self.latent, 0.3))
        data = self._data(self.latent, gamma)
        theta = starting_values(data, GeneratorFamily.of("normal"))
        keep = ~data.censored
        beta, *_ = np.linalg.lstsq(self.X[keep], self.latent[keep], rcond=None)
        np.testing.assert_allclose(theta.beta, beta, rtol=1e-10)
        self.assertAlmostEqual(theta.phi, float(np.std(self.latent[keep] - self.X[keep] @ beta)), places=12)

    def test_noiseless_data_hits_the_floor(self):
        latent = self.X @ [1.0, 2.0]
        theta = starting_values(self._data(latent, latent.min() - 1.0), GeneratorFamily.of("normal"))
        self.assertEqual(theta.phi, defaults.PHI_FLOOR)

    def test_intercept_only(self):
        y = np.array([0.3, 1.2, -0.4, 2.0])
        data = TobitDataset(y=y, censored=np.zeros(4, bool), X=np.ones((4, 1)), gamma=-5.0)
        theta = starting_values(data, GeneratorFamily.of("normal"))
        self.assertAlmostEqual(theta.beta[0], float(np.mean(y)), places=12)

    def test_extra_parameters(self):
        data = self._data(self.latent, self.latent.min() - 1.0)
        theta = starting_values(data, GeneratorFamily.of("student-t", 9), free_extra=(True,))
        self.assertEqual(theta.family.xi, (4.0,))
        theta = starting_values(data, GeneratorFamily.of("student-t", 9))
        self.assertEqual(theta.family.xi, (9.0,))
        theta = starting_values(data, GeneratorFamily.of("birnbaum-saunders", 0.3))
        self.assertIsNone(theta.phi)
        self.assertEqual(theta.free_extra, (True,))
        self.assertEqual(theta.family.xi, (1.0,))

    def test_too_few_uncensored_cases(self):
        gamma = float(np.sort(self.latent)[-3])
        with self.assertRaises(DataContractError):
            starting_values(self._data(self.latent, gamma), GeneratorFamily.of("normal"))

    def test_rank_deficient_design(self):
        X = np.column_stack([np.ones(10), np.ones(10)])
        data = TobitDataset(y=np.arange(10.0), censored=np.zeros(10, bool), X=X, gamma=-1.0)
        with self.assertRaises(DataContractError):
            starting_values(data, GeneratorFamily.of("normal"))


if __name__ == "__main__":
    unittest.main()
