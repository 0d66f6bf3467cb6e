"""
Unit tests for the symmetric generators and log-symmetric laws.
"""

import math
import os
import sys
import unittest

import numpy as np
from scipy import stats
from scipy.integrate import quad

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from config.classes import GeneratorFamily, LogSymmetricParams
from core import lsdist
from core.errors import FamilyParameterError
from utils.functions import substream


FAMILIES = [
    GeneratorFamily.of("normal"),
    GeneratorFamily.of("student-t", 4),
    GeneratorFamily.of("student-t", 1),
    GeneratorFamily.of("power-exponential", 0.5),
    GeneratorFamily.of("power-exponential", 0.0),
    GeneratorFamily.of("power-exponential", -0.5),
    GeneratorFamily.of("birnbaum-saunders", 0.5),
    GeneratorFamily.of("birnbaum-saunders", 1.5),
    GeneratorFamily.of("birnbaum-saunders-t", 1.0, 4.0),
]


def _integrate(f, lo=-np.inf, hi=np.inf):
    """Integral split at zero so cusps and flat tops are resolved."""
    total = 0.0
    for a, b in ((lo, min(hi, 0.0)), (max(lo, 0.0), hi)):
        if a < b:
            total += quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return total


class TestFamilyValidation(unittest.TestCase):

    def test_out_of_range_extra_parameters(self):
        for kind, xi in [("student-t", (0.0,)), ("power-exponential", (1.5,)), ("power-exponential", (-1.0,)),
                         ("birnbaum-saunders", (-1.0,)), ("birnbaum-saunders-t", (1.0, 0.0))]:
            with self.assertRaises(ValueError, msg=kind):
                GeneratorFamily(kind=kind, xi=xi)

    def test_wrong_number_of_extras(self):
        with self.assertRaises(ValueError):
            GeneratorFamily.of("normal", 1.0)
        with self.assertRaises(ValueError):
            GeneratorFamily.of("birnbaum-saunders-t", 1.0)

    def test_bs_kinds_fix_the_dispersion(self):
        self.assertEqual(GeneratorFamily.of("birnbaum-saunders", 1.0).fixed_phi, 2.0)
        self.assertEqual(GeneratorFamily.of("birnbaum-saunders-t", 1.0, 4.0).fixed_phi, 2.0)
        self.assertIsNone(GeneratorFamily.of("student-t", 4).fixed_phi)

    def test_log_symmetric_params_need_positive_values(self):
        with self.assertRaises(ValueError):
            LogSymmetricParams(eta=0.0, phi=1.0, family=FAMILIES[0])
        with self.assertRaises(ValueError):
            LogSymmetricParams(eta=1.0, phi=-1.0, family=FAMILIES[0])


class TestNormalization(unittest.TestCase):

    def test_constant_examples(self):
        self.assertAlmostEqual(lsdist.normalizing_constant(GeneratorFamily.of("normal")), 0.3989423, places=7)
        self.assertAlmostEqual(lsdist.normalizing_constant(GeneratorFamily.of("student-t", 1)), 1 / math.pi, places=12)
        self.assertAlmostEqual(lsdist.normalizing_constant(GeneratorFamily.of("power-exponential", 0)),
                               1 / math.sqrt(2 * math.pi), places=12)

    def test_densities_integrate_to_one(self):
        for family in FAMILIES:
            with self.subTest(family=family.label):
                mass = _integrate(lambda z: lsdist.sym_pdf(family, z))
                self.assertAlmostEqual(mass, 1.0, delta=1e-8)

    def test_log_g_examples(self):
        self.assertAlmostEqual(lsdist.log_g(GeneratorFamily.of("normal"), 0.0), -0.9189385, places=7)
        laplace = GeneratorFamily.of("power-exponential", 1.0)
        c = lsdist.normalizing_constant(laplace)
        self.assertAlmostEqual(lsdist.log_g(laplace, 4.0), math.log(c) - 1.0, places=12)

    def test_student_t_approaches_normal(self):
        u = np.array([0.0, 0.5, 2.0, 5.0])
        far = lsdist.log_g(GeneratorFamily.of("student-t", 1e7), u)
        np.testing.assert_allclose(far, lsdist.log_g(GeneratorFamily.of("normal"), u), atol=1e-5)

    def test_negative_u_is_rejected(self):
        with self.assertRaises(FamilyParameterError):
            lsdist.log_g(FAMILIES[0], -0.1)


class TestSymmetricLaw(unittest.TestCase):

    def test_symmetry(self):
        z = np.linspace(-6, 6, 41)
        for family in FAMILIES:
            with self.subTest(family=family.label):
                np.testing.assert_array_equal(lsdist.sym_pdf(family, z), lsdist.sym_pdf(family, -z))
                np.testing.assert_allclose(lsdist.sym_cdf(family, z) + lsdist.sym_cdf(family, -z), 1.0, atol=1e-12)
                self.assertEqual(lsdist.sym_cdf(family, 0.0), 0.5)

    def test_cdf_derivative_matches_pdf(self):
        z = np.array([-2.5, -1.0, -0.3, 0.4, 1.7, 3.0])
        h = 1e-5
        for family in FAMILIES:
            with self.subTest(family=family.label):
                slope = (lsdist.sym_cdf(family, z + h) - lsdist.sym_cdf(family, z - h)) / (2 * h)
                np.testing.assert_allclose(slope, lsdist.sym_pdf(family, z), atol=1e-6)

    def test_cdf_matches_quadrature(self):
        for family in FAMILIES:
            for z in (-2.0, -0.5, 1.25):
                with self.subTest(family=family.label, z=z):
                    area = _integrate(lambda s: lsdist.sym_pdf(family, s), hi=z)
                    self.assertAlmostEqual(lsdist.sym_cdf(family, z), area, delta=1e-8)

    def test_cdf_and_quantile_examples(self):
        self.assertAlmostEqual(lsdist.sym_quantile(GeneratorFamily.of("normal"), 0.975), 1.959964, places=6)
        self.assertAlmostEqual(lsdist.sym_cdf(GeneratorFamily.of("student-t", 4), 2.776445), 0.975, places=6)

    def test_closed_form_quantile_matches_root_finding(self):
        p = np.array([1e-6, 0.01, 0.2, 0.5, 0.77, 0.999])
        for family in FAMILIES:
            with self.subTest(family=family.label):
                closed = lsdist.sym_quantile(family, p)
                bracket = lsdist.sym_quantile(family, p, method="bracket")
                np.testing.assert_allclose(closed, bracket, atol=1e-10, rtol=1e-10)

    def test_quantile_rejects_boundary_probabilities(self):
        for p in (0.0, 1.0, -0.2, 1.3):
            with self.assertRaises(FamilyParameterError):
                lsdist.sym_quantile(FAMILIES[0], p)

    def test_log_cdf_is_accurate_in_the_lower_tail(self):
        for family in FAMILIES:
            with self.subTest(family=family.label):
                z = np.array([-1.5, -0.5, 0.0, 2.0])
                np.testing.assert_allclose(lsdist.log_sym_cdf(family, z), np.log(lsdist.sym_cdf(family, z)),
                                           rtol=1e-10, atol=1e-15)
        normal = GeneratorFamily.of("normal")
        self.assertTrue(np.isfinite(lsdist.log_sym_cdf(normal, -40.0)))
        self.assertAlmostEqual(lsdist.log_sym_cdf(normal, -40.0), float(stats.norm.logcdf(-40.0)), places=8)


class TestWeights(unittest.TestCase):

    def test_examples(self):
        normal = GeneratorFamily.of("normal")
        self.assertEqual(lsdist.v_weight(normal, 3.0), -0.5)
        self.assertEqual(lsdist.v_weight_prime(normal, 3.0), 0.0)
        self.assertAlmostEqual(lsdist.v_weight(GeneratorFamily.of("student-t", 4), 1.0), -0.5, places=14)
        self.assertAlmostEqual(lsdist.v_weight(GeneratorFamily.of("power-exponential", 0.5), 1.0), -1 / 3, places=14)

    def test_weight_matches_difference_of_log_g(self):
        u = np.array([1e-4, 5e-4, 0.02, 0.4, 1.0, 3.0, 8.0])
        h = 1e-7
        for family in FAMILIES:
            with self.subTest(family=family.label):
                fd = (lsdist.log_g(family, u + h) - lsdist.log_g(family, u - h)) / (2 * h)
                np.testing.assert_allclose(lsdist.v_weight(family, u), fd, rtol=1e-6, atol=1e-8)

    def test_weight_derivative_matches_difference_of_weight(self):
        u = np.array([1e-4, 5e-4, 0.02, 0.4, 1.0, 3.0, 8.0])
        h = 1e-7
        for family in FAMILIES:
            with self.subTest(family=family.label):
                fd = (lsdist.v_weight(family, u + h) - lsdist.v_weight(family, u - h)) / (2 * h)
                np.testing.assert_allclose(lsdist.v_weight_prime(family, u), fd, rtol=1e-6, atol=1e-7)

    def test_series_branch_is_continuous(self):
        below, above = 1e-3 * (1 - 1e-9), 1e-3 * (1 + 1e-9)
        for family in FAMILIES[6:]:
            self.assertAlmostEqual(lsdist.v_weight(family, below), lsdist.v_weight(family, above), places=10)
            self.assertAlmostEqual(lsdist.v_weight_prime(family, below), lsdist.v_weight_prime(family, above), places=8)

    def test_power_exponential_cusp(self):
        with self.assertRaises(FamilyParameterError):
            lsdist.v_weight(GeneratorFamily.of("power-exponential", 0.5), 0.0)
        with self.assertRaises(FamilyParameterError):
            lsdist.v_weight_prime(GeneratorFamily.of("power-exponential", -0.2), 0.0)
        flat = GeneratorFamily.of("power-exponential", -0.5)
        self.assertEqual(lsdist.v_weight(flat, 0.0), 0.0)
        self.assertEqual(lsdist.v_weight_prime(flat, 0.0), -1.0)

    def test_z_derivatives_follow_from_weights(self):
        z = np.array([-2.2, -0.7, 0.3, 1.1, 2.9])
        for family in FAMILIES:
            with self.subTest(family=family.label):
                u = z ** 2
                v, dv = lsdist.v_weight(family, u), lsdist.v_weight_prime(family, u)
                np.testing.assert_allclose(lsdist.dlog_sym_pdf(family, z), 2 * z * v, rtol=1e-10, atol=1e-12)
                np.testing.assert_allclose(lsdist.d2log_sym_pdf(family, z), 2 * v + 4 * u * dv, rtol=1e-8, atol=1e-10)

    def test_inverse_mills_ratio(self):
        normal = GeneratorFamily.of("normal")
        z = np.array([-3.0, 0.0, 1.5])
        np.testing.assert_allclose(lsdist.inverse_mills(normal, z), stats.norm.pdf(z) / stats.norm.cdf(z), rtol=1e-12)
        self.assertAlmostEqual(lsdist.inverse_mills(normal, -40.0), 40.0, delta=0.05)


class TestLogSymmetricLaw(unittest.TestCase):

    def setUp(self):
        self.params = [LogSymmetricParams(eta=2.0, phi=0.7, family=f) for f in FAMILIES]

    def test_median_is_eta(self):
        for params in self.params:
            self.assertEqual(lsdist.ls_cdf(params, params.eta), 0.5)
            self.assertAlmostEqual(lsdist.ls_quantile(params, 0.5), params.eta, places=14)
        self.assertEqual(lsdist.ls_cdf(LogSymmetricParams(eta=2.0, phi=1.0, family=FAMILIES[0]), 2.0), 0.5)

    def test_log_normal_quantile(self):
        params = LogSymmetricParams(eta=1.0, phi=1.0, family=FAMILIES[0])
        self.assertAlmostEqual(lsdist.ls_quantile(params, 0.975), math.exp(1.959964), places=5)

    def test_density_integrates_to_one(self):
        for params in self.params:
            with self.subTest(family=params.family.label):
                mass = sum(quad(lambda t: lsdist.ls_pdf(params, t), a, b, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
                           for a, b in ((0.0, params.eta), (params.eta, np.inf)))
                self.assertAlmostEqual(mass, 1.0, delta=1e-8)

    def test_proportionality(self):
        t = np.array([0.01, 0.5, 2.0, 40.0])
        for params in self.params:
            scaled = params.model_copy(update={"eta": 3.5 * params.eta})
            np.testing.assert_allclose(lsdist.ls_cdf(scaled, 3.5 * t), lsdist.ls_cdf(params, t), atol=1e-12)

    def test_power_transformation(self):
        p = np.array([0.05, 0.3, 0.5, 0.9])
        c = 1.7
        for params in self.params:
            powered = params.model_copy(update={"eta": params.eta ** c, "phi": c * params.phi})
            np.testing.assert_allclose(lsdist.ls_quantile(powered, p), lsdist.ls_quantile(params, p) ** c, rtol=1e-10)

    def test_round_trip_over_six_decades(self):
        t = np.logspace(-3, 3, 25) * 2.0
        for params in self.params:
            with self.subTest(family=params.family.label):
                prob = lsdist.ls_cdf(params, t)
                inside = (prob > 1e-15) & (prob < 1 - 1e-6)
                np.testing.assert_allclose(lsdist.ls_quantile(params, prob[inside]), t[inside], rtol=1e-8)

    def test_non_positive_support_is_rejected(self):
        with self.assertRaises(FamilyParameterError):
            lsdist.ls_pdf(self.params[0], 0.0)
        with self.assertRaises(FamilyParameterError):
            lsdist.ls_cdf(self.params[0], -1.0)


class TestSamplers(unittest.TestCase):

    def test_normal_mean(self):
        draws = lsdist.sym_sample(FAMILIES[0], substream(1), 1_000_000)
        self.assertLess(abs(draws.mean()), 0.005)

    def test_log_symmetric_median(self):
        params = LogSymmetricParams(eta=3.0, phi=0.5, family=GeneratorFamily.of("student-t", 4))
        draws = lsdist.ls_sample(params, substream(2), 100_000)
        self.assertLess(abs(np.median(draws) - 3.0), 0.05)
        self.assertTrue(np.all(draws > 0))

    def test_draws_follow_the_cdf(self):
        for i, family in enumerate(FAMILIES):
            with self.subTest(family=family.label):
                draws = lsdist.sym_sample(family, substream(3, i), 10_000)
                result = stats.kstest(draws, lambda z: lsdist.sym_cdf(family, z))
                self.assertLess(result.statistic, 0.02)

    def test_same_stream_same_draws(self):
        family = GeneratorFamily.of("power-exponential", 0.3)
        np.testing.assert_array_equal(lsdist.sym_sample(family, substream(9, 1, 2), 50),
                                      lsdist.sym_sample(family, substream(9, 1, 2), 50))


if __name__ == "__main__":
    unittest.main()
