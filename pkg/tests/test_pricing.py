import math
import unittest
from dataclasses import replace

import numpy as np

from heston_forwards.errors import ArgumentError, ConfigurationError, EligibilityError
from heston_forwards.filipovic import HwElement, norm
from heston_forwards.pricing import (
    OptionSpec,
    Payoff,
    atm_strike,
    forward_f,
    forward_g,
    option_model,
    price_option,
    psi_lipschitz,
)
from heston_forwards.simulate import z_score

from tests.base import Z_BOUND, small_scenario


class PayoffTest(unittest.TestCase):

    def test_values(self):
        s = np.array([0.5, 1.0, 1.5])
        np.testing.assert_array_equal(Payoff("linear").value(s), s)
        np.testing.assert_array_equal(Payoff("call", 1.0).value(s), [0.0, 0.0, 0.5])
        smoothed = Payoff("smoothed_call", 1.0, 0.1).value(s)
        self.assertAlmostEqual(float(smoothed[1]), 0.1 * math.log(2.0), places=14)
        self.assertTrue(np.all(smoothed >= Payoff("call", 1.0).value(s)))

    def test_derivatives(self):
        s = np.array([0.9, 1.0, 1.1])
        np.testing.assert_array_equal(Payoff("linear").derivative(s), np.ones(3))
        derivative = Payoff("smoothed_call", 1.0, 0.1).derivative(s)
        self.assertEqual(float(derivative[1]), 0.5)
        self.assertAlmostEqual(float(derivative[0] + derivative[2]), 1.0, places=14)
        with self.assertRaises(EligibilityError):
            Payoff("call", 1.0).derivative(s)

    def test_lipschitz_constants(self):
        self.assertEqual(Payoff("linear").derivative_lipschitz, 0.0)
        self.assertIsNone(Payoff("call").derivative_lipschitz)
        self.assertEqual(Payoff("smoothed_call", 0.0, 0.25).derivative_lipschitz, 1.0)

    def test_invalid_payoffs(self):
        with self.assertRaises(ConfigurationError):
            Payoff("put")
        with self.assertRaises(ConfigurationError):
            Payoff("smoothed_call", 1.0, 0.0)

    def test_invalid_options(self):
        with self.assertRaises(ArgumentError):
            OptionSpec(0.25, 0.25, 0.0, 0.02, Payoff("linear"))
        with self.assertRaises(ArgumentError):
            OptionSpec(-0.25, 0.25, 0.25, 0.02, Payoff("linear"))


class PriceOptionTest(unittest.TestCase):

    def setUp(self):
        self.scenario = small_scenario()
        self.spec = self.scenario.spec
        self.option = self.scenario.option

    def test_forwards_of_a_constant_curve(self):
        curve = HwElement.constant(self.spec.grid, 1.7)
        self.assertAlmostEqual(float(forward_f(curve, 0.5)), 1.7, places=14)
        self.assertAlmostEqual(float(forward_g(curve, 0.5, 0.25)), 1.7, places=14)

    def test_strike_at_the_money(self):
        self.assertEqual(self.option.payoff.strike, atm_strike(self.spec, self.option))

    def test_linear_payoff_prices_the_mean_curve(self):
        option = replace(self.option, payoff=Payoff("linear"))
        estimate = price_option(self.spec, option, 4000, seed=2)
        closed = option.discount * atm_strike(self.spec, option)
        self.assertLessEqual(abs(z_score(estimate.value, closed, estimate.stderr)), Z_BOUND)

    def test_deterministic_scenario_is_exact(self):
        scenario = small_scenario(MODEL_Y0="zero", MODEL_ETA="zero")
        option = scenario.option
        estimate = price_option(scenario.spec, option, 100, seed=2)
        expected = option.discount * float(option.payoff.value(atm_strike(scenario.spec, option)))
        self.assertEqual(estimate.stderr, 0.0)
        self.assertAlmostEqual(estimate.value, expected, places=14)

    def test_price_scales_with_discount(self):
        """With the same paths, doubling r multiplies the price by e^{−rτ}."""
        base = price_option(self.spec, self.option, 500, seed=1)
        doubled = price_option(self.spec, replace(self.option, r=2 * self.option.r), 500, seed=1)
        ratio = math.exp(-self.option.r * self.option.tau)
        self.assertAlmostEqual(doubled.value / base.value, ratio, places=12)
        self.assertAlmostEqual(doubled.stderr / base.stderr, ratio, places=12)

    def test_call_is_above_smoothed_difference(self):
        call = price_option(self.spec, replace(self.option, payoff=Payoff("call", self.option.payoff.strike)),
                            1000, seed=4)
        smoothed = price_option(self.spec, self.option, 1000, seed=4)
        self.assertGreater(call.value, 0.0)
        self.assertGreaterEqual(smoothed.value, call.value)

    def test_exercise_beyond_horizon(self):
        with self.assertRaises(ConfigurationError):
            option_model(self.spec, replace(self.option, tau=0.5))

    def test_paths_must_be_positive(self):
        with self.assertRaises(ArgumentError):
            price_option(self.spec, self.option, 0, seed=1)

    def test_psi_lipschitz(self):
        grid = self.spec.grid
        kernel_norm = float(norm(self.option.delivery_kernel(grid)))
        l_psi, l_dpsi = psi_lipschitz(self.option, grid)
        self.assertAlmostEqual(l_psi, self.option.discount * kernel_norm, places=14)
        self.assertAlmostEqual(l_dpsi, self.option.discount * kernel_norm ** 2 / (4 * self.option.payoff.smoothing),
                               places=12)
        self.assertIsNone(psi_lipschitz(replace(self.option, payoff=Payoff("call")), grid)[1])
