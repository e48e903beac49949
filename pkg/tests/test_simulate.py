import math
import unittest

import numpy as np

from heston_forwards.errors import ArgumentError, ConfigurationError
from heston_forwards.filipovic import HwElement, evaluate
from heston_forwards.operators import CovOp
from heston_forwards.simulate import (
    Direction,
    MCEstimate,
    PathEngine,
    SystemState,
    ZPolicy,
    gen_increments,
    ito_isometry,
    normality_diagnostic,
    path_stream,
    simulate_path,
    step_system,
    terminal_forwards,
    z_score,
)

from tests.base import Z_BOUND, small_scenario

MATURITIES = (0.0, 0.5, 1.0)


class PathEngineTest(unittest.TestCase):
    """Determinism and moments of the simulated forward curves."""

    def setUp(self):
        self.scenario = small_scenario()
        self.spec = self.scenario.spec

    def forwards(self, n_paths=512, seed=7, **kwargs):
        return terminal_forwards(PathEngine(self.spec, seed, **kwargs), MATURITIES, n_paths)

    def test_thread_count_does_not_change_results(self):
        single = self.forwards(batch_size=64, threads=1)
        parallel = self.forwards(batch_size=64, threads=4)
        np.testing.assert_array_equal(single, parallel)

    def test_batch_size_does_not_change_results(self):
        small = self.forwards(batch_size=50)
        large = self.forwards(batch_size=512)
        np.testing.assert_allclose(small, large, rtol=0, atol=1e-12)

    def test_seed_changes_results(self):
        self.assertFalse(np.array_equal(self.forwards(seed=7), self.forwards(seed=8)))

    def test_path_prefix_is_stable(self):
        """The first paths of a longer run equal a shorter run with the same seed."""
        np.testing.assert_allclose(self.forwards(n_paths=600)[:300], self.forwards(n_paths=300), rtol=0, atol=1e-12)

    def test_zero_noise_follows_the_semigroup(self):
        spec = small_scenario(MODEL_Y0="zero", MODEL_ETA="zero").spec
        samples = terminal_forwards(PathEngine(spec, 3), MATURITIES, 64)
        expected = evaluate(spec.s_semigroup.apply(spec.horizon, spec.x0), np.array(MATURITIES))
        np.testing.assert_allclose(samples, np.broadcast_to(expected, samples.shape), rtol=0, atol=1e-14)

    def test_mean_matches_shifted_initial_curve(self):
        samples = self.forwards(n_paths=4000)
        expected = evaluate(self.spec.s_semigroup.apply(self.spec.horizon, self.spec.x0), np.array(MATURITIES))
        for column, reference in zip(samples.T, expected):
            estimate = MCEstimate.from_samples(column)
            self.assertLessEqual(abs(z_score(estimate.value, float(reference), estimate.stderr)), Z_BOUND)

    def test_stderr_scales_with_path_count(self):
        """Doubling the paths divides the standard error by about √2."""
        few = MCEstimate.from_samples(self.forwards(n_paths=2000)[:, 1])
        many = MCEstimate.from_samples(self.forwards(n_paths=4000, seed=8)[:, 1])
        self.assertAlmostEqual(few.stderr / many.stderr / math.sqrt(2.0), 1.0, delta=0.2)

    def test_conditional_normality(self):
        engine = PathEngine(self.spec, 5)
        skew, kurtosis = normality_diagnostic(engine, 0.5, 8000)
        self.assertLess(abs(skew), 0.15)
        self.assertLess(abs(kurtosis), 0.3)

    def test_ito_isometry(self):
        squared, isometry, difference = ito_isometry(PathEngine(self.spec, 9), 4000)
        self.assertGreater(squared.value, 0.0)
        self.assertLessEqual(abs(z_score(difference.value, 0.0, difference.stderr)), Z_BOUND)
        self.assertLessEqual(abs(squared.value - isometry.value), Z_BOUND * math.hypot(squared.stderr,
                                                                                        isometry.stderr))

    def test_normalized_y_policy_runs(self):
        spec = small_scenario(MODEL_Z_POLICY="normalized_y").spec
        samples = terminal_forwards(PathEngine(spec, 1), MATURITIES, 128)
        self.assertTrue(np.all(np.isfinite(samples)))

    def test_simulate_path_matches_batch(self):
        bundle = simulate_path(self.spec, 7, 3)
        batch = PathEngine(self.spec, 7, batch_size=5).run_batch(np.arange(5))
        self.assertEqual(bundle.X.batch_shape, (self.spec.n_steps + 1,))
        self.assertEqual(bundle.dW.shape, (self.spec.n_steps, self.spec.q_w.count))
        np.testing.assert_allclose(bundle.X[-1].deriv, batch.x[3].deriv, rtol=0, atol=1e-12)
        np.testing.assert_allclose(bundle.Y[-1].deriv, batch.y[3].deriv, rtol=0, atol=1e-12)

    def test_simulate_path_tangent(self):
        """The x0 tangent path is S_t h at every step."""
        h = self.scenario.direction("x0")
        bundle = simulate_path(self.spec, 7, 0, directions=(Direction("x0", h),))
        (tangent,) = bundle.tangents
        moved = self.spec.s_semigroup.apply(self.spec.horizon, h)
        np.testing.assert_array_equal(tangent[-1].deriv, moved.deriv)

    def test_horizon_beyond_extension(self):
        with self.assertRaises(ConfigurationError):
            self.spec.with_horizon(5.0)

    def test_step_system_reproduces_the_engine(self):
        engine = PathEngine(self.spec, 4)
        indices = np.arange(5)
        dW, dB = engine.draws(indices)
        ones = np.ones(indices.size)
        state = SystemState(self.spec.y0 * ones, self.spec.x0 * ones)
        for k in range(self.spec.n_steps):
            state = step_system(self.spec, state, dW[:, k, :], dB[:, k, :])
        batch = engine.run_batch(indices)
        np.testing.assert_allclose(state.X.deriv, batch.x.deriv, rtol=0, atol=1e-14)
        np.testing.assert_allclose(state.X.f0, batch.x.f0, rtol=0, atol=1e-14)
        np.testing.assert_allclose(state.Y.deriv, batch.y.deriv, rtol=0, atol=1e-14)

    def test_step_system_without_noise(self):
        """Zero increments move Y and X by their semigroups only."""
        spec, points = self.spec, np.array(MATURITIES)
        dW, dB = np.zeros(spec.q_w.count), np.zeros(spec.q_b.count)
        state = SystemState(spec.y0, spec.x0)
        for k in range(1, spec.n_steps + 1):
            state = step_system(spec, state, dW, dB)
            np.testing.assert_allclose(evaluate(state.Y, points),
                                       evaluate(spec.u_semigroup.apply(k * spec.dt, spec.y0), points),
                                       rtol=0, atol=1e-12)
            np.testing.assert_allclose(evaluate(state.X, points),
                                       evaluate(spec.s_semigroup.apply(k * spec.dt, spec.x0), points),
                                       rtol=0, atol=1e-12)

    def test_step_system_can_hold_x(self):
        dW = np.ones(self.spec.q_w.count)
        dB = np.ones(self.spec.q_b.count)
        state = step_system(self.spec, SystemState(self.spec.y0, self.spec.x0), dW, dB, with_x=False)
        self.assertIs(state.X, self.spec.x0)


class StreamAndEstimateTest(unittest.TestCase):

    def test_streams_are_keyed(self):
        first = path_stream(1, "W", 4).standard_normal(3)
        np.testing.assert_array_equal(first, path_stream(1, "W", 4).standard_normal(3))
        self.assertFalse(np.array_equal(first, path_stream(1, "B", 4).standard_normal(3)))
        self.assertFalse(np.array_equal(first, path_stream(1, "W", 5).standard_normal(3)))

    def test_stream_arguments(self):
        with self.assertRaises(ArgumentError):
            path_stream(1, "V", 0)
        with self.assertRaises(ArgumentError):
            path_stream(-1, "W", 0)

    def test_zero_spectrum_gives_zero_increments(self):
        q_w = small_scenario().spec.q_w
        silent = CovOp(np.zeros(q_w.count), q_w.eigvecs)
        increments = gen_increments(silent, 1 / 32, 8, path_stream(0, "W", 0))
        self.assertEqual(increments.shape, (8, q_w.count))
        self.assertFalse(np.any(increments))

    def test_increments_are_reproducible(self):
        q_b = small_scenario().spec.q_b
        first = gen_increments(q_b, 1 / 32, 8, path_stream(3, "B", 17))
        np.testing.assert_array_equal(first, gen_increments(q_b, 1 / 32, 8, path_stream(3, "B", 17)))
        self.assertFalse(np.array_equal(first, gen_increments(q_b, 1 / 32, 8, path_stream(3, "B", 18))))

    def test_summed_increments_have_covariance_lambda_tau(self):
        """Σ_k ΔW_k over τ = K·Δt has coefficient covariance diag(λ_n τ)."""
        q_w = small_scenario().spec.q_w
        dt, n_steps, n_paths = 1 / 32, 8, 10_000
        tau = dt * n_steps
        totals = np.stack([gen_increments(q_w, dt, n_steps, path_stream(2, "W", i)).sum(axis=0)
                           for i in range(n_paths)])
        covariance = np.cov(totals, rowvar=False)
        expected = q_w.eigvals * tau
        for n in range(q_w.count):
            stderr = expected[n] * math.sqrt(2.0 / (n_paths - 1))
            self.assertLessEqual(abs(covariance[n, n] - expected[n]), Z_BOUND * stderr, n)
            for m in range(n):
                stderr = math.sqrt(expected[n] * expected[m] / n_paths)
                self.assertLessEqual(abs(covariance[n, m]), Z_BOUND * stderr, (n, m))

    def test_constant_samples(self):
        estimate = MCEstimate.from_samples(np.full(10, 2.5))
        self.assertEqual((estimate.value, estimate.stderr, estimate.n_paths), (2.5, 0.0, 10))

    def test_empty_samples(self):
        with self.assertRaises(ArgumentError):
            MCEstimate.from_samples(np.array([]))

    def test_scaled_estimate(self):
        estimate = MCEstimate(2.0, 0.5, 100).scaled(-2.0)
        self.assertEqual((estimate.value, estimate.stderr), (-4.0, 1.0))

    def test_z_score(self):
        self.assertEqual(z_score(1.0, 1.0, 0.0), 0.0)
        self.assertEqual(z_score(1.0 + 1e-15, 1.0, 0.0), 0.0)
        self.assertEqual(z_score(2.0, 1.0, 0.0), math.inf)
        self.assertAlmostEqual(z_score(1.0, 0.0, 0.3, 0.4), 2.0)

    def test_batches(self):
        engine = PathEngine(small_scenario().spec, 0, batch_size=3)
        self.assertEqual([list(b) for b in engine.batches(7)], [[0, 1, 2], [3, 4, 5], [6]])
        with self.assertRaises(ArgumentError):
            engine.batches(0)
        with self.assertRaises(ArgumentError):
            PathEngine(small_scenario().spec, 0, batch_size=0)

    def test_constant_policy_needs_nonzero_gamma(self):
        grid = small_scenario().spec.grid
        with self.assertRaises(ConfigurationError):
            ZPolicy.constant(HwElement.zeros(grid))
        with self.assertRaises(ConfigurationError):
            ZPolicy("sideways")
