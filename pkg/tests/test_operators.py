import math
import unittest

import numpy as np

from heston_forwards.errors import ConfigurationError, DegeneracyError
from heston_forwards.filipovic import (
    Grid,
    HwElement,
    WeightFn,
    combine,
    gram,
    inner_product,
    kernel_hx,
    norm,
    shift,
)
from heston_forwards.operators import (
    CovOp,
    FiniteRankOp,
    RankOneOp,
    SemigroupSpec,
    build_onb,
    cov_sqrt_apply,
    exponential_seeds,
    hs_norm,
    hs_norm_by_basis,
    semigroup_apply,
    variance_sqrt,
    volatility_operator,
)


class OperatorsTest(unittest.TestCase):

    def setUp(self):
        self.grid = Grid.build(1 / 32, 8.0, WeightFn.exponential(1.0), headroom=1.0)
        self.basis = build_onb(exponential_seeds(self.grid, 4))
        self.rng = np.random.default_rng(5)

    def random_curves(self, count):
        return combine(self.rng.standard_normal((count, 4)), self.basis)

    def test_onb_is_orthonormal(self):
        np.testing.assert_allclose(gram(self.basis, self.basis), np.eye(4), atol=1e-12)

    def test_onb_from_list(self):
        seeds = list(exponential_seeds(self.grid, 3))
        np.testing.assert_allclose(gram(build_onb(seeds), build_onb(seeds)), np.eye(3), atol=1e-12)

    def test_dependent_seeds(self):
        seeds = exponential_seeds(self.grid, 2)
        with self.assertRaises(DegeneracyError):
            build_onb([seeds[0], seeds[1], seeds[1] * 2.0])

    def test_covariance_power_law(self):
        q = CovOp.power_law(self.basis, 2.0, 3.0)
        np.testing.assert_allclose(q.eigvals, 2.0 * np.array([1.0, 1 / 8, 1 / 27, 1 / 64]))
        self.assertAlmostEqual(q.trace, float(np.sum(q.eigvals)))
        f, g = self.random_curves(10), self.random_curves(10)
        np.testing.assert_allclose(inner_product(q.apply(f), g), inner_product(f, q.apply(g)), atol=1e-12)
        self.assertGreaterEqual(float(np.min(inner_product(q.apply(f), f))), 0.0)

    def test_covariance_square_root(self):
        q = CovOp.power_law(self.basis, 1.0)
        f = self.random_curves(5)
        twice = cov_sqrt_apply(q, cov_sqrt_apply(q, f))
        np.testing.assert_allclose(twice.deriv, q.apply(f).deriv, atol=1e-12)
        root = cov_sqrt_apply(q, f)
        np.testing.assert_array_equal(root.deriv, q.sqrt_apply(f).deriv)
        np.testing.assert_allclose(q.sqrt_norm_sq(f), inner_product(root, root), atol=1e-12)

    def test_negative_eigenvalue(self):
        with self.assertRaises(ConfigurationError):
            CovOp(np.array([1.0, -0.1, 0.0, 0.0]), self.basis)

    def test_rank_one_adjoint(self):
        a, b = self.random_curves(2)
        op = RankOneOp(a, b)
        f, g = self.random_curves(10), self.random_curves(10)
        np.testing.assert_allclose(inner_product(op.apply(f), g), inner_product(f, op.adjoint().apply(g)),
                                   atol=1e-10)
        self.assertAlmostEqual(hs_norm(op), hs_norm_by_basis(op, self.basis), places=12)

    def test_variance_square_root(self):
        """Γ^Z (Γ^Z)* = Y ⊗ Y for Z = Y/‖Y‖."""
        y = self.random_curves(1)[0]
        root = variance_sqrt(y)
        f = self.random_curves(3)
        composed = root.apply(root.adjoint().apply(f))
        expected = inner_product(y, f) * y
        np.testing.assert_allclose(composed.deriv, expected.deriv, atol=1e-10)
        gamma = volatility_operator(y / norm(y), y)
        np.testing.assert_allclose(gamma.apply(f).deriv, root.apply(f).deriv, atol=1e-12)

    def test_variance_square_root_of_zero(self):
        root = variance_sqrt(HwElement.zeros(self.grid))
        self.assertEqual(root.hs_norm(), 0.0)

    def test_finite_rank_operators(self):
        eta = FiniteRankOp.diagonal(self.basis, [0.3, 0.2, 0.1])
        self.assertEqual(eta.rank, 3)
        self.assertAlmostEqual(eta.hs_norm(), math.sqrt(0.09 + 0.04 + 0.01), places=12)
        self.assertAlmostEqual(eta.hs_norm(), hs_norm_by_basis(eta, self.basis), places=12)
        np.testing.assert_allclose(eta.loadings(self.basis)[:, :3], np.diag([0.3, 0.2, 0.1]), atol=1e-12)

        swap = FiniteRankOp.rank_one(self.basis, 0, 2, 2.0)
        image = swap.apply(self.basis[0])
        np.testing.assert_allclose(image.deriv, (self.basis[2] * 2.0).deriv, atol=1e-12)
        self.assertAlmostEqual(float(norm(swap.adjoint().apply(self.basis[2]))), 2.0, places=12)
        self.assertAlmostEqual(swap.scaled(0.5).hs_norm(), 1.0, places=12)

    def test_zero_operator(self):
        zero = FiniteRankOp.zero(self.grid)
        self.assertEqual(zero.rank, 0)
        self.assertEqual(zero.hs_norm(), 0.0)

    def test_rank_one_index_range(self):
        with self.assertRaises(ConfigurationError):
            FiniteRankOp.rank_one(self.basis, 0, 4)

    def test_semigroups(self):
        f = self.random_curves(1)[0]
        plain = SemigroupSpec("left_shift")
        damped = SemigroupSpec("damped_left_shift", 0.5)
        scalar = SemigroupSpec("scalar_decay", 0.5)
        np.testing.assert_array_equal(semigroup_apply(plain, 0.25, f).deriv, shift(f, 0.25).deriv)
        np.testing.assert_allclose(semigroup_apply(damped, 0.25, f).deriv[:100], (shift(f, 0.25) * math.exp(-0.125)).deriv[:100])
        np.testing.assert_allclose(semigroup_apply(scalar, 0.25, f).deriv, f.deriv * math.exp(-0.125))
        g = self.random_curves(1)[0]
        for semigroup in (plain, damped, scalar):
            self.assertAlmostEqual(inner_product(semigroup.apply(0.5, f), g),
                                   inner_product(f, semigroup.adjoint_apply(0.5, g)), places=10)

    def test_semigroup_adjoint_of_kernel(self):
        """⟨S_t f, h_x⟩ = f(x + t)."""
        f = self.random_curves(1)[0]
        moved = SemigroupSpec().adjoint_apply(0.5, kernel_hx(self.grid, 1.0))
        self.assertAlmostEqual(inner_product(f, moved), float(np.asarray(shift(f, 0.5).values())[32]), places=10)

    def test_unknown_semigroup(self):
        with self.assertRaises(ConfigurationError):
            SemigroupSpec("right_shift")
        with self.assertRaises(ConfigurationError):
            SemigroupSpec("damped_left_shift", -1.0)
