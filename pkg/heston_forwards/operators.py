"""Operators on H_w: covariances, rank-one and finite-rank maps, semigroups."""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ArgumentError, ConfigurationError, DegeneracyError
from .filipovic import (
    Grid,
    HwElement,
    combine,
    gram,
    inner_product,
    norm,
    shift,
    shift_adjoint,
)

logger = logging.getLogger(__name__)

GRAM_CONDITION_LIMIT = 1e12

SEMIGROUP_KINDS = ("left_shift", "damped_left_shift", "scalar_decay")


def exponential_seeds(grid: Grid, count: int) -> HwElement:
    """Seed family {1, 1 − e^{−y}, 1 − e^{−2y}, ...} with ``count`` members."""
    if count < 1:
        raise ArgumentError(f"Seed family needs at least one member, got {count}")
    rates = np.arange(count, dtype=float)[:, None]
    deriv = rates * np.exp(-rates * grid.midpoints[None, :])
    f0 = np.zeros(count)
    f0[0] = 1.0
    return HwElement(f0, deriv, grid, grid.size)


def build_onb(seed_family: Union[HwElement, Sequence[HwElement]]) -> HwElement:
    """Orthonormalise a linearly independent family in ⟨·,·⟩_w.

    Modified Gram–Schmidt with one reorthogonalisation pass.

    Args:
        seed_family: batched element (one-dimensional batch) or list of curves

    Returns:
        Batched element holding the orthonormal vectors in seed order

    Raises:
        DegeneracyError: if the Gram matrix of the seeds is near singular
    """
    seeds = seed_family if isinstance(seed_family, HwElement) else HwElement.stack(seed_family)
    if len(seeds.batch_shape) != 1:
        raise ArgumentError("Seed family must be a one-dimensional batch of curves")
    condition = np.linalg.cond(gram(seeds, seeds))
    if not np.isfinite(condition) or condition > GRAM_CONDITION_LIMIT:
        logger.error(f"Seed Gram matrix condition number {condition:.3e} exceeds {GRAM_CONDITION_LIMIT:.0e}")
        raise DegeneracyError(f"Seed family is numerically dependent (condition {condition:.3e})")

    vectors = []
    for seed in seeds:
        v = seed
        for _ in range(2):
            for e in vectors:
                v = v - inner_product(v, e) * e
        length = norm(v)
        if length <= 1e-12 * max(norm(seed), 1e-300):
            raise DegeneracyError("Seed family is linearly dependent")
        vectors.append(v / length)
    return HwElement.stack(vectors)


@dataclass(frozen=True, eq=False)
class CovOp:
    """Trace-class covariance Q = Σ λ_n v_n ⊗ v_n with v_n orthonormal."""

    eigvals: np.ndarray
    eigvecs: HwElement

    def __post_init__(self):
        eigvals = np.asarray(self.eigvals, dtype=float)
        if eigvals.ndim != 1 or self.eigvecs.batch_shape != eigvals.shape:
            raise ConfigurationError("Covariance needs one eigenvector per eigenvalue")
        if np.any(eigvals < 0):
            raise ConfigurationError("Covariance eigenvalues must be nonnegative")
        object.__setattr__(self, "eigvals", eigvals)

    @classmethod
    def power_law(cls, basis: HwElement, scale: float, decay: float = 3.0) -> "CovOp":
        """λ_n = scale · n^{−decay} on the given orthonormal basis."""
        n = np.arange(1, len(basis) + 1, dtype=float)
        return cls(scale * n ** (-decay), basis)

    @property
    def count(self) -> int:
        return self.eigvals.size

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigvals))

    @property
    def grid(self) -> Grid:
        return self.eigvecs.grid

    def coefficients(self, f: HwElement) -> np.ndarray:
        """⟨f, v_n⟩ with shape ``f.batch_shape + (count,)``."""
        return gram(f, self.eigvecs)

    def apply(self, f: HwElement) -> HwElement:
        return combine(self.coefficients(f) * self.eigvals, self.eigvecs)

    def sqrt_apply(self, f: HwElement) -> HwElement:
        return combine(self.coefficients(f) * np.sqrt(self.eigvals), self.eigvecs)

    def sqrt_norm_sq(self, f: HwElement) -> np.ndarray:
        """‖Q^{1/2} f‖² = Σ λ_n ⟨f, v_n⟩²."""
        return np.sum(self.eigvals * self.coefficients(f) ** 2, axis=-1)


def cov_sqrt_apply(Q: CovOp, f: HwElement) -> HwElement:
    """Q^{1/2} f = Σ √λ_n ⟨v_n, f⟩ v_n."""
    return Q.sqrt_apply(f)


@dataclass(frozen=True, eq=False)
class RankOneOp:
    """a ⊗ b acting as f ↦ ⟨a, f⟩_w b."""

    left: HwElement
    right: HwElement

    def apply(self, f: HwElement) -> HwElement:
        return inner_product(self.left, f) * self.right

    def adjoint(self) -> "RankOneOp":
        return RankOneOp(self.right, self.left)

    def hs_norm(self) -> float:
        return float(norm(self.left) * norm(self.right))


def volatility_operator(Z: HwElement, Y: HwElement) -> RankOneOp:
    """Γ^Z = Z ⊗ Y."""
    return RankOneOp(Z, Y)


def variance_sqrt(Y: HwElement) -> RankOneOp:
    """𝒱^{1/2} = ‖Y‖⁻¹ Y ⊗ Y, the zero operator when Y = 0."""
    length = float(norm(Y))
    if length == 0.0:
        return RankOneOp(Y * 0.0, Y * 0.0)
    return RankOneOp(Y / length, Y)


@dataclass(frozen=True, eq=False)
class FiniteRankOp:
    """Σ_j σ_j a_j ⊗ b_j, acting as f ↦ Σ_j σ_j ⟨a_j, f⟩_w b_j."""

    sigmas: np.ndarray
    left: HwElement
    right: HwElement

    def __post_init__(self):
        sigmas = np.asarray(self.sigmas, dtype=float)
        if sigmas.ndim != 1 or self.left.batch_shape != sigmas.shape or self.right.batch_shape != sigmas.shape:
            raise ConfigurationError("Finite-rank operator needs one (a_j, b_j) pair per σ_j")
        object.__setattr__(self, "sigmas", sigmas)

    @classmethod
    def diagonal(cls, basis: HwElement, sigmas: Sequence[float]) -> "FiniteRankOp":
        """Σ σ_j e_j ⊗ e_j on the first len(sigmas) basis vectors."""
        sigmas = np.asarray(sigmas, dtype=float)
        if sigmas.size > len(basis):
            raise ConfigurationError(f"Rank {sigmas.size} exceeds the {len(basis)} basis vectors")
        vectors = basis[: sigmas.size]
        return cls(sigmas, vectors, vectors)

    @classmethod
    def rank_one(cls, basis: HwElement, i: int, j: int, scale: float = 1.0) -> "FiniteRankOp":
        """scale · e_i ⊗ e_j (zero-based indices)."""
        if not (0 <= i < len(basis) and 0 <= j < len(basis)):
            raise ConfigurationError(f"Basis indices ({i}, {j}) outside [0, {len(basis)})")
        return cls(np.array([scale]), basis[i:i + 1], basis[j:j + 1])

    @classmethod
    def zero(cls, grid: Grid) -> "FiniteRankOp":
        empty = HwElement.zeros(grid, (0,))
        return cls(np.zeros(0), empty, empty)

    @property
    def rank(self) -> int:
        return self.sigmas.size

    def apply(self, f: HwElement) -> HwElement:
        return combine(gram(f, self.left) * self.sigmas, self.right)

    def adjoint(self) -> "FiniteRankOp":
        return FiniteRankOp(self.sigmas, self.right, self.left)

    def scaled(self, factor: float) -> "FiniteRankOp":
        return FiniteRankOp(self.sigmas * factor, self.left, self.right)

    def loadings(self, basis: HwElement) -> np.ndarray:
        """σ_j ⟨a_j, v_m⟩ with shape (rank, len(basis))."""
        return self.sigmas[:, None] * gram(self.left, basis)

    def hs_norm(self) -> float:
        if self.rank == 0:
            return 0.0
        value = self.sigmas @ (gram(self.left, self.left) * gram(self.right, self.right)) @ self.sigmas
        return math.sqrt(max(float(value), 0.0))


def hs_norm(T: Union[FiniteRankOp, RankOneOp]) -> float:
    """Hilbert–Schmidt norm from Gram matrices."""
    return T.hs_norm()


def hs_norm_by_basis(T: Union[FiniteRankOp, RankOneOp], basis: HwElement) -> float:
    """√(Σ_n ‖T e_n‖²) over an orthonormal basis."""
    images = T.apply(basis)
    return float(np.sqrt(np.sum(inner_product(images, images))))


@dataclass(frozen=True)
class SemigroupSpec:
    """C₀-semigroup on H_w.

    ``left_shift`` is S_t, ``damped_left_shift`` is e^{−κt}S_t and
    ``scalar_decay`` is e^{−κt}·identity.
    """

    kind: str = "left_shift"
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in SEMIGROUP_KINDS:
            raise ConfigurationError(f"Unknown semigroup kind '{self.kind}', expected one of {SEMIGROUP_KINDS}")
        if self.kappa < 0:
            raise ConfigurationError(f"Semigroup rate must be nonnegative, got {self.kappa}")

    @property
    def shifts(self) -> bool:
        return self.kind != "scalar_decay"

    def factor(self, t: float) -> float:
        if self.kind == "left_shift":
            return 1.0
        return math.exp(-self.kappa * t)

    def apply(self, t: float, f: HwElement) -> HwElement:
        if t < 0:
            raise ArgumentError(f"Semigroup time must be nonnegative, got {t}")
        moved = shift(f, t) if self.shifts else f
        factor = self.factor(t)
        return moved if factor == 1.0 else moved * factor

    def adjoint_apply(self, t: float, f: HwElement) -> HwElement:
        if t < 0:
            raise ArgumentError(f"Semigroup time must be nonnegative, got {t}")
        moved = shift_adjoint(f, t) if self.shifts else f
        factor = self.factor(t)
        return moved if factor == 1.0 else moved * factor


def semigroup_apply(S: SemigroupSpec, t: float, f: HwElement) -> HwElement:
    return S.apply(t, f)
