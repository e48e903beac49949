"""Greek requests, estimates and the per-path sensitivity terms shared by the estimators.

A Greek is the directional derivative of Π₀ along a curve (x0, y0) or a
finite-rank operator (η). Every estimator runs on the engine of the option's
exercise time and reuses the same per-path Philox streams, so estimates for the
same seed are computed from common random numbers.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .errors import ArgumentError, ConfigurationError, DomainError, EligibilityError
from .filipovic import HwElement, eval_norm_sq
from .operators import FiniteRankOp
from .pricing import OptionSpec, forward_g, option_model, psi_lipschitz
from .simulate import (
    DEFAULT_BATCH_SIZE,
    PARAMETERS,
    Direction,
    MCEstimate,
    ModelSpec,
    PathEngine,
    Perturbation,
    z_score,
)

logger = logging.getLogger(__name__)

ESTIMATOR_KINDS = ("fd", "pathwise", "skorohod", "skorohod_grid")
COVERAGE_LIMIT = 1e-3


@dataclass(frozen=True, eq=False)
class GreekRequest:
    """One directional sensitivity to estimate.

    Attributes:
        parameter: one of ``x0``, ``y0``, ``eta``
        direction: curve h for x0/y0, finite-rank ζ for eta
        estimator: estimator name, see :data:`ESTIMATOR_KINDS`
        fd_epsilon: central-difference step in the direction's natural norm
        n_paths: number of Monte Carlo paths
        seed: master seed
        direction_id: label carried into reports
    """

    parameter: str
    direction: Union[HwElement, FiniteRankOp]
    estimator: str = "pathwise"
    fd_epsilon: float = 1e-3
    n_paths: int = 100_000
    seed: int = 0
    direction_id: str = ""
    threads: int = 1
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ArgumentError(f"Unknown parameter '{self.parameter}', expected one of {PARAMETERS}")
        if not self.fd_epsilon > 0:
            raise ArgumentError(f"Finite-difference step must be positive, got {self.fd_epsilon}")
        if self.n_paths < 1:
            raise ArgumentError(f"Number of paths must be positive, got {self.n_paths}")

    def as_direction(self) -> Direction:
        return Direction(self.parameter, self.direction)

    def with_estimator(self, estimator: str) -> "GreekRequest":
        return GreekRequest(self.parameter, self.direction, estimator, self.fd_epsilon, self.n_paths,
                            self.seed, self.direction_id, self.threads, self.batch_size)

    def validate(self, spec: ModelSpec):
        """Check that θ ± direction is a valid model.

        Raises:
            ConfigurationError: on a grid mismatch or a curve without shift headroom
        """
        grid = spec.grid
        if isinstance(self.direction, FiniteRankOp):
            curves = [self.direction.left, self.direction.right]
        else:
            curves = [self.direction]
        for curve in curves:
            if curve.grid is not grid and curve.grid != grid:
                raise ConfigurationError(f"Direction for {self.parameter} lives on a different grid")
            if curve.valid_len < grid.size:
                raise ConfigurationError(
                    f"Direction for {self.parameter} has {curve.valid_len} valid cells, the model needs {grid.size}"
                )


@dataclass(frozen=True)
class RandomizationSpec:
    """Randomizer settings of the Skorohod estimators.

    ``eval_point`` is the kernel point x of G_x = 𝕎(h_x) ~ N(0, h_x(x)); the
    λ grid is geometric with ``lambda_nodes`` nodes spanning exp(±width·√τ).
    """

    eval_point: float = 0.25
    lambda_nodes: int = 1025
    lambda_width: float = 5.0

    def __post_init__(self):
        if self.eval_point < 0:
            raise DomainError(f"Evaluation point must be nonnegative, got {self.eval_point}")
        if self.lambda_nodes < 2:
            raise ArgumentError(f"λ grid needs at least two nodes, got {self.lambda_nodes}")
        if not self.lambda_width > 0:
            raise ArgumentError(f"λ grid width must be positive, got {self.lambda_width}")

    def kernel_variance(self, grid) -> float:
        """Var(G_x) = ‖h_x‖² = h_x(x)."""
        if self.eval_point > grid.length:
            raise DomainError(f"Evaluation point {self.eval_point} outside [0, {grid.length}]")
        return eval_norm_sq(grid, self.eval_point)

    def lambda_grid(self, tau: float) -> np.ndarray:
        span = self.lambda_width * math.sqrt(tau)
        return np.exp(np.linspace(-span, span, self.lambda_nodes))


@dataclass(frozen=True)
class GreekEstimate:
    """Result of one estimator run.

    For the Skorohod kinds ``value`` equals ``pathwise_mean − control_mean``,
    the control term being E[Ψ(X_τ)·G_x].
    """

    estimator: str
    parameter: str
    value: float
    stderr: float
    n_paths: int
    setting: float = math.nan
    pathwise_mean: Optional[float] = None
    control_mean: Optional[float] = None
    control_stderr: Optional[float] = None
    direction_id: str = ""
    seed: int = 0
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_estimate(cls, estimator: str, req: GreekRequest, estimate: MCEstimate, **extra) -> "GreekEstimate":
        return cls(estimator=estimator, parameter=req.parameter, value=estimate.value, stderr=estimate.stderr,
                   n_paths=estimate.n_paths, direction_id=req.direction_id, seed=req.seed, **extra)

    @property
    def control_z(self) -> float:
        if self.control_mean is None:
            return math.nan
        return z_score(self.control_mean, 0.0, self.control_stderr or 0.0)

    def z_against(self, other: "GreekEstimate") -> float:
        return z_score(self.value, other.value, self.stderr, other.stderr)

    def as_row(self) -> dict:
        return {
            "parameter": self.parameter,
            "estimator": self.estimator,
            "direction_id": self.direction_id,
            "value": self.value,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "eps_or_evalpoint": self.setting,
            "control_mean": math.nan if self.control_mean is None else self.control_mean,
            "control_stderr": math.nan if self.control_stderr is None else self.control_stderr,
            "seed": self.seed,
        }


def check_eligibility(opt: OptionSpec, estimator: str):
    """Pathwise and Skorohod estimators differentiate Φ.

    Raises:
        EligibilityError: for a non-differentiable payoff
    """
    if estimator != "fd" and not opt.payoff.differentiable:
        logger.error(f"Estimator {estimator} requested for the {opt.payoff.kind} payoff")
        raise EligibilityError(f"The {opt.payoff.kind} payoff is not eligible for the {estimator} estimator")


def greek_engine(spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> PathEngine:
    req.validate(spec)
    return PathEngine(option_model(spec, opt), req.seed, batch_size=req.batch_size, threads=req.threads)


def sensitivity_terms(engine: PathEngine, opt: OptionSpec, direction: Direction, indices: np.ndarray,
                      perturbation: Optional[Perturbation] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-path Ψ(X_τ) and pathwise term e^{−rτ}Φ'(J_{x,d}(X_τ))·J_{x,d}(DX_τ)."""
    batch = engine.run_batch(indices, directions=(direction,), perturbation=perturbation)
    level = forward_g(batch.x, opt.x, opt.d)
    tangent = forward_g(batch.tangents[0], opt.x, opt.d)
    psi = opt.discount * opt.payoff.value(level)
    pathwise = opt.discount * opt.payoff.derivative(level) * tangent
    return psi, np.broadcast_to(pathwise, psi.shape)


def randomized_scale(lam, xi):
    """Scale c with θ − dir + λξ·dir = θ + c·dir."""
    return np.asarray(lam) * np.asarray(xi) - 1.0


def kolmogorov_constant(spec: ModelSpec, opt: OptionSpec, req: GreekRequest, rand: RandomizationSpec,
                        lambda_max: float) -> float:
    """C with E|I(λ) − I(μ)|² ≤ C|λ − μ|² for the λ-integrand, E[ξ²] = e^{2τ}.

    C = ‖h_x‖²‖h‖²E[ξ²](L_Ψ² + 2(L_DΨ²Λ²‖h‖²E[ξ²] + L_Ψ²)).
    """
    l_psi, l_dpsi = psi_lipschitz(opt, spec.grid)
    if l_dpsi is None:
        return math.inf
    kernel = rand.kernel_variance(spec.grid)
    size_sq = req.as_direction().magnitude ** 2
    xi_sq = math.exp(2.0 * opt.tau)
    inner = l_psi ** 2 + 2.0 * (l_dpsi ** 2 * lambda_max ** 2 * size_sq * xi_sq + l_psi ** 2)
    return kernel * size_sq * xi_sq * inner
