"""Forward prices, payoffs and Monte Carlo option prices."""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from .errors import ArgumentError, ConfigurationError, EligibilityError
from .filipovic import HwElement, evaluate, integ_Jxd, kernel_hxd, norm
from .simulate import DEFAULT_BATCH_SIZE, MCEstimate, ModelSpec, PathEngine

logger = logging.getLogger(__name__)

PAYOFF_KINDS = ("linear", "call", "smoothed_call")


@dataclass(frozen=True)
class Payoff:
    """Payoff Φ of the delivery-period forward.

    ``linear`` is Φ(s) = s, ``call`` is (s − K)⁺ and ``smoothed_call`` is the
    softplus κ·log(1 + e^{(s−K)/κ}).
    """

    kind: str = "smoothed_call"
    strike: float = 0.0
    smoothing: float = 0.1

    def __post_init__(self):
        if self.kind not in PAYOFF_KINDS:
            raise ConfigurationError(f"Unknown payoff '{self.kind}', expected one of {PAYOFF_KINDS}")
        if self.kind == "smoothed_call" and not self.smoothing > 0:
            raise ConfigurationError(f"Smoothing scale must be positive, got {self.smoothing}")

    @property
    def differentiable(self) -> bool:
        return self.kind != "call"

    @property
    def lipschitz(self) -> float:
        return 1.0

    @property
    def derivative_lipschitz(self) -> Optional[float]:
        """Lipschitz constant of Φ', None when Φ is not differentiable."""
        if self.kind == "linear":
            return 0.0
        if self.kind == "smoothed_call":
            return 1.0 / (4.0 * self.smoothing)
        return None

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return s
        if self.kind == "call":
            return np.maximum(s - self.strike, 0.0)
        return self.smoothing * np.logaddexp(0.0, (s - self.strike) / self.smoothing)

    def derivative(self, s):
        """Φ'(s).

        Raises:
            EligibilityError: for the non-differentiable call payoff
        """
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            return np.ones_like(s)
        if self.kind == "smoothed_call":
            return expit((s - self.strike) / self.smoothing)
        raise EligibilityError("The call payoff has no derivative; use smoothed_call")


@dataclass(frozen=True)
class OptionSpec:
    """Option exercised at τ on the forward delivering over [τ + x, τ + x + d]."""

    tau: float
    x: float
    d: float
    r: float
    payoff: Payoff

    def __post_init__(self):
        if self.tau < 0 or self.x < 0:
            raise ArgumentError("Exercise time and time to delivery must be nonnegative")
        if not self.d > 0:
            raise ArgumentError(f"Delivery length must be positive, got {self.d}")

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.tau)

    def delivery_kernel(self, grid) -> HwElement:
        return kernel_hxd(grid, self.x, self.d)

    def psi(self, X: HwElement):
        """Ψ(X) = e^{−rτ} Φ(J_{x,d}(X))."""
        return self.discount * self.payoff.value(forward_g(X, self.x, self.d))


def forward_f(X: HwElement, x: float):
    """f(t, x) = δ_x(X_t)."""
    return evaluate(X, x)


def forward_g(X: HwElement, x: float, d: float):
    """g(t, x, d) = J_{x,d}(X_t), the forward delivering over [x, x + d]."""
    return integ_Jxd(X, x, d)


def atm_strike(spec: ModelSpec, opt: OptionSpec) -> float:
    """Strike at the money: J_{x,d}(S_τ x0)."""
    return float(forward_g(spec.s_semigroup.apply(opt.tau, spec.x0), opt.x, opt.d))


def psi_lipschitz(opt: OptionSpec, grid) -> Tuple[float, Optional[float]]:
    """(L_Ψ, L_DΨ) with L_Ψ = e^{−rτ}‖h_{x,d}‖ L_Φ and L_DΨ = e^{−rτ}‖h_{x,d}‖² L_Φ'."""
    kernel_norm = float(norm(opt.delivery_kernel(grid)))
    l_psi = opt.discount * kernel_norm * opt.payoff.lipschitz
    l_dphi = opt.payoff.derivative_lipschitz
    l_dpsi = None if l_dphi is None else opt.discount * kernel_norm ** 2 * l_dphi
    return l_psi, l_dpsi


def option_model(spec: ModelSpec, opt: OptionSpec) -> ModelSpec:
    """The model with its horizon moved to the exercise time τ."""
    if opt.tau > spec.horizon + 1e-12:
        raise ConfigurationError(f"Exercise time {opt.tau} beyond the model horizon {spec.horizon}")
    return spec.with_horizon(opt.tau)


def price_option(spec: ModelSpec, opt: OptionSpec, n_paths: int, seed: int,
                 threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE) -> MCEstimate:
    """Π₀ = e^{−rτ} E[Φ(J_{x,d}(X_τ))] under ℙ.

    Raises:
        ArgumentError: if n_paths is not positive
        ConfigurationError: if τ lies beyond the model horizon
    """
    if n_paths < 1:
        raise ArgumentError(f"Number of paths must be positive, got {n_paths}")
    engine = PathEngine(option_model(spec, opt), seed, batch_size=batch_size, threads=threads)
    payoffs = engine.map_paths(
        lambda idx: opt.payoff.value(forward_g(engine.run_batch(idx).x, opt.x, opt.d)), n_paths
    )
    estimate = MCEstimate.from_samples(payoffs).scaled(opt.discount)
    logger.info(f"Priced {opt.payoff.kind} over {n_paths} paths: {estimate.value:.6g} ± {estimate.stderr:.2g}")
    return estimate
