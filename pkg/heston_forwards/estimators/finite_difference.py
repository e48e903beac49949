import logging
from dataclasses import replace
from typing import Sequence, Tuple

import numpy as np

from ..base import BaseGreekEstimator
from ..errors import ArgumentError, DataError
from ..greeks import GreekEstimate, GreekRequest, greek_engine, sensitivity_terms
from ..pricing import OptionSpec
from ..simulate import MCEstimate, ModelSpec, Perturbation

logger = logging.getLogger(__name__)

FD_BIAS_EPSILONS = (4e-2, 2e-2, 1e-2, 5e-3)


def _central_difference(engine, opt: OptionSpec, direction, indices, epsilon: float) -> np.ndarray:
    # both legs read the same W/B streams
    up = engine.run_batch(indices, perturbation=Perturbation(direction, epsilon))
    down = engine.run_batch(indices, perturbation=Perturbation(direction, -epsilon))
    return (opt.psi(up.x) - opt.psi(down.x)) / (2.0 * epsilon)


def greek_fd(spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
    """(Π₀(θ + ε·dir) − Π₀(θ − ε·dir)) / 2ε with common random numbers.

    The standard error comes from the paired per-path differences.

    Raises:
        ConfigurationError: if θ ± ε·dir is not a valid model
    """
    engine = greek_engine(spec, opt, req)
    direction = req.as_direction()
    samples = engine.map_paths(
        lambda idx: _central_difference(engine, opt, direction, idx, req.fd_epsilon), req.n_paths
    )
    if not np.all(np.isfinite(samples)):
        raise DataError("Finite-difference samples contain NaN or inf")
    return GreekEstimate.from_estimate("fd", req, MCEstimate.from_samples(samples), setting=req.fd_epsilon)


def fd_bias_slope(spec: ModelSpec, opt: OptionSpec, req: GreekRequest,
                  epsilons: Sequence[float] = FD_BIAS_EPSILONS) -> Tuple[float, np.ndarray]:
    """Log-log slope of |fd(ε) − pathwise| over ``epsilons``.

    All central differences and the pathwise reference share the same paths,
    so the Monte Carlo noise cancels from the bias.

    Returns:
        (fitted slope, absolute bias per epsilon)
    """
    epsilons = np.asarray(epsilons, dtype=float)
    if epsilons.size < 2 or np.any(epsilons <= 0):
        raise ArgumentError("Bias regression needs at least two positive steps")
    engine = greek_engine(spec, opt, req)
    direction = req.as_direction()

    def batch(idx):
        _, reference = sensitivity_terms(engine, opt, direction, idx)
        return np.column_stack([_central_difference(engine, opt, direction, idx, eps) - reference
                                for eps in epsilons])

    errors = engine.map_paths(batch, req.n_paths)
    bias = np.abs(np.mean(errors, axis=0))
    if np.any(bias == 0):
        raise DataError("Finite-difference bias vanished; the regression is undefined")
    slope = float(np.polyfit(np.log(epsilons), np.log(bias), 1)[0])
    logger.info(f"Central-difference bias slope {slope:.3f} over {epsilons.size} steps")
    return slope, bias


class FiniteDifferenceEstimator(BaseGreekEstimator):
    """Central finite differences with common random numbers."""

    name = "fd"

    def __init__(self, epsilon: float = 1e-3):
        if not epsilon > 0:
            raise ArgumentError(f"Finite-difference step must be positive, got {epsilon}")
        self.epsilon = epsilon

    def _estimate(self, spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
        if req.fd_epsilon != self.epsilon:
            logger.debug(f"Using the configured step {self.epsilon:g} instead of the requested {req.fd_epsilon:g}")
            req = replace(req, estimator="fd", fd_epsilon=self.epsilon)
        return greek_fd(spec, opt, req)

    @classmethod
    def from_config(cls, config) -> "FiniteDifferenceEstimator":
        return cls(epsilon=config.GREEK_FD_EPSILON)
