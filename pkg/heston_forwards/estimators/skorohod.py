"""Randomized Skorohod estimators.

Perturbing the parameter to θ − dir + λξ·dir with ξ = exp(𝕎) independent of
(W, B) turns the directional derivative into a Skorohod integral of Ψ(X_τ)h_x.
Expanding δ(Ψ h_x) = Ψ·𝕎(h_x) − ⟨𝒟Ψ, h_x⟩ and substituting λ = 1/ξ leaves the
per-path integrand Ψ(X_τ)G_x − P, where G_x = 𝕎(h_x) ~ N(0, h_x(x)) and P is
the pathwise term. The estimate is minus its mean.
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..base import BaseGreekEstimator
from ..errors import ArgumentError, CoverageError, DataError
from ..greeks import (
    COVERAGE_LIMIT,
    GreekEstimate,
    GreekRequest,
    RandomizationSpec,
    check_eligibility,
    greek_engine,
    kolmogorov_constant,
    randomized_scale,
    sensitivity_terms,
)
from ..pricing import OptionSpec
from ..simulate import MCEstimate, ModelSpec, Perturbation

logger = logging.getLogger(__name__)


def greek_skorohod(spec: ModelSpec, opt: OptionSpec, req: GreekRequest,
                   rand: Optional[RandomizationSpec] = None) -> GreekEstimate:
    """Per path −(Ψ(X_τ)·G_x − P), averaged.

    The control term E[Ψ(X_τ)G_x] is reported with its standard error; it is
    zero in expectation since G_x is independent of the paths.

    Raises:
        EligibilityError: for a non-differentiable payoff
        DomainError: if the evaluation point lies outside the grid window
    """
    rand = rand or RandomizationSpec()
    check_eligibility(opt, "skorohod")
    engine = greek_engine(spec, opt, req)
    direction = req.as_direction()
    scale = math.sqrt(rand.kernel_variance(spec.grid))

    def batch(idx):
        psi, pathwise = sensitivity_terms(engine, opt, direction, idx)
        control = psi * scale * engine.randomizer(idx)[:, 0]
        return np.column_stack([pathwise, control])

    samples = engine.map_paths(batch, req.n_paths)
    pathwise, control = samples[:, 0], samples[:, 1]
    estimate = MCEstimate.from_samples(pathwise - control)
    control_estimate = MCEstimate.from_samples(control)
    logger.debug(f"Skorohod {req.parameter} estimate {estimate.value:.6g}, control mean {control_estimate.value:.3g}")
    return GreekEstimate.from_estimate(
        "skorohod", req, estimate, setting=rand.eval_point, pathwise_mean=float(np.mean(pathwise)),
        control_mean=control_estimate.value, control_stderr=control_estimate.stderr,
    )


# paths whose integrand is traced over the whole λ grid for the slope diagnostic
GRID_SLOPE_PATHS = 4


def _lambda_path_slopes(engine, opt: OptionSpec, direction, nodes: np.ndarray, scale: float,
                        root_tau: float, index: int) -> np.ndarray:
    """|ΔI/Δλ| on every panel of the λ grid for one path."""
    normals = engine.randomizer([index])[0]
    g, xi = scale * normals[0], math.exp(root_tau * normals[1])
    integrand = []
    for start in range(0, nodes.size, engine.batch_size):
        lam = nodes[start:start + engine.batch_size]
        psi, tangent = sensitivity_terms(engine, opt, direction, np.full(lam.size, index),
                                         Perturbation(direction, randomized_scale(lam, xi)))
        integrand.append(psi * g - lam * xi * tangent)
    return np.abs(np.diff(np.concatenate(integrand)) / np.diff(nodes))


def skorohod_lambda_grid(spec: ModelSpec, opt: OptionSpec, req: GreekRequest,
                         rand: Optional[RandomizationSpec] = None,
                         lambda_grid: Optional[Sequence[float]] = None) -> GreekEstimate:
    """Skorohod estimate through the randomized parameter θ − dir + λξ·dir.

    Each path draws ξ = exp(√τ N₂) and evaluates the integrand
    I(λ) = Ψ(X_τ^λ)G_x − λξ·P(X_τ^λ) at the two grid nodes bracketing 1/ξ,
    then interpolates linearly to λ = 1/ξ.

    Diagnostics carry the per-path slope of I over the bracketing panel (its
    maximum and mean square), the largest slope over every panel of the grid
    for the first paths, and the Kolmogorov constant bounding the mean square.

    Raises:
        CoverageError: if more than 0.1% of the paths have 1/ξ outside the grid
    """
    rand = rand or RandomizationSpec()
    check_eligibility(opt, "skorohod")
    nodes = rand.lambda_grid(opt.tau) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if nodes.ndim != 1 or nodes.size < 2 or np.any(nodes <= 0) or np.any(np.diff(nodes) <= 0):
        raise ArgumentError("λ grid must be a strictly increasing sequence of positive nodes")
    engine = greek_engine(spec, opt, req)
    direction = req.as_direction()
    scale = math.sqrt(rand.kernel_variance(spec.grid))
    root_tau = math.sqrt(opt.tau)

    def batch(idx):
        normals = engine.randomizer(idx)
        g = scale * normals[:, 0]
        xi = np.exp(root_tau * normals[:, 1])
        target = 1.0 / xi
        j = np.clip(np.searchsorted(nodes, target, side="right") - 1, 0, nodes.size - 2)
        lo, hi = nodes[j], nodes[j + 1]
        controls, pathwise = [], []
        for lam in (lo, hi):
            psi, tangent = sensitivity_terms(engine, opt, direction, idx,
                                             Perturbation(direction, randomized_scale(lam, xi)))
            controls.append(psi * g)
            pathwise.append(lam * xi * tangent)
        weight = (target - lo) / (hi - lo)
        control = controls[0] + weight * (controls[1] - controls[0])
        term = pathwise[0] + weight * (pathwise[1] - pathwise[0])
        slope = ((controls[1] - pathwise[1]) - (controls[0] - pathwise[0])) / (hi - lo)
        outside = (target < nodes[0]) | (target > nodes[-1])
        return np.column_stack([term, control, slope, outside])

    samples = engine.map_paths(batch, req.n_paths)
    term, control, slope, outside = samples.T
    if not np.all(np.isfinite(samples)):
        raise DataError("λ-grid integrand contains NaN or inf")

    missed = float(np.mean(outside))
    if missed > COVERAGE_LIMIT:
        logger.error(f"{missed:.3%} of the paths have 1/ξ outside [{nodes[0]:.3g}, {nodes[-1]:.3g}]")
        raise CoverageError(f"λ grid covers only {1 - missed:.3%} of the sampled 1/ξ")
    if missed > 0:
        logger.warning(f"Extrapolating the λ integrand for {int(outside.sum())} paths outside the grid")

    estimate = MCEstimate.from_samples(term - control)
    control_estimate = MCEstimate.from_samples(control)
    traced = range(min(req.n_paths, GRID_SLOPE_PATHS))
    grid_slope = max(float(np.max(_lambda_path_slopes(engine, opt, direction, nodes, scale, root_tau, i)))
                     for i in traced)
    bracket_slope = float(np.max(np.abs(slope)))
    bound = kolmogorov_constant(spec, opt, req, rand, float(nodes[-1]))
    mean_square = float(np.mean(slope ** 2))
    diagnostics = {
        "max_slope": max(grid_slope, bracket_slope),
        "max_bracket_slope": bracket_slope,
        "slope_paths": float(len(traced)),
        "mean_square_slope": mean_square,
        "kolmogorov_constant": bound,
        "slope_within_bound": float(mean_square <= bound),
        "outside_fraction": missed,
        "lambda_nodes": float(nodes.size),
    }
    return GreekEstimate.from_estimate(
        "skorohod_grid", req, estimate, setting=rand.eval_point, pathwise_mean=float(np.mean(term)),
        control_mean=control_estimate.value, control_stderr=control_estimate.stderr, diagnostics=diagnostics,
    )


class SkorohodEstimator(BaseGreekEstimator):
    """Randomized Skorohod estimator in closed form.

    A zero direction still runs: the pathwise term vanishes and the estimate
    is the control term alone.
    """

    name = "skorohod"
    skips_zero_direction = False

    def __init__(self, randomization: Optional[RandomizationSpec] = None):
        self.randomization = randomization or RandomizationSpec()

    def _estimate(self, spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
        return greek_skorohod(spec, opt, req, self.randomization)

    @classmethod
    def from_config(cls, config) -> "SkorohodEstimator":
        return cls(RandomizationSpec(
            eval_point=config.GREEK_EVAL_POINT,
            lambda_nodes=config.GREEK_LAMBDA_NODES,
            lambda_width=config.GREEK_LAMBDA_WIDTH,
        ))


class SkorohodGridEstimator(SkorohodEstimator):
    """Randomized Skorohod estimator evaluated on the λ grid."""

    name = "skorohod_grid"

    def _estimate(self, spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
        return skorohod_lambda_grid(spec, opt, req, self.randomization)
