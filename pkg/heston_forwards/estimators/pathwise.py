import logging

from ..base import BaseGreekEstimator
from ..greeks import GreekEstimate, GreekRequest, check_eligibility, greek_engine, sensitivity_terms
from ..pricing import OptionSpec
from ..simulate import MCEstimate, ModelSpec

logger = logging.getLogger(__name__)


def greek_pathwise(spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
    """Mean of e^{−rτ}Φ'(J_{x,d}(X_τ))·J_{x,d}(DX_τ) along the tangent path of ``req``.

    The x0 tangent is S_τ h; the y0 and η tangents are simulated on the same
    increments as the base path.

    Raises:
        EligibilityError: for a non-differentiable payoff
    """
    check_eligibility(opt, "pathwise")
    engine = greek_engine(spec, opt, req)
    direction = req.as_direction()
    samples = engine.map_paths(lambda idx: sensitivity_terms(engine, opt, direction, idx)[1], req.n_paths)
    estimate = MCEstimate.from_samples(samples)
    logger.debug(f"Pathwise {req.parameter} estimate {estimate.value:.6g} ± {estimate.stderr:.2g}")
    return GreekEstimate.from_estimate("pathwise", req, estimate, pathwise_mean=estimate.value)


class PathwiseEstimator(BaseGreekEstimator):
    """Pathwise Fréchet-derivative estimator."""

    name = "pathwise"

    def _estimate(self, spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
        return greek_pathwise(spec, opt, req)

    @classmethod
    def from_config(cls, config) -> "PathwiseEstimator":
        return cls()
