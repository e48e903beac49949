import logging
from itertools import combinations
from typing import Dict, List, Protocol, Sequence, Type

from .errors import ConfigurationError
from .estimators import estimators as greek_estimators
from .greeks import GreekEstimate, GreekRequest
from .pricing import OptionSpec
from .simulate import ModelSpec

logger = logging.getLogger(__name__)


class GreekEstimator(Protocol):
    """Protocol defining the interface for Greek estimators."""

    def estimate(self, spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> GreekEstimate:
        """Estimate one directional sensitivity."""
        ...


class GreekService:
    """
    Factory for creating and running Greek estimators.

    The service instantiates every estimator named in the greek block and runs
    each request through all of them, so their results can be cross-checked.
    """

    ESTIMATORS = greek_estimators

    def __init__(self, config):
        """Initialize the service with the configured estimators.

        Args:
            config: Greek block of a scenario

        Raises:
            ConfigurationError: if an estimator name is not registered
        """
        self.estimators: Dict[str, GreekEstimator] = {}
        for name in config.estimator_names:
            if name not in self.ESTIMATORS:
                raise ConfigurationError(f"Invalid Greek estimator {name}")
            self.estimators[name] = self.ESTIMATORS[name].from_config(config)

        logger.info(f"Greek service initialized with estimators {', '.join(self.estimators)}")

    def estimate(self, spec: ModelSpec, opt: OptionSpec, req: GreekRequest) -> List[GreekEstimate]:
        """Run one request through every configured estimator."""
        return [estimator.estimate(spec, opt, req.with_estimator(name))
                for name, estimator in self.estimators.items()]

    def run(self, spec: ModelSpec, opt: OptionSpec, requests: Sequence[GreekRequest]) -> List[GreekEstimate]:
        results = []
        for req in requests:
            results.extend(self.estimate(spec, opt, req))
        return results

    @staticmethod
    def concordance(results: Sequence[GreekEstimate]) -> List[dict]:
        """Pairwise z-scores between estimators of the same parameter and direction."""
        groups: Dict[tuple, List[GreekEstimate]] = {}
        for result in results:
            groups.setdefault((result.parameter, result.direction_id), []).append(result)
        rows = []
        for (parameter, direction_id), group in groups.items():
            for left, right in combinations(group, 2):
                rows.append({
                    "parameter": parameter,
                    "direction_id": direction_id,
                    "estimator_a": left.estimator,
                    "estimator_b": right.estimator,
                    "value_a": left.value,
                    "value_b": right.value,
                    "z_score": left.z_against(right),
                })
        return rows

    @classmethod
    def register_estimator(cls, name: str, estimator_class: Type):
        """Register a new estimator class.

        Args:
            name: Name of the estimator
            estimator_class: Class with ``from_config`` that implements the GreekEstimator protocol
        """
        cls.ESTIMATORS[name.lower()] = estimator_class

    def get_estimator(self, name: str) -> GreekEstimator:
        """Get a configured estimator instance.

        Raises:
            ConfigurationError: if the estimator was not configured
        """
        if name not in self.estimators:
            raise ConfigurationError(f"Estimator {name} is not configured")
        return self.estimators[name]


def create_greek_service(config) -> GreekService:
    """Create a Greek service from the greek block of a scenario
    """

    return GreekService(config)
