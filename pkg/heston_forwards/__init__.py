import logging

from .base import BaseGreekEstimator, ReportRenderer
from .errors import HestonForwardsError
from .filipovic import Grid, HwElement, WeightFn
from .greeks import GreekEstimate, GreekRequest, RandomizationSpec
from .pricing import OptionSpec, Payoff, price_option
from .scenario import Scenario, load_scenario
from .service import GreekService, create_greek_service
from .simulate import MCEstimate, ModelSpec, PathEngine, simulate_path

logger = logging.getLogger(__name__)

__all__ = [
    'BaseGreekEstimator', 'ReportRenderer', 'HestonForwardsError', 'Grid', 'HwElement', 'WeightFn',
    'GreekEstimate', 'GreekRequest', 'RandomizationSpec', 'OptionSpec', 'Payoff', 'price_option',
    'Scenario', 'load_scenario', 'GreekService', 'create_greek_service', 'MCEstimate', 'ModelSpec',
    'PathEngine', 'simulate_path', 'logger',
]
