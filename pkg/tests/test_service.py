import unittest

from heston_forwards import BaseGreekEstimator, GreekEstimate, GreekService, create_greek_service
from heston_forwards.errors import ConfigurationError
from heston_forwards.estimators import FiniteDifferenceEstimator, PathwiseEstimator, SkorohodEstimator
from heston_forwards.models import GreekBlock

from tests.base import Z_BOUND, small_scenario


class ConstantEstimator(BaseGreekEstimator):
    """Estimator returning a fixed value, for registry tests."""

    name = "constant"

    def __init__(self, value: float = 1.0):
        self.value = value

    def _estimate(self, spec, opt, req):
        return GreekEstimate(self.name, req.parameter, self.value, 0.1, req.n_paths, direction_id=req.direction_id)

    @classmethod
    def from_config(cls, config):
        return cls()


class GreekServiceTest(unittest.TestCase):
    """Tests for the estimator registry and cross-checks."""

    def test_configured_estimators(self):
        service = create_greek_service(GreekBlock(GREEK_ESTIMATORS="fd,pathwise,skorohod"))
        self.assertIsInstance(service.get_estimator("fd"), FiniteDifferenceEstimator)
        self.assertIsInstance(service.get_estimator("pathwise"), PathwiseEstimator)
        self.assertIsInstance(service.get_estimator("skorohod"), SkorohodEstimator)
        self.assertEqual(service.get_estimator("fd").epsilon, 1e-3)

    def test_invalid_estimator(self):
        with self.assertRaises(ConfigurationError):
            create_greek_service(GreekBlock(GREEK_ESTIMATORS="malliavin"))

    def test_unconfigured_estimator(self):
        service = create_greek_service(GreekBlock(GREEK_ESTIMATORS="pathwise"))
        with self.assertRaises(ConfigurationError):
            service.get_estimator("fd")

    def test_estimators_read_their_settings(self):
        block = GreekBlock(GREEK_ESTIMATORS="fd,skorohod", GREEK_FD_EPSILON="1/256", GREEK_EVAL_POINT="0.5")
        service = create_greek_service(block)
        self.assertEqual(service.get_estimator("fd").epsilon, 1 / 256)
        self.assertEqual(service.get_estimator("skorohod").randomization.eval_point, 0.5)

    def test_register_estimator(self):
        GreekService.register_estimator("Constant", ConstantEstimator)
        self.addCleanup(GreekService.ESTIMATORS.pop, "constant")
        scenario = small_scenario(GREEK_ESTIMATORS="constant,pathwise", GREEK_PARAMETERS="x0", RUN_N_PATHS="64")
        service = create_greek_service(scenario.config.greek)
        results = service.run(scenario.spec, scenario.option, scenario.requests())
        self.assertEqual([r.estimator for r in results], ["constant", "pathwise"])
        self.assertEqual(results[0].value, 1.0)

    def test_run_and_concordance(self):
        scenario = small_scenario(GREEK_ESTIMATORS="fd,pathwise,skorohod", GREEK_PARAMETERS="x0,y0",
                                  RUN_N_PATHS="2000")
        service = create_greek_service(scenario.config.greek)
        results = service.run(scenario.spec, scenario.option, scenario.requests())
        self.assertEqual(len(results), 6)
        self.assertEqual({r.n_paths for r in results}, {2000})

        rows = GreekService.concordance(results)
        self.assertEqual(len(rows), 6)
        self.assertEqual({(row["estimator_a"], row["estimator_b"]) for row in rows},
                         {("fd", "pathwise"), ("fd", "skorohod"), ("pathwise", "skorohod")})
        for row in rows:
            self.assertEqual(row["direction_id"],
                             scenario.config.greek.GREEK_X0_DIRECTION if row["parameter"] == "x0"
                             else scenario.config.greek.GREEK_Y0_DIRECTION)
            self.assertLessEqual(abs(row["z_score"]), 2 * Z_BOUND)

    def test_concordance_groups_by_direction(self):
        first = GreekEstimate("fd", "x0", 1.0, 0.1, 10, direction_id="a")
        second = GreekEstimate("pathwise", "x0", 1.2, 0.1, 10, direction_id="b")
        self.assertEqual(GreekService.concordance([first, second]), [])
