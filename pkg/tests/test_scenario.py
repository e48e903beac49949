import math
import os
import unittest

import numpy as np
import pytest

from heston_forwards.errors import ConfigurationError
from heston_forwards.filipovic import WeightFn, evaluate, norm, write_curve_csv
from heston_forwards.models import OptionBlock, RunBlock, parse_number
from heston_forwards.operators import FiniteRankOp
from heston_forwards.pricing import atm_strike
from heston_forwards.scenario import (
    dump_config,
    load_config_from_env,
    load_scenario,
    parse_config,
    parse_curve,
    parse_operator,
    with_run_overrides,
)

from tests.base import SMALL_SCENARIO, small_scenario


class ScenarioConfigTest(unittest.TestCase):
    """Parsing and validation of KEY=VALUE scenarios."""

    def test_defaults(self):
        config = parse_config({})
        self.assertEqual(config.model.MODEL_SPACING, 1 / 64)
        self.assertEqual(config.option.OPTION_STRIKE, "atm")
        self.assertEqual(config.greek.estimator_names, ["fd", "pathwise", "skorohod"])

    def test_fractions(self):
        config = parse_config(SMALL_SCENARIO)
        self.assertEqual(config.model.MODEL_SPACING, 1 / 32)
        self.assertEqual(parse_number("1/64"), 1 / 64)
        self.assertEqual(parse_number(" 2.5 "), 2.5)
        with self.assertRaises(ValueError):
            parse_number("1/0")

    def test_dump_round_trip(self):
        config = parse_config({**SMALL_SCENARIO, "OPTION_STRIKE": "1.05", "GREEK_ESTIMATORS": "FD, pathwise"})
        text = dump_config(config)
        again = parse_config(dict(line.split("=", 1) for line in text.splitlines()))
        self.assertEqual(again, config)
        self.assertEqual(dump_config(again), text)
        self.assertIn("GREEK_ESTIMATORS=fd,pathwise\n", text)

    def test_unknown_key(self):
        with self.assertRaises(ConfigurationError):
            parse_config({"SIGMA": "0.2"})
        with self.assertRaises(ConfigurationError):
            parse_config({"MODEL_SPEED": "1"})

    def test_invalid_values(self):
        for key, value in (("MODEL_SPACING", "0"), ("MODEL_MODES", "0"), ("MODEL_X0", "spline:1"),
                           ("MODEL_ETA", "full:1"), ("MODEL_Z_POLICY", "random"), ("OPTION_D", "0"),
                           ("OPTION_PAYOFF", "put"), ("OPTION_STRIKE", "high"), ("RUN_N_PATHS", "0"),
                           ("RUN_PROBES", "0,-1"), ("GREEK_PARAMETERS", "rho"), ("GREEK_FD_EPSILON", "0")):
            with self.assertRaises(ConfigurationError, msg=key):
                parse_config({key: value})

    def test_run_overrides(self):
        config = with_run_overrides(parse_config(SMALL_SCENARIO), seed=42, threads=None, out="reports")
        self.assertEqual(config.run.RUN_SEED, 42)
        self.assertEqual(config.run.RUN_THREADS, 1)
        self.assertEqual(config.run.RUN_OUT, "reports")
        with self.assertRaises(ConfigurationError):
            with_run_overrides(config, threads=0)

    def test_probe_list(self):
        self.assertEqual(RunBlock(RUN_PROBES="0, 1/4,1").probes, [0.0, 0.25, 1.0])

    def test_strike_is_normalised(self):
        self.assertEqual(OptionBlock(OPTION_STRIKE="1/2").OPTION_STRIKE, "0.5")


class ScenarioBuildTest(unittest.TestCase):
    """Model construction from a parsed scenario."""

    def setUp(self):
        self.scenario = small_scenario()
        self.grid = self.scenario.spec.grid
        self.basis = self.scenario.basis

    def test_grid_covers_the_option(self):
        grid = self.grid
        self.assertEqual(grid.n_nodes, 256)
        self.assertGreaterEqual(grid.extension * grid.spacing, 0.75)
        self.assertEqual(self.scenario.spec.n_steps, 8)

    def test_modes_override(self):
        self.assertEqual(self.scenario.spec.q_w.count, 4)
        truncated = small_scenario(modes=2)
        self.assertEqual(truncated.spec.q_b.count, 2)
        self.assertEqual(len(truncated.basis), 4)
        self.assertEqual(truncated.spec.eta.rank, 3)

    def test_atm_strike(self):
        self.assertEqual(self.scenario.option.payoff.strike, atm_strike(self.scenario.spec, self.scenario.option))
        fixed = small_scenario(OPTION_STRIKE="1.1")
        self.assertEqual(fixed.option.payoff.strike, 1.1)

    def test_curves(self):
        points = np.array([0.0, 0.5, 2.0])
        rise = parse_curve("rise:2,3", self.grid, self.basis)
        np.testing.assert_allclose(evaluate(rise, points), 2 * (1 - np.exp(-3 * points)), atol=2e-3)
        decay = parse_curve("decay:1.2,-0.2,1", self.grid, self.basis)
        self.assertAlmostEqual(float(evaluate(decay, 0.0)), 1.0, places=14)
        self.assertEqual(float(norm(parse_curve("zero", self.grid, self.basis))), 0.0)
        combined = parse_curve("basis:0,2", self.grid, self.basis)
        self.assertAlmostEqual(float(norm(combined)), 2.0, places=12)

    def test_malformed_curves(self):
        for text in ("constant:1,2", "rise:1", "basis:1,2,3,4,5", "spline:1", "constant:abc"):
            with self.assertRaises(ConfigurationError, msg=text):
                parse_curve(text, self.grid, self.basis)

    def test_operators(self):
        eta = parse_operator("diag:0.3,0.2", self.basis)
        self.assertAlmostEqual(eta.hs_norm(), math.sqrt(0.13), places=12)
        swap = parse_operator("rank_one:1,3,0.5", self.basis)
        self.assertAlmostEqual(swap.hs_norm(), 0.5, places=12)
        self.assertEqual(parse_operator("zero", self.basis).rank, 0)
        for text in ("rank_one:1", "rank_one:1.5,2", "rank_one:1,9", "full:1"):
            with self.assertRaises(ConfigurationError, msg=text):
                parse_operator(text, self.basis)

    def test_unit_directions(self):
        for parameter in ("x0", "y0"):
            self.assertAlmostEqual(float(norm(self.scenario.direction(parameter))), 1.0, places=12)
        eta = self.scenario.direction("eta")
        self.assertIsInstance(eta, FiniteRankOp)
        self.assertAlmostEqual(eta.hs_norm(), 1.0, places=12)
        zero = small_scenario(GREEK_Y0_DIRECTION="zero")
        self.assertEqual(float(norm(zero.direction("y0"))), 0.0)

    def test_requests(self):
        scenario = small_scenario(GREEK_PARAMETERS="y0,eta", GREEK_ESTIMATORS="skorohod,fd", RUN_SEED="5")
        requests = scenario.requests()
        self.assertEqual([r.parameter for r in requests], ["y0", "eta"])
        self.assertEqual({r.estimator for r in requests}, {"skorohod"})
        self.assertEqual({r.seed for r in requests}, {5})
        self.assertEqual(requests[1].direction_id, scenario.config.greek.GREEK_ETA_DIRECTION)

    def test_deterministic_flag(self):
        self.assertFalse(self.scenario.is_deterministic)
        self.assertTrue(small_scenario(MODEL_Y0="zero", MODEL_ETA="zero").is_deterministic)

    def test_grid_without_headroom(self):
        with self.assertRaises(ConfigurationError):
            small_scenario(MODEL_EXTENSION="2")


def test_load_scenario_file(scenario_file, small_config):
    assert load_scenario(scenario_file) == small_config


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_scenario(tmp_path / "missing.env")


def test_load_rejects_unknown_key(make_scenario_file):
    with pytest.raises(ConfigurationError):
        load_scenario(make_scenario_file(MODEL_SPEED="1"))


def test_load_from_environment(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("MODEL_MODES", "3")
    monkeypatch.setenv("RUN_SEED", "9")
    config = load_scenario()
    assert config.model.MODEL_MODES == 3
    assert config.run.RUN_SEED == 9
    assert set(load_config_from_env()) >= {"MODEL_MODES", "RUN_SEED"}


def test_env_file_values(monkeypatch, tmp_path):
    env_file = tmp_path / "scenario.env"
    env_file.write_text("OPTION_TAU=0.125\n")
    monkeypatch.delenv("OPTION_TAU", raising=False)
    try:
        assert load_config_from_env(env_file)["OPTION_TAU"] == "0.125"
    finally:
        os.environ.pop("OPTION_TAU", None)


def test_csv_curve(tmp_path, small_grid, small_basis):
    curve = small_basis[1] * 3.0
    path = write_curve_csv(curve, tmp_path / "x0.csv")
    loaded = parse_curve(f"csv:{path}", small_grid, small_basis)
    np.testing.assert_array_equal(loaded.deriv, curve.deriv)


def test_weight_table_scenario(tmp_path):
    path = tmp_path / "weight.csv"
    path.write_text("x,w\n0,1\n20,21\n")
    scenario = small_scenario(MODEL_WEIGHT_TABLE=str(path))
    assert scenario.spec.grid.weight == WeightFn.tabulated([0.0, 20.0], [1.0, 21.0])
    assert float(norm(scenario.basis[0])) == pytest.approx(1.0, abs=1e-12)
