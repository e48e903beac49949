"""
Pytest configuration file.

This file contains fixtures that are available to all test modules.
"""
import pytest

from heston_forwards import ReportRenderer
from heston_forwards.filipovic import Grid, WeightFn
from heston_forwards.operators import build_onb, exponential_seeds
from heston_forwards.scenario import dump_config, parse_config

from tests.base import SMALL_SCENARIO


@pytest.fixture
def small_grid():
    """Grid with Δx = 1/32 over [0, 8] and one year of shift headroom."""
    return Grid.build(1 / 32, 8.0, WeightFn.exponential(1.0), headroom=1.0)


@pytest.fixture
def small_basis(small_grid):
    return build_onb(exponential_seeds(small_grid, 4))


@pytest.fixture
def small_config():
    return parse_config(dict(SMALL_SCENARIO))


@pytest.fixture
def scenario_file(tmp_path, small_config):
    """The small scenario written as a KEY=VALUE file."""
    path = tmp_path / "scenario.env"
    path.write_text(dump_config(small_config))
    return path


@pytest.fixture
def make_scenario_file(tmp_path, small_config):
    """Write the small scenario with extra KEY=VALUE lines to a new file."""
    counter = {"n": 0}

    def write(**overrides):
        counter["n"] += 1
        path = tmp_path / f"scenario_{counter['n']}.env"
        lines = [dump_config(small_config)] + [f"{key}={value}\n" for key, value in overrides.items()]
        path.write_text("".join(lines))
        return path

    return write


@pytest.fixture
def template_dir(tmp_path):
    """Directory with a custom verify template."""
    directory = tmp_path / "templates"
    directory.mkdir()
    (directory / "verify.txt").write_text("custom {{ checks | length }}\n")
    return directory


@pytest.fixture
def report_renderer(template_dir):
    return ReportRenderer(template_dir=template_dir)
