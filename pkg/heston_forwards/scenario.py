"""Scenario files: loading, canonical dumping and model construction."""
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from .errors import ConfigurationError
from .filipovic import Grid, HwElement, WeightFn, combine, norm, read_curve_csv
from .greeks import GreekRequest
from .models import GreekBlock, ModelBlock, OptionBlock, RunBlock, ScenarioConfig, parse_number
from .operators import CovOp, FiniteRankOp, SemigroupSpec, build_onb, exponential_seeds
from .pricing import OptionSpec, Payoff, atm_strike
from .simulate import ModelSpec, ZPolicy

logger = logging.getLogger(__name__)

BLOCKS = {
    "MODEL_": ("model", ModelBlock),
    "OPTION_": ("option", OptionBlock),
    "RUN_": ("run", RunBlock),
    "GREEK_": ("greek", GreekBlock),
}


def load_config_from_env(env_file: Optional[Path] = None) -> Dict[str, str]:
    """Load scenario keys from environment variables.

    Args:
        env_file: Path to .env file

    Returns:
        Configuration dictionary
    """
    if env_file and Path(env_file).exists():
        load_dotenv(dotenv_path=env_file)
    else:
        load_dotenv()

    return {key: os.environ[key] for key in os.environ if key.startswith(tuple(BLOCKS))}


def parse_config(mapping: Dict[str, str]) -> ScenarioConfig:
    """Split prefixed keys into blocks and validate them.

    Raises:
        ConfigurationError: on an unknown key or an invalid value
    """
    blocks: Dict[str, dict] = {name: {} for name, _ in BLOCKS.values()}
    for key, value in mapping.items():
        prefix = next((p for p in BLOCKS if key.startswith(p)), None)
        if prefix is None:
            raise ConfigurationError(f"Unknown configuration key {key}")
        if value is None:
            raise ConfigurationError(f"Configuration key {key} has no value")
        blocks[BLOCKS[prefix][0]][key] = value
    try:
        return ScenarioConfig(**{name: cls(**blocks[name]) for name, cls in BLOCKS.values()})
    except ValidationError as e:
        logger.error(f"Invalid scenario configuration: {e}")
        raise ConfigurationError(f"Invalid scenario configuration: {e}")


def load_scenario(path: Optional[Union[str, Path]] = None) -> ScenarioConfig:
    """Read a scenario file, or the prefixed environment when no file is given."""
    if path is None:
        return parse_config(load_config_from_env())
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Scenario file {path} not found")
    return parse_config(dict(dotenv_values(path)))


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(config: ScenarioConfig) -> str:
    """Canonical KEY=VALUE text; parsing it gives back an identical config."""
    lines = []
    for name, _ in BLOCKS.values():
        block = getattr(config, name).model_dump()
        for key in sorted(block):
            if block[key] is not None:
                lines.append(f"{key}={_format(block[key])}")
    return "\n".join(lines) + "\n"


def with_run_overrides(config: ScenarioConfig, **overrides) -> ScenarioConfig:
    """Replace RUN_* values (``seed=...`` sets RUN_SEED) and re-validate."""
    values = config.run.model_dump()
    for key, value in overrides.items():
        if value is not None:
            values[f"RUN_{key.upper()}"] = value
    try:
        return config.model_copy(update={"run": RunBlock(**values)})
    except ValidationError as e:
        raise ConfigurationError(f"Invalid run override: {e}")


def _numbers(text: str) -> List[float]:
    return [parse_number(item) for item in text.split(",") if item.strip()]


def parse_curve(text: str, grid: Grid, basis: HwElement) -> HwElement:
    """Build a curve from ``kind:args``.

    constant:c, rise:a,b for a(1 − e^{−by}), decay:c,a,b for c + a·e^{−by},
    basis:c1,... on the orthonormal basis, csv:PATH, zero.
    """
    kind, _, args = text.partition(":")
    try:
        if kind == "zero":
            return HwElement.zeros(grid)
        if kind == "csv":
            curve = read_curve_csv(args, grid)
            if curve.valid_len < grid.size:
                raise ConfigurationError(f"Curve {args} has {curve.valid_len} cells, the grid needs {grid.size}")
            return curve
        values = _numbers(args)
        if kind == "constant":
            (c,) = values
            return HwElement.constant(grid, c)
        if kind == "rise":
            a, b = values
            return HwElement.from_function(grid, 0.0, lambda y: a * b * np.exp(-b * y))
        if kind == "decay":
            c, a, b = values
            return HwElement.from_function(grid, c + a, lambda y: -a * b * np.exp(-b * y))
        if kind == "basis":
            if len(values) > len(basis):
                raise ConfigurationError(f"{len(values)} coefficients for {len(basis)} basis vectors")
            return combine(np.asarray(values), basis[:len(values)])
    except (ValueError, OSError) as e:
        raise ConfigurationError(f"Malformed curve '{text}': {e}")
    raise ConfigurationError(f"Unknown curve kind in '{text}'")


def parse_operator(text: str, basis: HwElement) -> FiniteRankOp:
    """Build a finite-rank operator from ``diag:s1,...``, ``rank_one:i,j[,s]`` (1-based) or ``zero``."""
    kind, _, args = text.partition(":")
    try:
        if kind == "zero":
            return FiniteRankOp.zero(basis.grid)
        values = _numbers(args)
        if kind == "diag":
            return FiniteRankOp.diagonal(basis, values)
        if kind == "rank_one":
            if len(values) not in (2, 3) or any(v != int(v) for v in values[:2]):
                raise ValueError("expected rank_one:i,j[,s] with integer indices")
            scale = values[2] if len(values) == 3 else 1.0
            return FiniteRankOp.rank_one(basis, int(values[0]) - 1, int(values[1]) - 1, scale)
    except ValueError as e:
        raise ConfigurationError(f"Malformed operator '{text}': {e}")
    raise ConfigurationError(f"Unknown operator kind in '{text}'")


def build_grid(model: ModelBlock, option: OptionBlock) -> Grid:
    if model.MODEL_WEIGHT_TABLE:
        weight = WeightFn.from_csv(model.MODEL_WEIGHT_TABLE)
    else:
        weight = WeightFn.exponential(model.MODEL_ALPHA)
    if model.MODEL_EXTENSION is not None:
        return Grid(model.MODEL_SPACING, int(round(model.MODEL_LENGTH / model.MODEL_SPACING)),
                    model.MODEL_EXTENSION, weight)
    headroom = option.OPTION_TAU + option.OPTION_X + option.OPTION_D
    return Grid.build(model.MODEL_SPACING, model.MODEL_LENGTH, weight, headroom=headroom)


def model_basis(config: ScenarioConfig, grid: Grid, modes: Optional[int] = None) -> HwElement:
    """Orthonormal basis the curves and operators of the scenario are written on.

    It has at least MODEL_MODES vectors so that a smaller KL truncation keeps
    the initial curves and η intact.
    """
    return build_onb(exponential_seeds(grid, max(modes or 0, config.model.MODEL_MODES)))


def build_model(config: ScenarioConfig, modes: Optional[int] = None) -> ModelSpec:
    """ModelSpec of the scenario, horizon at the exercise time.

    Args:
        config: scenario
        modes: number of KL modes of Q_W and Q_B, overriding MODEL_MODES
    """
    model = config.model
    grid = build_grid(model, config.option)
    count = modes or model.MODEL_MODES
    basis = model_basis(config, grid, modes)
    noise_basis = basis[:count]
    if model.MODEL_Z_POLICY == "constant":
        z_policy = ZPolicy.constant(parse_curve(model.MODEL_GAMMA, grid, basis))
    else:
        z_policy = ZPolicy.normalized_y()
    spec = ModelSpec(
        x0=parse_curve(model.MODEL_X0, grid, basis),
        y0=parse_curve(model.MODEL_Y0, grid, basis),
        eta=parse_operator(model.MODEL_ETA, basis),
        q_w=CovOp.power_law(noise_basis, model.MODEL_QW_SCALE, model.MODEL_QW_DECAY),
        q_b=CovOp.power_law(noise_basis, model.MODEL_QB_SCALE, model.MODEL_QB_DECAY),
        z_policy=z_policy,
        s_semigroup=SemigroupSpec(model.MODEL_S_KIND, model.MODEL_S_KAPPA),
        u_semigroup=SemigroupSpec(model.MODEL_U_KIND, model.MODEL_U_KAPPA),
        horizon=config.option.OPTION_TAU,
    )
    logger.info(f"Model built on {grid.n_nodes}+{grid.extension} cells of {grid.spacing:.6g} with {count} modes")
    return spec


def build_option(config: ScenarioConfig, spec: ModelSpec) -> OptionSpec:
    """OptionSpec of the scenario; ``atm`` resolves to J_{x,d}(S_τ x0)."""
    block = config.option
    payoff = Payoff(block.OPTION_PAYOFF, 0.0, block.OPTION_SMOOTHING)
    opt = OptionSpec(block.OPTION_TAU, block.OPTION_X, block.OPTION_D, block.OPTION_R, payoff)
    strike = atm_strike(spec, opt) if block.OPTION_STRIKE == "atm" else float(block.OPTION_STRIKE)
    return OptionSpec(opt.tau, opt.x, opt.d, opt.r, Payoff(payoff.kind, strike, payoff.smoothing))


def _unit(direction: Union[HwElement, FiniteRankOp]):
    size = direction.hs_norm() if isinstance(direction, FiniteRankOp) else float(norm(direction))
    if size == 0.0:
        return direction
    if isinstance(direction, FiniteRankOp):
        return direction.scaled(1.0 / size)
    return direction / size


@dataclass(frozen=True, eq=False)
class Scenario:
    """A parsed scenario with its model, option and orthonormal basis."""

    config: ScenarioConfig
    spec: ModelSpec
    option: OptionSpec
    basis: HwElement

    @classmethod
    def from_config(cls, config: ScenarioConfig, modes: Optional[int] = None) -> "Scenario":
        spec = build_model(config, modes)
        return cls(config, spec, build_option(config, spec), model_basis(config, spec.grid, modes))

    def direction(self, parameter: str) -> Union[HwElement, FiniteRankOp]:
        """Unit-norm direction of ``parameter``; a zero direction stays zero."""
        greek = self.config.greek
        if parameter == "eta":
            return _unit(parse_operator(greek.GREEK_ETA_DIRECTION, self.basis))
        text = greek.GREEK_X0_DIRECTION if parameter == "x0" else greek.GREEK_Y0_DIRECTION
        return _unit(parse_curve(text, self.spec.grid, self.basis))

    def requests(self) -> List[GreekRequest]:
        run, greek = self.config.run, self.config.greek
        labels = {"x0": greek.GREEK_X0_DIRECTION, "y0": greek.GREEK_Y0_DIRECTION, "eta": greek.GREEK_ETA_DIRECTION}
        return [
            GreekRequest(
                parameter=parameter,
                direction=self.direction(parameter),
                estimator=greek.estimator_names[0],
                fd_epsilon=greek.GREEK_FD_EPSILON,
                n_paths=run.RUN_N_PATHS,
                seed=run.RUN_SEED,
                direction_id=labels[parameter],
                threads=run.RUN_THREADS,
                batch_size=run.RUN_BATCH_SIZE,
            )
            for parameter in greek.parameter_names
        ]

    @property
    def is_deterministic(self) -> bool:
        """True when y0 = 0 and η = 0, so every path follows S_t x0."""
        return float(norm(self.spec.y0)) == 0.0 and self.spec.eta.hs_norm() == 0.0
