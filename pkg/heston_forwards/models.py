"""Scenario configuration blocks.

Keys carry their block prefix (``MODEL_``, ``OPTION_``, ``RUN_``, ``GREEK_``)
so a scenario is a flat KEY=VALUE file. Times are in years, rates in 1/years,
prices in the units of the initial curve.
"""
import math
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, field_validator

CURVE_KINDS = ("constant", "rise", "decay", "basis", "csv", "zero")
OPERATOR_KINDS = ("diag", "rank_one", "zero")
PAYOFF_NAMES = ("linear", "call", "smoothed_call")


def parse_number(value):
    """Decimal or fraction (``1/64``) to float."""
    if isinstance(value, str):
        text = value.strip()
        try:
            return float(Fraction(text)) if "/" in text else float(text)
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"'{value}' is not a number")
    return value


def _check_spec(value: str, kinds) -> str:
    kind = value.split(":", 1)[0].strip()
    if kind not in kinds:
        raise ValueError(f"'{value}' must start with one of {', '.join(kinds)}")
    return value.strip()


class ModelBlock(BaseModel):
    """Grid, curves, noise and dynamics."""
    MODEL_ALPHA: float = 1.0  # weight rate α, 1/years
    MODEL_WEIGHT_TABLE: Optional[str] = None  # CSV with columns x, w; replaces the exponential weight
    MODEL_SPACING: float = 1 / 64  # Δx = Δt, years
    MODEL_LENGTH: float = 30.0  # quadrature window L, years
    MODEL_EXTENSION: Optional[int] = None  # headroom cells; default covers τ + x + d
    MODEL_MODES: int = 8  # KL modes M of Q_W and Q_B
    MODEL_QW_SCALE: float = 1.0  # λ_n = scale · n^(−decay)
    MODEL_QW_DECAY: float = 3.0
    MODEL_QB_SCALE: float = 1.0
    MODEL_QB_DECAY: float = 3.0
    MODEL_X0: str = "decay:1.2,-0.2,1.0"
    MODEL_Y0: str = "constant:0.5"
    MODEL_ETA: str = "diag:0.3,0.2,0.1"
    MODEL_S_KIND: str = "left_shift"
    MODEL_S_KAPPA: float = 0.0  # 1/years
    MODEL_U_KIND: str = "damped_left_shift"
    MODEL_U_KAPPA: float = 0.5  # 1/years
    MODEL_Z_POLICY: str = "constant"
    MODEL_GAMMA: str = "constant:1"

    @field_validator("MODEL_ALPHA", "MODEL_SPACING", "MODEL_LENGTH", "MODEL_QW_SCALE", "MODEL_QW_DECAY",
                     "MODEL_QB_SCALE", "MODEL_QB_DECAY", "MODEL_S_KAPPA", "MODEL_U_KAPPA", mode="before")
    def validate_number(cls, v):
        return parse_number(v)

    @field_validator("MODEL_ALPHA", "MODEL_SPACING", "MODEL_LENGTH")
    def validate_positive(cls, v):
        if not v > 0 or not math.isfinite(v):
            raise ValueError(f"must be positive and finite, got {v}")
        return v

    @field_validator("MODEL_QW_SCALE", "MODEL_QB_SCALE", "MODEL_S_KAPPA", "MODEL_U_KAPPA")
    def validate_nonnegative(cls, v):
        if v < 0:
            raise ValueError(f"must be nonnegative, got {v}")
        return v

    @field_validator("MODEL_MODES")
    def validate_modes(cls, v):
        if v < 1:
            raise ValueError(f"needs at least one mode, got {v}")
        return v

    @field_validator("MODEL_X0", "MODEL_Y0", "MODEL_GAMMA")
    def validate_curve(cls, v):
        return _check_spec(v, CURVE_KINDS)

    @field_validator("MODEL_ETA")
    def validate_operator(cls, v):
        return _check_spec(v, OPERATOR_KINDS)

    @field_validator("MODEL_Z_POLICY")
    def validate_policy(cls, v):
        if v not in ("constant", "normalized_y"):
            raise ValueError(f"Z policy must be 'constant' or 'normalized_y', got {v}")
        return v

    @field_validator("MODEL_WEIGHT_TABLE")
    def validate_weight_table(cls, v):
        if v is not None and not Path(v).is_file():
            raise ValueError(f"Weight table {v} does not exist")
        return v

    class Config:
        extra = "forbid"


class OptionBlock(BaseModel):
    """Option on the forward delivering over [τ + x, τ + x + d]."""
    OPTION_TAU: float = 0.5  # exercise time, years
    OPTION_X: float = 0.25  # time from exercise to delivery start, years
    OPTION_D: float = 0.25  # delivery length, years
    OPTION_R: float = 0.02  # interest rate, 1/years
    OPTION_PAYOFF: str = "smoothed_call"
    OPTION_STRIKE: str = "atm"  # price, or atm for J_{x,d}(S_τ x0)
    OPTION_SMOOTHING: float = 0.1  # κ, price units

    @field_validator("OPTION_TAU", "OPTION_X", "OPTION_D", "OPTION_R", "OPTION_SMOOTHING", mode="before")
    def validate_number(cls, v):
        return parse_number(v)

    @field_validator("OPTION_TAU", "OPTION_X")
    def validate_nonnegative(cls, v):
        if v < 0:
            raise ValueError(f"must be nonnegative, got {v}")
        return v

    @field_validator("OPTION_D", "OPTION_SMOOTHING")
    def validate_positive(cls, v):
        if not v > 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    @field_validator("OPTION_PAYOFF")
    def validate_payoff(cls, v):
        if v not in PAYOFF_NAMES:
            raise ValueError(f"payoff must be one of {', '.join(PAYOFF_NAMES)}, got {v}")
        return v

    @field_validator("OPTION_STRIKE", mode="before")
    def validate_strike(cls, v):
        text = str(v).strip()
        if text != "atm":
            text = repr(parse_number(text))
        return text

    class Config:
        extra = "forbid"


class RunBlock(BaseModel):
    """Monte Carlo and output settings."""
    RUN_N_PATHS: int = 100_000
    RUN_SEED: int = 0
    RUN_THREADS: int = 1
    RUN_BATCH_SIZE: int = 256
    RUN_OUT: str = "out"
    RUN_DUMP_PATHS: int = 8  # paths written by simulate
    RUN_PROBES: str = "0,0.25,0.5,1,2"  # maturities of the path dump and summary, years
    RUN_VERIFY_PATHS: int = 20_000
    RUN_Z_BOUND: float = 3.0
    RUN_TEMPLATE_DIR: Optional[str] = None

    @field_validator("RUN_N_PATHS", "RUN_THREADS", "RUN_BATCH_SIZE", "RUN_VERIFY_PATHS")
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError(f"must be positive, got {v}")
        return v

    @field_validator("RUN_SEED", "RUN_DUMP_PATHS")
    def validate_nonnegative(cls, v):
        if v < 0:
            raise ValueError(f"must be nonnegative, got {v}")
        return v

    @field_validator("RUN_PROBES")
    def validate_probes(cls, v):
        values = [parse_number(item) for item in v.split(",")]
        if any(x < 0 for x in values):
            raise ValueError("probe maturities must be nonnegative")
        return ",".join(repr(x) for x in values)

    @field_validator("RUN_TEMPLATE_DIR")
    def validate_template_dir(cls, v):
        """Validate that the template path is a directory if it exists."""
        if v is None:
            return v

        path = Path(v)
        if path.exists() and not path.is_dir():
            raise ValueError(f"Template path exists but is not a directory: {path}")
        return v

    @property
    def probes(self) -> List[float]:
        return [float(item) for item in self.RUN_PROBES.split(",")]

    class Config:
        extra = "forbid"


class GreekBlock(BaseModel):
    """Greek requests: parameters, directions and estimators."""
    GREEK_PARAMETERS: str = "x0,y0,eta"
    GREEK_X0_DIRECTION: str = "rise:1,1"
    GREEK_Y0_DIRECTION: str = "constant:1"
    GREEK_ETA_DIRECTION: str = "diag:1"
    GREEK_ESTIMATORS: str = "fd,pathwise,skorohod"
    GREEK_FD_EPSILON: float = 1e-3
    GREEK_EVAL_POINT: float = 0.25  # kernel point x of the randomizer, years
    GREEK_LAMBDA_NODES: int = 1025
    GREEK_LAMBDA_WIDTH: float = 5.0  # grid spans exp(±width·√τ)

    @field_validator("GREEK_FD_EPSILON", "GREEK_EVAL_POINT", "GREEK_LAMBDA_WIDTH", mode="before")
    def validate_number(cls, v):
        return parse_number(v)

    @field_validator("GREEK_PARAMETERS")
    def validate_parameters(cls, v):
        names = [item.strip() for item in v.split(",") if item.strip()]
        unknown = set(names) - {"x0", "y0", "eta"}
        if unknown or not names:
            raise ValueError(f"parameters must be drawn from x0, y0, eta, got {v}")
        return ",".join(names)

    @field_validator("GREEK_ESTIMATORS")
    def validate_estimators(cls, v):
        names = [item.strip().lower() for item in v.split(",") if item.strip()]
        if not names:
            raise ValueError("at least one estimator is required")
        return ",".join(names)

    @field_validator("GREEK_X0_DIRECTION", "GREEK_Y0_DIRECTION")
    def validate_curve(cls, v):
        return _check_spec(v, CURVE_KINDS)

    @field_validator("GREEK_ETA_DIRECTION")
    def validate_operator(cls, v):
        return _check_spec(v, OPERATOR_KINDS)

    @field_validator("GREEK_FD_EPSILON")
    def validate_epsilon(cls, v):
        if not v > 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    @field_validator("GREEK_EVAL_POINT")
    def validate_eval_point(cls, v):
        if v < 0:
            raise ValueError(f"must be nonnegative, got {v}")
        return v

    @property
    def parameter_names(self) -> List[str]:
        return self.GREEK_PARAMETERS.split(",")

    @property
    def estimator_names(self) -> List[str]:
        return self.GREEK_ESTIMATORS.split(",")

    class Config:
        extra = "forbid"


class ScenarioConfig(BaseModel):
    """A full scenario: one block per key prefix."""
    model: ModelBlock = ModelBlock()
    option: OptionBlock = OptionBlock()
    run: RunBlock = RunBlock()
    greek: GreekBlock = GreekBlock()

    class Config:
        extra = "forbid"
