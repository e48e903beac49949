"""Versioned CSV reports with an optional JSON mirror."""
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import pandas as pd

from .errors import ArgumentError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.12g"

SCHEMAS: Dict[str, List[str]] = {
    "paths": ["path", "step", "probe_x", "Y_value", "X_value"],
    "simulate_summary": ["probe_x", "n_paths", "mean", "stderr", "expected", "z_score"],
    "price": ["payoff", "K", "kappa", "tau", "x", "d", "r", "n_paths", "price", "stderr", "seed",
              "closed_form", "z_score", "modes"],
    "greeks": ["parameter", "estimator", "direction_id", "value", "stderr", "n_paths", "eps_or_evalpoint",
               "control_mean", "control_stderr", "seed"],
    "concordance": ["parameter", "direction_id", "estimator_a", "estimator_b", "value_a", "value_b", "z_score"],
    "analytics": ["quantity", "params", "closed_form", "mc_estimate", "mc_stderr", "z_score"],
    "verify": ["name", "measured", "bound", "passed"],
}


def schema_line(schema: str) -> str:
    return f"# schema: {schema} v{SCHEMA_VERSION}"


def build_frame(schema: str, rows: Iterable[dict]) -> pd.DataFrame:
    """Rows in the column order of ``schema``.

    Raises:
        ArgumentError: for an unknown schema or rows with missing columns
    """
    if schema not in SCHEMAS:
        raise ArgumentError(f"Unknown report schema '{schema}'")
    columns = SCHEMAS[schema]
    frame = pd.DataFrame(list(rows), columns=None)
    if frame.empty:
        return pd.DataFrame(columns=columns)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ArgumentError(f"Report rows for '{schema}' lack columns {missing}")
    return frame[columns]


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "item"):
        return _clean(value.item())
    return value


def write_report(schema: str, rows: Iterable[dict], out_dir: Union[str, Path], name: Optional[str] = None,
                 as_json: bool = False) -> Path:
    """Write ``rows`` as ``<name>.csv`` (and ``<name>.json`` when requested).

    The CSV starts with the schema line, floats use a fixed format so equal
    results produce identical bytes.

    Returns:
        Path of the CSV file
    """
    frame = build_frame(schema, rows)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = name or schema
    path = out_dir / f"{stem}.csv"
    with open(path, "w", newline="") as handle:
        handle.write(schema_line(schema) + "\n")
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if as_json:
        records = [{key: _clean(value) for key, value in record.items()}
                   for record in frame.to_dict(orient="records")]
        payload = {"schema": schema, "version": SCHEMA_VERSION, "rows": records}
        with open(out_dir / f"{stem}.json", "w") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
    logger.info(f"Wrote {len(frame)} {schema} rows to {path}")
    return path


def read_report(path: Union[str, Path]) -> pd.DataFrame:
    """Read a report CSV, checking its schema line.

    Raises:
        ArgumentError: if the file does not start with a known schema line
    """
    path = Path(path)
    with open(path) as handle:
        first = handle.readline().strip()
    schema = first.removeprefix("# schema: ").rsplit(" v", 1)[0] if first.startswith("# schema: ") else None
    if schema not in SCHEMAS:
        raise ArgumentError(f"{path} does not start with a known schema line")
    return pd.read_csv(path, comment="#")
