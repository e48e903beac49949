"""Numerical realisation of the Filipović space H_w.

A curve h is stored as its value h(0) plus samples of its weak derivative
h' on the cells [iΔx, (i+1)Δx) of a uniform grid. Between nodes the curve is
linear, so node values follow from a running sum of the derivative samples
and off-node values from linear interpolation.

The inner product uses one weight per cell, the harmonic cell weight

    W_i = Δx² / ∫_{cell i} w⁻¹(s) ds,

which makes the reproducing identity ⟨h, h_x⟩ = h(x), the shift adjoint
identity and the norm identity ‖h_x‖² = 1 + ∫₀^x w⁻¹ hold exactly in
discrete form for grid-aligned x. Smooth integrands are integrated to second
order in Δx.

Elements are batched: ``f0`` may carry any leading batch shape and ``deriv``
carries the same shape followed by the cell axis. Every function below
broadcasts over the batch.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .errors import ArgumentError, ConfigurationError, DataError, DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class WeightFn:
    """Increasing weight w with w(0) = 1 and ∫₀^∞ w⁻¹ < ∞.

    ``exponential`` is w(y) = e^{αy}. ``tabulated`` interpolates w linearly
    between the points (table_x, table_w) and is only defined up to the last
    table point.
    """

    kind: str = "exponential"
    alpha: float = 1.0
    table_x: Tuple[float, ...] = ()
    table_w: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "exponential":
            if not self.alpha > 0:
                raise ConfigurationError(f"Weight rate must be positive, got {self.alpha}")
        elif self.kind == "tabulated":
            xs = np.asarray(self.table_x, dtype=float)
            ws = np.asarray(self.table_w, dtype=float)
            if xs.ndim != 1 or xs.shape != ws.shape or xs.size < 2:
                raise ConfigurationError("Tabulated weight needs matching x and w columns with at least two rows")
            if xs[0] != 0.0 or np.any(np.diff(xs) <= 0):
                raise ConfigurationError("Tabulated weight must start at x = 0 with increasing abscissae")
            if not math.isclose(ws[0], 1.0, abs_tol=1e-12):
                raise ConfigurationError(f"Tabulated weight must satisfy w(0) = 1, got {ws[0]}")
            if np.any(np.diff(ws) < 0):
                raise ConfigurationError("Tabulated weight must be nondecreasing")
        else:
            raise ConfigurationError(f"Unknown weight kind '{self.kind}'")

    @classmethod
    def exponential(cls, alpha: float = 1.0) -> "WeightFn":
        return cls(kind="exponential", alpha=float(alpha))

    @classmethod
    def tabulated(cls, xs: Sequence[float], ws: Sequence[float]) -> "WeightFn":
        return cls(kind="tabulated", alpha=0.0,
                   table_x=tuple(float(v) for v in xs), table_w=tuple(float(v) for v in ws))

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "WeightFn":
        """Read a tabulated weight from a CSV file with columns ``x`` and ``w``."""
        frame = pd.read_csv(path, comment="#")
        if not {"x", "w"}.issubset(frame.columns):
            raise ConfigurationError(f"Weight table {path} must have columns 'x' and 'w'")
        return cls.tabulated(frame["x"].to_numpy(), frame["w"].to_numpy())

    @property
    def support(self) -> float:
        if self.kind == "exponential":
            return math.inf
        return self.table_x[-1]

    def __call__(self, y: ArrayLike) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "exponential":
            return np.exp(self.alpha * y)
        self._check_support(y)
        return np.interp(y, self.table_x, self.table_w)

    def inverse_integral(self, y: ArrayLike) -> np.ndarray:
        """Return ∫₀^y w⁻¹(s) ds."""
        y = np.asarray(y, dtype=float)
        if self.kind == "exponential":
            return -np.expm1(-self.alpha * y) / self.alpha
        self._check_support(y)
        xs = np.asarray(self.table_x)
        ws = np.asarray(self.table_w)
        cumulative = np.concatenate([[0.0], np.cumsum(self._segment_integral(ws[:-1], np.diff(ws) / np.diff(xs), np.diff(xs)))])
        j = np.clip(np.searchsorted(xs, y, side="right") - 1, 0, xs.size - 2)
        slope = (ws[j + 1] - ws[j]) / (xs[j + 1] - xs[j])
        return cumulative[j] + self._segment_integral(ws[j], slope, y - xs[j])

    @property
    def inv_integral(self) -> float:
        """∫₀^∞ w⁻¹, truncated at the end of the table for tabulated weights."""
        if self.kind == "exponential":
            return 1.0 / self.alpha
        return float(self.inverse_integral(self.table_x[-1]))

    @staticmethod
    def _segment_integral(w_start, slope, length):
        # exact integral of 1/(w_start + slope*u) over [0, length]
        slope = np.asarray(slope, dtype=float)
        flat = np.abs(slope) < 1e-14
        safe = np.where(flat, 1.0, slope)
        curved = np.log1p(safe * length / w_start) / safe
        return np.where(flat, length / w_start, curved)

    def _check_support(self, y: np.ndarray):
        if np.any(y > self.support * (1 + 1e-12)):
            raise DomainError(f"Tabulated weight is only defined up to {self.support}")


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``n_nodes`` quadrature cells plus ``extension`` cells of shift headroom."""

    spacing: float
    n_nodes: int
    extension: int = 0
    weight: WeightFn = field(default_factory=WeightFn)

    def __post_init__(self):
        if not self.spacing > 0:
            raise ConfigurationError(f"Grid spacing must be positive, got {self.spacing}")
        if self.n_nodes < 2:
            raise ConfigurationError(f"Grid needs at least two cells, got {self.n_nodes}")
        if self.extension < 0:
            raise ConfigurationError(f"Grid extension must be nonnegative, got {self.extension}")
        if self.weight.support < self.size * self.spacing * (1 - 1e-12):
            raise ConfigurationError(
                f"Weight is defined up to {self.weight.support} but the grid reaches {self.size * self.spacing}"
            )

    @classmethod
    def build(cls, spacing: float, length: float, weight: Optional[WeightFn] = None,
              headroom: float = 0.0) -> "Grid":
        """Create a grid covering [0, length] with room for shifts of up to ``headroom``."""
        n_nodes = int(round(length / spacing))
        extension = int(math.ceil(headroom / spacing - _ALIGN_TOL)) + 2 if headroom > 0 else 0
        return cls(spacing=float(spacing), n_nodes=n_nodes, extension=extension,
                   weight=weight or WeightFn.exponential())

    @property
    def size(self) -> int:
        """Total number of cells, window plus extension."""
        return self.n_nodes + self.extension

    @property
    def length(self) -> float:
        """Length L of the quadrature window."""
        return self.n_nodes * self.spacing

    @cached_property
    def nodes(self) -> np.ndarray:
        return np.arange(self.size + 1) * self.spacing

    @cached_property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.size) + 0.5) * self.spacing

    @cached_property
    def cell_inverse(self) -> np.ndarray:
        """Cell averages of w⁻¹."""
        return np.diff(self.weight.inverse_integral(self.nodes)) / self.spacing

    @cached_property
    def cell_weights(self) -> np.ndarray:
        """Harmonic cell weights W_i = Δx / mean_{cell i}(w⁻¹)."""
        return self.spacing / self.cell_inverse

    def steps(self, s: float) -> int:
        """Convert a grid-aligned length into a number of cells."""
        if s < 0:
            raise ConfigurationError(f"Shift must be nonnegative, got {s}")
        k = int(round(s / self.spacing))
        if abs(k * self.spacing - s) > _ALIGN_TOL * max(1.0, abs(s)):
            raise ConfigurationError(f"{s} is not a multiple of the grid spacing {self.spacing}")
        return k

    def is_aligned(self, s: float) -> bool:
        try:
            self.steps(s)
        except ConfigurationError:
            return False
        return True


@dataclass(frozen=True, eq=False)
class HwElement:
    """Curve (or batch of curves) in H_w.

    Attributes:
        f0: value at x = 0, shape ``batch``
        deriv: derivative cell samples, shape ``batch + (grid.size,)``
        grid: grid the samples live on
        valid_len: number of leading cells that hold trustworthy data
    """

    f0: np.ndarray
    deriv: np.ndarray
    grid: Grid
    valid_len: int

    def __post_init__(self):
        f0 = np.asarray(self.f0, dtype=float)
        deriv = np.asarray(self.deriv, dtype=float)
        if deriv.shape != f0.shape + (self.grid.size,):
            raise ConfigurationError(
                f"Derivative samples of shape {deriv.shape} do not match batch {f0.shape} on {self.grid.size} cells"
            )
        if not 0 <= self.valid_len <= self.grid.size:
            raise ConfigurationError(f"valid_len {self.valid_len} outside [0, {self.grid.size}]")
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "deriv", deriv)
        object.__setattr__(self, "valid_len", int(self.valid_len))

    @classmethod
    def constant(cls, grid: Grid, c: ArrayLike = 1.0) -> "HwElement":
        c = np.asarray(c, dtype=float)
        return cls(c, np.zeros(c.shape + (grid.size,)), grid, grid.size)

    @classmethod
    def zeros(cls, grid: Grid, batch_shape: Tuple[int, ...] = ()) -> "HwElement":
        return cls(np.zeros(batch_shape), np.zeros(tuple(batch_shape) + (grid.size,)), grid, grid.size)

    @classmethod
    def from_function(cls, grid: Grid, value_at_zero: float,
                      derivative: Callable[[np.ndarray], np.ndarray]) -> "HwElement":
        """Sample a smooth curve given its value at zero and its derivative (at cell midpoints)."""
        deriv = np.broadcast_to(np.asarray(derivative(grid.midpoints), dtype=float), (grid.size,)).copy()
        return cls(np.asarray(float(value_at_zero)), deriv, grid, grid.size)

    @classmethod
    def stack(cls, elements: Iterable["HwElement"]) -> "HwElement":
        elements = list(elements)
        if not elements:
            raise ArgumentError("Cannot stack an empty sequence of curves")
        grid = elements[0].grid
        for e in elements[1:]:
            _common_grid(elements[0], e)
        return cls(np.stack([e.f0 for e in elements]), np.stack([e.deriv for e in elements]),
                   grid, min(e.valid_len for e in elements))

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.f0.shape

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("Unbatched HwElement has no length")
        return self.batch_shape[0]

    def __getitem__(self, index) -> "HwElement":
        if not self.batch_shape:
            raise TypeError("Unbatched HwElement cannot be indexed")
        return HwElement(self.f0[index], self.deriv[index], self.grid, self.valid_len)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def values(self) -> np.ndarray:
        """Node values h(iΔx) for i = 0..grid.size, NaN beyond the valid cells."""
        return _node_values(self, self.grid.size)

    def _binary(self, other: "HwElement", op) -> "HwElement":
        grid = _common_grid(self, other)
        return HwElement(op(self.f0, other.f0), op(self.deriv, other.deriv), grid,
                         min(self.valid_len, other.valid_len))

    def __add__(self, other: "HwElement") -> "HwElement":
        return self._binary(other, np.add)

    def __sub__(self, other: "HwElement") -> "HwElement":
        return self._binary(other, np.subtract)

    def __neg__(self) -> "HwElement":
        return HwElement(-self.f0, -self.deriv, self.grid, self.valid_len)

    def __mul__(self, scale: ArrayLike) -> "HwElement":
        scale = np.asarray(scale, dtype=float)
        return HwElement(self.f0 * scale, self.deriv * scale[..., None], self.grid, self.valid_len)

    __rmul__ = __mul__

    def __truediv__(self, scale: ArrayLike) -> "HwElement":
        return self * (1.0 / np.asarray(scale, dtype=float))


def _common_grid(f: HwElement, g: HwElement) -> Grid:
    if f.grid is not g.grid and f.grid != g.grid:
        raise ConfigurationError("Curves live on different grids")
    return f.grid


def _node_values(f: HwElement, upto: int) -> np.ndarray:
    """Node values at 0, Δx, ..., upto·Δx from the running sum of the derivative cells."""
    running = np.cumsum(f.deriv[..., :upto], axis=-1)
    zero = np.zeros(f.batch_shape + (1,))
    return f.f0[..., None] + f.grid.spacing * np.concatenate([zero, running], axis=-1)


def _as_result(value: np.ndarray):
    if not np.all(np.isfinite(value)):
        logger.error("Non-finite value produced from curve samples")
        raise DataError("Curve samples contain NaN or inf")
    return float(value) if np.ndim(value) == 0 else value


def inner_product(f: HwElement, g: HwElement) -> ArrayLike:
    """⟨f, g⟩_w = f(0)g(0) + Σ_i W_i f'_i g'_i over the quadrature window.

    Raises:
        ConfigurationError: if the curves live on different grids
        DomainError: if either curve has fewer valid cells than the window
        DataError: if the result is not finite
    """
    grid = _common_grid(f, g)
    n = grid.n_nodes
    for h in (f, g):
        if h.valid_len < n:
            raise DomainError(f"Curve has {h.valid_len} valid cells, the inner product needs {n}")
    weighted = f.deriv[..., :n] * grid.cell_weights[:n]
    value = f.f0 * g.f0 + np.einsum("...i,...i->...", weighted, g.deriv[..., :n])
    return _as_result(value)


def gram(f: HwElement, g: HwElement) -> np.ndarray:
    """Matrix of inner products with shape ``f.batch_shape + g.batch_shape``."""
    grid = _common_grid(f, g)
    n = grid.n_nodes
    for h in (f, g):
        if h.valid_len < n:
            raise DomainError(f"Curve has {h.valid_len} valid cells, the inner product needs {n}")
    a = f.deriv[..., :n].reshape(-1, n) * grid.cell_weights[:n]
    b = g.deriv[..., :n].reshape(-1, n)
    value = a @ b.T + np.outer(f.f0.reshape(-1), g.f0.reshape(-1))
    value = value.reshape(f.batch_shape + g.batch_shape)
    if not np.all(np.isfinite(value)):
        logger.error("Non-finite entry in Gram matrix")
        raise DataError("Curve samples contain NaN or inf")
    return value


def norm(f: HwElement) -> ArrayLike:
    return np.sqrt(np.maximum(inner_product(f, f), 0.0))


def combine(coefficients: np.ndarray, basis: HwElement) -> HwElement:
    """Linear combination Σ_m c[..., m] basis[m] for a one-dimensional batch ``basis``."""
    coefficients = np.asarray(coefficients, dtype=float)
    return HwElement(coefficients @ basis.f0, coefficients @ basis.deriv, basis.grid, basis.valid_len)


def evaluate(f: HwElement, x: ArrayLike) -> ArrayLike:
    """Point evaluation δ_x(f), linear between nodes.

    ``x`` may be an array; the result has shape ``f.batch_shape + x.shape``.

    Raises:
        DomainError: if x is negative or beyond the valid cells of f
    """
    grid = f.grid
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise DomainError("Cannot evaluate a curve at a negative maturity")
    limit = f.valid_len * grid.spacing
    if np.any(x_arr > limit + _ALIGN_TOL * max(1.0, limit)):
        raise DomainError(f"Evaluation at {np.max(x_arr)} beyond valid domain [0, {limit}]")
    if f.valid_len == 0:
        value = np.broadcast_to(f.f0.reshape(f.batch_shape + (1,) * x_arr.ndim), f.batch_shape + x_arr.shape)
        return _as_result(np.array(value))
    pos = np.minimum(x_arr / grid.spacing, f.valid_len)
    k = np.minimum(np.floor(pos).astype(int), f.valid_len - 1)
    theta = pos - k
    kmax = int(np.max(k))
    nodes = _node_values(f, kmax + 1)
    value = nodes[..., k] + theta * (nodes[..., k + 1] - nodes[..., k])
    return _as_result(value)


def _cell_fractions(grid: Grid, x: float) -> np.ndarray:
    """Fraction of each cell lying inside [0, x]."""
    return np.clip(x / grid.spacing - np.arange(grid.size), 0.0, 1.0)


def _delivery_coefficients(grid: Grid, d: float, count: int) -> np.ndarray:
    """c_j = ∫₀^d clamp(u − jΔx, 0, Δx) du for j < count."""
    a = np.clip(d - np.arange(count) * grid.spacing, 0.0, None)
    full = grid.spacing * (a - grid.spacing / 2)
    return np.where(a >= grid.spacing, full, 0.5 * a * a)


def kernel_hx(grid: Grid, x: float) -> HwElement:
    """Representer h_x of δ_x: h_x(0) = 1 and h_x' = w⁻¹ on [0, x].

    Raises:
        DomainError: if x is negative or outside the quadrature window
    """
    if x < 0 or x > grid.length:
        raise DomainError(f"Kernel point {x} outside [0, {grid.length}]")
    deriv = _cell_fractions(grid, x) * grid.cell_inverse
    return HwElement(np.asarray(1.0), deriv, grid, grid.size)


def eval_norm_sq(grid: Grid, x: float) -> float:
    """‖δ_x‖² = h_x(x) = 1 + ∫₀^x w⁻¹."""
    if x < 0:
        raise DomainError(f"Kernel point {x} is negative")
    return 1.0 + float(grid.weight.inverse_integral(x))


def shift_norm_bound(weight: WeightFn) -> float:
    """Operator-norm bound √(2·max(1, ∫w⁻¹)) of every left shift."""
    return math.sqrt(2.0 * max(1.0, weight.inv_integral))


def shift(f: HwElement, s: float) -> HwElement:
    """Left shift (S_s f)(y) = f(y + s) for grid-aligned s.

    Raises:
        ConfigurationError: if s is not a multiple of the spacing
        DomainError: if the shift would leave no valid cells
    """
    k = f.grid.steps(s)
    if k == 0:
        return f
    if k >= f.valid_len:
        raise DomainError(f"Shift by {k} cells exhausts the {f.valid_len} valid cells")
    f0 = _node_values(f, k)[..., k]
    tail = np.full(f.batch_shape + (k,), np.nan)
    deriv = np.concatenate([f.deriv[..., k:], tail], axis=-1)
    return HwElement(f0, deriv, f.grid, f.valid_len - k)


def shift_adjoint(g: HwElement, s: float) -> HwElement:
    """Adjoint S_s* of the left shift.

    (S_s* g)(0) = g(0); the derivative is g(0)·w⁻¹ on [0, s] and
    w(y − s)/w(y)·g'(y − s) beyond, both with the cell weights.
    """
    grid = g.grid
    k = grid.steps(s)
    if k == 0:
        return g
    if k >= grid.size:
        raise DomainError(f"Adjoint shift by {k} cells exceeds the grid of {grid.size} cells")
    weights = grid.cell_weights
    deriv = np.empty(g.batch_shape + (grid.size,))
    deriv[..., :k] = g.f0[..., None] * grid.cell_inverse[:k]
    deriv[..., k:] = weights[:grid.size - k] * g.deriv[..., :grid.size - k] / weights[k:]
    return HwElement(g.f0, deriv, grid, min(grid.size, g.valid_len + k))


def integ_Id(f: HwElement, d: float) -> ArrayLike:
    """Delivery average I_d(f) = (1/d)∫₀^d f(u) du, trapezoid on node values.

    Raises:
        ArgumentError: if d is not positive
        DomainError: if [0, d] reaches beyond the valid cells
    """
    if not d > 0:
        raise ArgumentError(f"Delivery length must be positive, got {d}")
    grid = f.grid
    if d > f.valid_len * grid.spacing + _ALIGN_TOL:
        raise DomainError(f"Delivery window [0, {d}] beyond valid domain")
    m = min(int(math.floor(d / grid.spacing + _ALIGN_TOL)), f.valid_len)
    nodes = _node_values(f, m)
    total = trapezoid(nodes, dx=grid.spacing, axis=-1) if m > 0 else np.zeros(f.batch_shape)
    rest = d - m * grid.spacing
    if rest > _ALIGN_TOL * grid.spacing:
        end = evaluate(f, d)
        total = total + 0.5 * rest * (nodes[..., m] + end)
    return _as_result(total / d)


def integ_Jxd(f: HwElement, x: float, d: float) -> ArrayLike:
    """J_{x,d} = I_d ∘ S_x, the average of f over [x, x + d]."""
    return integ_Id(shift(f, x), d)


def kernel_hdI(grid: Grid, d: float) -> HwElement:
    """Representer of I_d: value 1 at zero, derivative (d − y∧d)/(d·w(y))."""
    if not d > 0:
        raise ArgumentError(f"Delivery length must be positive, got {d}")
    if d > grid.length:
        raise DomainError(f"Delivery length {d} exceeds the window {grid.length}")
    coeff = _delivery_coefficients(grid, d, grid.size)
    return HwElement(np.asarray(1.0), coeff / (d * grid.cell_weights), grid, grid.size)


def kernel_hxd(grid: Grid, x: float, d: float) -> HwElement:
    """Representer h_{x,d} of J_{x,d}.

    Three branches: w⁻¹ on [0, x], (d − (y − x))/(d·w(y)) on (x, x + d],
    zero beyond. Equals S_x*(h_d^I) cell by cell.
    """
    if not d > 0:
        raise ArgumentError(f"Delivery length must be positive, got {d}")
    k = grid.steps(x)
    if x + d > grid.length:
        raise DomainError(f"Delivery window [{x}, {x + d}] exceeds the window {grid.length}")
    deriv = np.empty(grid.size)
    deriv[:k] = grid.cell_inverse[:k]
    deriv[k:] = _delivery_coefficients(grid, d, grid.size - k) / (d * grid.cell_weights[k:])
    return HwElement(np.asarray(1.0), deriv, grid, grid.size)


def write_curve_csv(f: HwElement, path: Union[str, Path]) -> Path:
    """Write an unbatched curve as (node_index, deriv_value) rows under a header line."""
    if f.batch_shape:
        raise ArgumentError("Only single curves can be written to CSV")
    path = Path(path)
    weight = f.grid.weight
    alpha = weight.alpha if weight.kind == "exponential" else float("nan")
    frame = pd.DataFrame({
        "node_index": np.arange(f.valid_len),
        "deriv_value": f.deriv[:f.valid_len],
    })
    with open(path, "w", newline="") as handle:
        handle.write(f"# f0={float(f.f0)!r},spacing={f.grid.spacing!r},alpha={alpha!r}\n")
        frame.to_csv(handle, index=False, float_format="%.17g")
    logger.info(f"Curve written to {path}")
    return path


def read_curve_csv(path: Union[str, Path], grid: Grid) -> HwElement:
    """Read a curve written by :func:`write_curve_csv` onto ``grid``.

    Missing trailing cells are not padded: ``valid_len`` covers only the rows
    present in the file.
    """
    path = Path(path)
    with open(path) as handle:
        header = handle.readline().lstrip("#").strip()
    try:
        meta = {key.strip(): float(value) for key, value in (item.split("=") for item in header.split(","))}
        f0, spacing = meta["f0"], meta["spacing"]
    except (ValueError, KeyError) as e:
        logger.error(f"Malformed curve header in {path}: {header}")
        raise ConfigurationError(f"Malformed curve header in {path}: {e}")
    if not math.isclose(spacing, grid.spacing, rel_tol=1e-12):
        raise ConfigurationError(f"Curve {path} has spacing {spacing}, grid has {grid.spacing}")
    frame = pd.read_csv(path, comment="#")
    values = frame.sort_values("node_index")["deriv_value"].to_numpy(dtype=float)
    count = min(values.size, grid.size)
    deriv = np.full(grid.size, np.nan)
    deriv[:count] = values[:count]
    if not np.all(np.isfinite(deriv[:count])):
        raise DataError(f"Curve {path} contains NaN or inf samples")
    return HwElement(np.asarray(f0), deriv, grid, count)
