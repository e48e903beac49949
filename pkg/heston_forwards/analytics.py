"""Semi-closed-form oracles: characteristic functional and covariances of X_t.

All time integrals use the left-point rule of the simulator, so the
comparisons with simulated samples carry no discretisation bias. Expectations
over the volatility path are Monte Carlo over Y only; the Z ≡ γ formulas are
deterministic.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigurationError, DomainError
from .filipovic import HwElement, combine, evaluate, inner_product, integ_Jxd
from .simulate import DEFAULT_BATCH_SIZE, MCEstimate, ModelSpec, PathEngine

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProbeSet:
    """Maturities x_i and delivery periods (x, d) at which curves are probed."""

    maturities: Tuple[float, ...]
    deliveries: Tuple[Tuple[float, float], ...] = ()

    @classmethod
    def spread(cls, top: float, count: int = 10, spacing: Optional[float] = None,
               delivery: float = 0.25) -> "ProbeSet":
        """``count`` maturities spread over [0, top], snapped to ``spacing`` when given.

        Every third maturity also starts a delivery period of length ``delivery``.
        """
        values = np.linspace(0.0, top, count)
        if spacing:
            values = np.round(values / spacing) * spacing
        deliveries = tuple((float(x), float(delivery)) for x in values[::3])
        return cls(tuple(float(v) for v in values), deliveries)

    def validate(self, spec: ModelSpec) -> "ProbeSet":
        """Check that every probe stays inside the curve data after the horizon shift."""
        grid = spec.grid
        reach = (grid.size - spec.n_steps) * grid.spacing
        for x in self.maturities:
            if not 0 <= x <= reach:
                raise DomainError(f"Probe maturity {x} outside [0, {reach}]")
        for x, d in self.deliveries:
            grid.steps(x)
            if x + d > reach or d <= 0:
                raise DomainError(f"Delivery probe ({x}, {d}) outside the curve data")
        return self


def _engine(spec: ModelSpec, t: float, seed: int, threads: int, batch_size: int) -> PathEngine:
    return PathEngine(spec.with_horizon(t), seed, batch_size=batch_size, threads=threads)


class _SumObserver:
    """Adds ``contribution(k, Y_k, ‖Q_B^{1/2} Z_k‖²)`` over the time steps."""

    def __init__(self, spec: ModelSpec, contribution, initial):
        self.spec = spec
        self.contribution = contribution
        self.total = initial

    def observe(self, k: int, Y: HwElement, z_coeffs: np.ndarray) -> None:
        vol = np.sum(self.spec.q_b.eigvals * z_coeffs ** 2, axis=-1)
        self.total = self.total + self.contribution(k, Y, vol)


def _y_accumulate(engine: PathEngine, n_paths: int, contribution, width: int) -> np.ndarray:
    """Run Y-only paths and sum ``contribution(k, Y, vol)`` over the steps for each path."""

    def batch(idx):
        observer = _SumObserver(engine.spec, contribution, np.zeros((idx.size, width)))
        engine.run_batch(idx, observer=observer, with_x=False)
        return observer.total

    return engine.map_paths(batch, n_paths)


def char_functional(spec: ModelSpec, h: HwElement, t: float, n_paths: int, seed: int = 0,
                    threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE,
                    return_stderr: bool = False) -> Union[complex, Tuple[complex, float]]:
    """E[exp(i⟨X_t, h⟩)] through the conditional Gaussian structure of X_t.

    Computes e^{i⟨S_t x0, h⟩} · E[exp(−½ Σ_k Δt ‖Q_B^{1/2} Z_k‖² ⟨Y_k, S*_{t−t_k} h⟩²)],
    the expectation over volatility paths only.

    Args:
        return_stderr: also return the standard error of the real factor;
            real and imaginary parts have errors |cos φ| and |sin φ| times it

    Returns:
        Complex value, or (value, stderr) when ``return_stderr`` is set
    """
    phase = inner_product(spec.s_semigroup.apply(t, spec.x0), h)
    engine = _engine(spec, t, seed, threads, batch_size)
    K, dt = engine.spec.n_steps, spec.dt
    if K == 0:
        value = complex(np.exp(1j * phase))
        return (value, 0.0) if return_stderr else value
    adjoints = [spec.s_semigroup.adjoint_apply((K - k) * dt, h) for k in range(K)]

    def contribution(k, Y, vol):
        return (dt * vol * inner_product(Y, adjoints[k]) ** 2)[:, None]

    quadratic = _y_accumulate(engine, n_paths, contribution, 1)[:, 0]
    estimate = MCEstimate.from_samples(np.exp(-0.5 * quadratic))
    value = complex(np.exp(1j * phase) * estimate.value)
    return (value, estimate.stderr) if return_stderr else value


def empirical_char_functional(spec: ModelSpec, h: HwElement, t: float, n_paths: int, seed: int = 0,
                              threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE) -> Tuple[complex, float, float]:
    """Sample mean of exp(i⟨X_t, h⟩) over full simulations.

    Returns:
        (mean, stderr of real part, stderr of imaginary part)
    """
    engine = _engine(spec, t, seed, threads, batch_size)
    pairing = engine.map_paths(lambda idx: inner_product(engine.run_batch(idx).x, h), n_paths)
    real = MCEstimate.from_samples(np.cos(pairing))
    imag = MCEstimate.from_samples(np.sin(pairing))
    return complex(real.value, imag.value), real.stderr, imag.stderr


def cov_forward(spec: ModelSpec, t: float, x: float, y: float, n_paths: int, seed: int = 0,
                threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE,
                return_stderr: bool = False) -> Union[float, MCEstimate]:
    """Cov(f(t,x), f(t,y)) = E Σ_k Δt ‖Q_B^{1/2} Z_k‖² Y_k(x + t − t_k) Y_k(y + t − t_k)."""
    engine = _engine(spec, t, seed, threads, batch_size)
    K, dt = engine.spec.n_steps, spec.dt
    if K == 0:
        estimate = MCEstimate(0.0, 0.0, n_paths)
        return estimate if return_stderr else 0.0

    def contribution(k, Y, vol):
        lag = (K - k) * dt
        values = evaluate(Y, np.array([x + lag, y + lag]))
        return (dt * vol * values[:, 0] * values[:, 1])[:, None]

    estimate = MCEstimate.from_samples(_y_accumulate(engine, n_paths, contribution, 1)[:, 0])
    return estimate if return_stderr else estimate.value


def cov_forward_matrix(spec: ModelSpec, t: float, maturities: Sequence[float], n_paths: int, seed: int = 0,
                       threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE) -> np.ndarray:
    """Matrix [cov_forward(t, x_i, x_j)] from one set of volatility paths."""
    maturities = np.asarray(maturities, dtype=float)
    m = maturities.size
    engine = _engine(spec, t, seed, threads, batch_size)
    K, dt = engine.spec.n_steps, spec.dt
    if K == 0:
        return np.zeros((m, m))

    def contribution(k, Y, vol):
        values = evaluate(Y, maturities + (K - k) * dt)
        outer = values[:, :, None] * values[:, None, :]
        return (dt * vol[:, None, None] * outer).reshape(values.shape[0], m * m)

    samples = _y_accumulate(engine, n_paths, contribution, m * m)
    return np.mean(samples, axis=0).reshape(m, m)


def _require_constant(spec: ModelSpec):
    if not spec.z_policy.is_constant:
        logger.error("Deterministic covariance requested for a non-constant Z policy")
        raise ConfigurationError("This formula needs the constant-γ Z policy")


def _lagged_noise_directions(spec: ModelSpec, K: int):
    """U_{lΔt} η v_m for l = 1..K, each a batch over the Q_W eigenvectors."""
    eta_v = spec.eta.apply(spec.q_w.eigvecs)
    return [spec.u_semigroup.apply(l * spec.dt, eta_v) for l in range(1, K + 1)]


def cov_forward_const_gamma(spec: ModelSpec, t: float, x: float, y: float) -> float:
    """Deterministic Cov(f(t,x), f(t,y)) when Z ≡ γ.

    ‖Q_B^{1/2}γ‖² Σ_k Δt [m_k(a_k) m_k(b_k) + Σ_{l=1..k} Δt Σ_m λ_m (U_l η v_m)(a_k) (U_l η v_m)(b_k)]
    with m_k = U_{t_k} y0, a_k = x + t − t_k and b_k = y + t − t_k.

    Raises:
        ConfigurationError: for a non-constant Z policy
    """
    _require_constant(spec)
    spec_t = spec.with_horizon(t)
    K, dt = spec_t.n_steps, spec.dt
    if K == 0:
        return 0.0
    gamma_vol = float(np.sum(spec.q_b.eigvals * spec.gamma_coefficients ** 2))
    lagged = _lagged_noise_directions(spec, K)
    lam = spec.q_w.eigvals
    total = 0.0
    for k in range(K):
        lag = (K - k) * dt
        points = np.array([x + lag, y + lag])
        mean_values = evaluate(spec.u_semigroup.apply(k * dt, spec.y0), points)
        term = mean_values[0] * mean_values[1]
        for l in range(1, k + 1):
            values = evaluate(lagged[l - 1], points)
            term += dt * float(np.sum(lam * values[:, 0] * values[:, 1]))
        total += dt * term
    return gamma_vol * total


def cov_delivery(spec: ModelSpec, t: float, x: float, d1: float, y: float, d2: float, n_paths: int,
                 seed: int = 0, threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE,
                 return_stderr: bool = False) -> Union[float, MCEstimate]:
    """Cov(g(t,x,d1), g(t,y,d2)) = E Σ_k Δt ‖Q_B^{1/2} Z_k‖² J_{a_k,d1}(Y_k) J_{b_k,d2}(Y_k)."""
    engine = _engine(spec, t, seed, threads, batch_size)
    K, dt = engine.spec.n_steps, spec.dt
    if K == 0:
        estimate = MCEstimate(0.0, 0.0, n_paths)
        return estimate if return_stderr else 0.0

    def contribution(k, Y, vol):
        lag = (K - k) * dt
        first = integ_Jxd(Y, x + lag, d1)
        second = integ_Jxd(Y, y + lag, d2)
        return (dt * vol * first * second)[:, None]

    estimate = MCEstimate.from_samples(_y_accumulate(engine, n_paths, contribution, 1)[:, 0])
    return estimate if return_stderr else estimate.value


def cov_operator_apply(spec: ModelSpec, t: float, h: HwElement, n_paths: int = 0, seed: int = 0,
                       threads: int = 1, batch_size: int = DEFAULT_BATCH_SIZE) -> HwElement:
    """Q_{X_t} h = Σ_k Δt S_{t−t_k} E[‖Q_B^{1/2} Z_k‖² 𝒱_k] S*_{t−t_k} h.

    Deterministic for Z ≡ γ (``n_paths`` is ignored); Monte Carlo over
    volatility paths otherwise.
    """
    spec_t = spec.with_horizon(t)
    K, dt = spec_t.n_steps, spec.dt
    if K == 0:
        return HwElement.zeros(spec.grid)
    adjoints = [spec.s_semigroup.adjoint_apply((K - k) * dt, h) for k in range(K)]

    if spec.z_policy.is_constant:
        gamma_vol = float(np.sum(spec.q_b.eigvals * spec.gamma_coefficients ** 2))
        lagged = _lagged_noise_directions(spec, K)
        lam = spec.q_w.eigvals
        result = HwElement.zeros(spec.grid)
        for k in range(K):
            lag = (K - k) * dt
            mean_k = spec.u_semigroup.apply(k * dt, spec.y0)
            term = spec.s_semigroup.apply(lag, mean_k) * inner_product(mean_k, adjoints[k])
            for l in range(1, k + 1):
                weights = dt * lam * inner_product(lagged[l - 1], adjoints[k])
                term = term + combine(weights, spec.s_semigroup.apply(lag, lagged[l - 1]))
            result = result + term * (dt * gamma_vol)
        return result

    engine = _engine(spec, t, seed, threads, batch_size)
    size = spec.grid.size

    def contribution(k, Y, vol):
        weights = dt * vol * inner_product(Y, adjoints[k])
        return combine(weights, spec.s_semigroup.apply((K - k) * dt, Y))

    def batch(idx):
        observer = _SumObserver(engine.spec, contribution, HwElement.zeros(spec.grid))
        engine.run_batch(idx, observer=observer, with_x=False)
        total = observer.total
        return np.concatenate([total.f0[None], total.deriv])[None, :]

    sums = engine.map_paths(batch, n_paths)
    mean = np.sum(sums, axis=0) / n_paths
    return HwElement(np.asarray(mean[0]), mean[1:size + 1], spec.grid, size - K)
