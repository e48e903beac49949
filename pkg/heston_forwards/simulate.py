"""Path generation for the coupled volatility/forward system.

    Y_{k+1} = U_Δt (Y_k + η ΔW_k)
    X_{k+1} = S_Δt (X_k + ⟨Z_k, ΔB_k⟩ Y_k)

The time step equals the grid spacing, so both semigroups act by exact index
shifts. Noise is a Karhunen–Loève truncation of the Q-Wiener processes on the
eigenvectors of Q_W and Q_B; every path owns counter-based random streams keyed
by (master seed, process tag, path index), so a path does not depend on which
batch or worker simulated it.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Callable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .errors import ArgumentError, ConfigurationError
from .filipovic import Grid, HwElement, combine, evaluate, gram, inner_product, norm
from .operators import CovOp, FiniteRankOp, SemigroupSpec

logger = logging.getLogger(__name__)

STREAM_TAGS = {"W": 0, "B": 1, "randomizer": 2}
PARAMETERS = ("x0", "y0", "eta")
DEFAULT_BATCH_SIZE = 256


@lru_cache(maxsize=128)
def _stream_key(seed: int, tag: str) -> Tuple[int, int]:
    state = np.random.SeedSequence([seed, STREAM_TAGS[tag]]).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def path_stream(seed: int, tag: str, path_index: int) -> np.random.Generator:
    """Philox stream for one (master seed, process tag, path index).

    The key depends on (seed, tag); the path index selects a counter block
    2^128 draws away from every other path.
    """
    if tag not in STREAM_TAGS:
        raise ArgumentError(f"Unknown stream tag '{tag}', expected one of {tuple(STREAM_TAGS)}")
    if seed < 0 or path_index < 0:
        raise ArgumentError("Seeds and path indices must be nonnegative")
    key = np.array(_stream_key(int(seed), tag), dtype=np.uint64)
    counter = np.array([0, 0, int(path_index), 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def gen_increments(Q: CovOp, dt: float, n_steps: int, stream: np.random.Generator) -> np.ndarray:
    """KL coefficients √(λ_n Δt) ξ_{k,n} of the Q-Wiener increments, shape (n_steps, M)."""
    return np.sqrt(Q.eigvals * dt) * stream.standard_normal((n_steps, Q.count))


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo mean with its standard error."""

    value: float
    stderr: float
    n_paths: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "MCEstimate":
        samples = np.asarray(samples, dtype=float).reshape(-1)
        n = samples.size
        if n == 0:
            raise ArgumentError("Cannot summarise an empty sample")
        if np.ptp(samples) == 0.0:
            return cls(float(samples[0]), 0.0, n)
        stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(samples)), stderr, n)

    def scaled(self, factor: float) -> "MCEstimate":
        return MCEstimate(self.value * factor, self.stderr * abs(factor), self.n_paths)


def z_score(value: float, reference: float, stderr: float, reference_stderr: float = 0.0) -> float:
    """(value − reference) over the combined standard error; 0 for an exact match.

    With both errors zero, differences at roundoff level (1e-12 relative) count as exact.
    """
    combined = math.hypot(stderr, reference_stderr)
    diff = value - reference
    if combined == 0.0:
        exact = abs(diff) <= 1e-12 * max(1.0, abs(reference))
        return 0.0 if exact else math.copysign(math.inf, diff)
    return diff / combined


@dataclass(frozen=True, eq=False)
class ZPolicy:
    """Unit direction Z_t of the volatility operator Γ^Z = Z ⊗ Y."""

    kind: str = "normalized_y"
    gamma: Optional[HwElement] = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.gamma is None or self.gamma.batch_shape:
                raise ConfigurationError("Constant Z policy needs a single curve γ")
            length = float(norm(self.gamma))
            if length == 0.0:
                raise ConfigurationError("Constant Z policy needs a nonzero γ")
            if not math.isclose(length, 1.0, rel_tol=1e-12):
                logger.warning(f"Normalising γ with ‖γ‖_w = {length:.6g} to unit norm")
                object.__setattr__(self, "gamma", self.gamma / length)
        elif self.kind != "normalized_y":
            raise ConfigurationError(f"Unknown Z policy '{self.kind}'")

    @classmethod
    def constant(cls, gamma: HwElement) -> "ZPolicy":
        return cls("constant", gamma)

    @classmethod
    def normalized_y(cls) -> "ZPolicy":
        return cls("normalized_y")

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __call__(self, Y: HwElement) -> HwElement:
        if self.is_constant:
            return self.gamma
        return Y * _safe_inverse(norm(Y))


def _safe_inverse(lengths) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=float)
    return np.divide(1.0, lengths, out=np.zeros_like(lengths), where=lengths > 0)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Full model: initial curves, volatility, noise covariances, semigroups, Z policy and horizon τ."""

    x0: HwElement
    y0: HwElement
    eta: FiniteRankOp
    q_w: CovOp
    q_b: CovOp
    z_policy: ZPolicy
    s_semigroup: SemigroupSpec = field(default_factory=SemigroupSpec)
    u_semigroup: SemigroupSpec = field(default_factory=lambda: SemigroupSpec("damped_left_shift", 0.5))
    horizon: float = 0.5

    def __post_init__(self):
        grid = self.x0.grid
        curves = [self.y0, self.eta.left, self.eta.right, self.q_w.eigvecs, self.q_b.eigvecs]
        if self.z_policy.is_constant:
            curves.append(self.z_policy.gamma)
        for curve in curves:
            if curve.grid is not grid and curve.grid != grid:
                raise ConfigurationError("All model components must live on the same grid")
        if self.x0.batch_shape or self.y0.batch_shape:
            raise ConfigurationError("Initial curves must be single curves")
        steps = grid.steps(self.horizon)
        if grid.extension < steps:
            raise ConfigurationError(
                f"Grid extension of {grid.extension} cells cannot absorb {steps} time steps"
            )

    @property
    def grid(self) -> Grid:
        return self.x0.grid

    @property
    def dt(self) -> float:
        return self.grid.spacing

    @property
    def n_steps(self) -> int:
        return self.grid.steps(self.horizon)

    @cached_property
    def eta_loadings(self) -> np.ndarray:
        return self.eta.loadings(self.q_w.eigvecs)

    @cached_property
    def gamma_coefficients(self) -> Optional[np.ndarray]:
        if not self.z_policy.is_constant:
            return None
        return self.q_b.coefficients(self.z_policy.gamma)

    def with_horizon(self, horizon: float) -> "ModelSpec":
        return replace(self, horizon=horizon)

    def replace(self, **changes) -> "ModelSpec":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Direction:
    """Perturbation direction: a curve for x0/y0 or a finite-rank operator for η."""

    parameter: str
    vector: Union[HwElement, FiniteRankOp]

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ArgumentError(f"Unknown parameter '{self.parameter}', expected one of {PARAMETERS}")
        expected = FiniteRankOp if self.parameter == "eta" else HwElement
        if not isinstance(self.vector, expected):
            raise ArgumentError(f"Direction for {self.parameter} must be a {expected.__name__}")

    @property
    def magnitude(self) -> float:
        if isinstance(self.vector, FiniteRankOp):
            return self.vector.hs_norm()
        return float(norm(self.vector))


@dataclass(frozen=True, eq=False)
class Perturbation:
    """Parameter moved to θ + scale·direction; ``scale`` may differ per path."""

    direction: Direction
    scale: Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class SystemState:
    Y: HwElement
    X: HwElement


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Terminal state of a batch of paths.

    ``tangents`` holds DX_τ along each requested direction; the x0 tangent is
    the single deterministic curve S_τ h.
    """

    indices: np.ndarray
    x: HwElement
    y: HwElement
    tangents: Tuple[HwElement, ...] = ()
    history: Optional[dict] = None


@dataclass(frozen=True, eq=False)
class PathBundle:
    """One simulated scenario with its full trajectory."""

    Y: HwElement
    X: HwElement
    dW: np.ndarray
    dB: np.ndarray
    tangents: Tuple[HwElement, ...]
    directions: Tuple[Direction, ...]
    seed: int
    path_index: int


class StepObserver(Protocol):
    """Receives Y_k and the coefficients ⟨Z_k, v_m⟩ on the Q_B basis before step k."""

    def observe(self, k: int, Y: HwElement, z_coeffs: np.ndarray) -> None:
        ...


def z_coefficients(spec: ModelSpec, Y: HwElement) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Coefficients ⟨Z, v_m⟩ on the Q_B eigenbasis and 1/‖Y‖ (None under constant γ)."""
    if spec.z_policy.is_constant:
        return spec.gamma_coefficients, None
    inverse = _safe_inverse(norm(Y))
    return spec.q_b.coefficients(Y) * inverse[..., None], inverse


def eta_noise(spec: ModelSpec, dW_k: np.ndarray, eta: Optional[FiniteRankOp] = None) -> HwElement:
    """η ΔW_k from the KL coefficients of ΔW_k."""
    if eta is None:
        eta, loadings = spec.eta, spec.eta_loadings
    else:
        loadings = eta.loadings(spec.q_w.eigvecs)
    return combine(np.asarray(dW_k) @ loadings.T, eta.right)


def step_system(spec: ModelSpec, state: SystemState, dW_k: np.ndarray, dB_k: np.ndarray,
                z_coeffs: Optional[np.ndarray] = None, extra_noise: Optional[HwElement] = None,
                with_x: bool = True) -> SystemState:
    """One exponential-Euler step with left-point noise.

    Args:
        spec: model
        state: (Y_k, X_k), single curves or a batch
        dW_k: KL coefficients of ΔW_k
        dB_k: KL coefficients of ΔB_k
        z_coeffs: ⟨Z_k, v_m⟩ if already computed for Y_k
        extra_noise: added to η ΔW_k, used for perturbed η
        with_x: when False X_k is carried over unchanged

    Raises:
        DomainError: when shift headroom is exhausted
    """
    if z_coeffs is None:
        z_coeffs, _ = z_coefficients(spec, state.Y)
    X = state.X
    if with_x:
        beta = np.sum(np.asarray(dB_k) * z_coeffs, axis=-1)
        X = spec.s_semigroup.apply(spec.dt, X + state.Y * beta)
    noise = eta_noise(spec, dW_k)
    if extra_noise is not None:
        noise = noise + extra_noise
    Y = spec.u_semigroup.apply(spec.dt, state.Y + noise)
    return SystemState(Y, X)


class PathEngine:
    """Batched, thread-parallel simulator with deterministic reduction.

    Paths are split into batches of a fixed size that does not depend on the
    thread count; per-path outputs are concatenated in path order.
    """

    def __init__(self, spec: ModelSpec, seed: int, batch_size: int = DEFAULT_BATCH_SIZE, threads: int = 1):
        if batch_size < 1:
            raise ArgumentError(f"Batch size must be positive, got {batch_size}")
        self.spec = spec
        self.seed = int(seed)
        self.batch_size = int(batch_size)
        self.threads = max(1, int(threads))
        logger.debug(f"Path engine ready: {spec.n_steps} steps, seed {self.seed}, batch {self.batch_size}")

    def draws(self, indices: np.ndarray, fixed_w_path: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """KL increment coefficients ΔW, ΔB for each path, shapes (P, K, M_W) and (P, K, M_B).

        With ``fixed_w_path`` every path reads the W stream of that one path,
        so the batch samples B conditionally on a single volatility path.
        """
        spec = self.spec
        K = spec.n_steps
        w_indices = indices if fixed_w_path is None else [fixed_w_path] * len(indices)
        dW = np.stack([gen_increments(spec.q_w, spec.dt, K, path_stream(self.seed, "W", i)) for i in w_indices])
        dB = np.stack([gen_increments(spec.q_b, spec.dt, K, path_stream(self.seed, "B", i)) for i in indices])
        return dW, dB

    def randomizer(self, indices: np.ndarray, count: int = 2) -> np.ndarray:
        """Independent standard normals from the randomizer stream, shape (P, count)."""
        return np.stack([path_stream(self.seed, "randomizer", i).standard_normal(count) for i in indices])

    def run_batch(self, indices: Sequence[int], directions: Sequence[Direction] = (),
                  perturbation: Optional[Perturbation] = None, observer: Optional[StepObserver] = None,
                  record: bool = False, with_x: bool = True,
                  fixed_w_path: Optional[int] = None) -> PathBatch:
        spec = self.spec
        indices = np.asarray(indices, dtype=np.int64)
        P, K, dt = indices.size, spec.n_steps, spec.dt
        dW, dB = self.draws(indices, fixed_w_path)
        ones = np.ones(P)

        X = spec.x0 * ones
        Y = spec.y0 * ones
        extra_eta, extra_scale = None, None
        if perturbation is not None:
            scale = np.broadcast_to(np.asarray(perturbation.scale, dtype=float), (P,))
            target = perturbation.direction
            if target.parameter == "x0":
                X = X + target.vector * scale
            elif target.parameter == "y0":
                Y = Y + target.vector * scale
            else:
                extra_eta, extra_scale = target.vector, scale

        # (D^Y, tangent) per direction; x0 tangents are closed form
        tangent_states: List[Optional[list]] = []
        for direction in directions:
            if direction.parameter == "y0":
                tangent_states.append([direction.vector, HwElement.zeros(spec.grid, (P,))])
            elif direction.parameter == "eta":
                tangent_states.append([HwElement.zeros(spec.grid), HwElement.zeros(spec.grid, (P,))])
            else:
                tangent_states.append(None)

        history = {"Y": [Y], "X": [X], "tangents": [[self._x0_tangent(d, 0) if s is None else s[1]
                                                      for d, s in zip(directions, tangent_states)]]} if record else None

        for k in range(K):
            z_coeffs, inverse = z_coefficients(spec, Y)
            if observer is not None:
                observer.observe(k, Y, np.broadcast_to(z_coeffs, (P, spec.q_b.count)))
            beta = np.sum(dB[:, k, :] * z_coeffs, axis=-1)

            for direction, state in zip(directions, tangent_states):
                if state is None:
                    continue
                D, T = state
                increment = D * beta
                if inverse is not None:
                    # derivative of Z = Y/‖Y‖ along D
                    d_coeffs = spec.q_b.coefficients(D)
                    z_dot_d = inner_product(Y, D) * inverse
                    dz_coeffs = (d_coeffs - z_dot_d[:, None] * z_coeffs) * inverse[:, None]
                    increment = increment + Y * np.sum(dB[:, k, :] * dz_coeffs, axis=-1)
                state[1] = spec.s_semigroup.apply(dt, T + increment)
                if direction.parameter == "eta":
                    D = D + eta_noise(spec, dW[:, k, :], direction.vector)
                state[0] = spec.u_semigroup.apply(dt, D)

            extra_noise = None
            if extra_eta is not None:
                extra_noise = eta_noise(spec, dW[:, k, :], extra_eta) * extra_scale
            stepped = step_system(spec, SystemState(Y, X), dW[:, k, :], dB[:, k, :], z_coeffs,
                                extra_noise=extra_noise, with_x=with_x)
            X, Y = stepped.X, stepped.Y

            if record:
                history["Y"].append(Y)
                history["X"].append(X)
                history["tangents"].append([self._x0_tangent(d, k + 1) if s is None else s[1]
                                            for d, s in zip(directions, tangent_states)])

        tangents = tuple(self._x0_tangent(d, K) if s is None else s[1]
                         for d, s in zip(directions, tangent_states))
        if record:
            history["dW"], history["dB"] = dW, dB
        return PathBatch(indices, X, Y, tangents, history)

    def _x0_tangent(self, direction: Direction, k: int) -> HwElement:
        return self.spec.s_semigroup.apply(k * self.spec.dt, direction.vector)

    def batches(self, n_paths: int) -> List[np.ndarray]:
        if n_paths < 1:
            raise ArgumentError(f"Number of paths must be positive, got {n_paths}")
        return [np.arange(start, min(start + self.batch_size, n_paths))
                for start in range(0, n_paths, self.batch_size)]

    def map_paths(self, fn: Callable[[np.ndarray], np.ndarray], n_paths: int) -> np.ndarray:
        """Apply ``fn`` to every batch of path indices and concatenate the per-path outputs in order."""
        batches = self.batches(n_paths)
        if self.threads == 1 or len(batches) == 1:
            outputs = [fn(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as executor:
                outputs = list(executor.map(fn, batches))
        logger.debug(f"Simulated {n_paths} paths in {len(batches)} batches")
        return np.concatenate(outputs, axis=0)


def simulate_path(spec: ModelSpec, seed: int, path_index: int,
                  directions: Sequence[Direction] = ()) -> PathBundle:
    """Full trajectory of one path, with tangent paths along ``directions``.

    The result depends only on (spec, seed, path_index).
    """
    engine = PathEngine(spec, seed, batch_size=1)
    batch = engine.run_batch([path_index], directions=directions, record=True)
    history = batch.history
    Y = HwElement.stack([y[0] for y in history["Y"]])
    X = HwElement.stack([x[0] for x in history["X"]])
    tangents = []
    for i, direction in enumerate(directions):
        steps = [row[i] for row in history["tangents"]]
        if direction.parameter != "x0":
            steps = [t[0] for t in steps]
        tangents.append(HwElement.stack(steps))
    return PathBundle(Y, X, history["dW"][0], history["dB"][0], tuple(tangents),
                      tuple(directions), int(seed), int(path_index))


def terminal_forwards(engine: PathEngine, maturities: Sequence[float], n_paths: int,
                      fixed_w_path: Optional[int] = None) -> np.ndarray:
    """Samples of f(τ, x) = δ_x(X_τ) at each maturity, shape (n_paths, len(maturities))."""
    maturities = np.asarray(maturities, dtype=float)
    return engine.map_paths(
        lambda idx: evaluate(engine.run_batch(idx, fixed_w_path=fixed_w_path).x, maturities), n_paths
    )


class _IsometryObserver:
    def __init__(self, spec: ModelSpec, size: int):
        self.spec = spec
        self.total = np.zeros(size)

    def observe(self, k: int, Y: HwElement, z_coeffs: np.ndarray) -> None:
        spec = self.spec
        lag = (spec.n_steps - k) * spec.dt
        moved = spec.s_semigroup.apply(lag, Y)
        vol = np.sum(spec.q_b.eigvals * z_coeffs ** 2, axis=-1)
        self.total += spec.dt * inner_product(moved, moved) * vol


def ito_isometry(engine: PathEngine, n_paths: int) -> Tuple[MCEstimate, MCEstimate, MCEstimate]:
    """Compare E‖X_τ − S_τ x0‖² with the averaged Σ_k Δt ‖S_{τ−t_k}(Z_k ⊗ Y_k) Q_B^{1/2}‖²_HS.

    Returns:
        (squared-norm estimate, isometry-side estimate, paired difference)
    """
    spec = engine.spec
    mean_curve = spec.s_semigroup.apply(spec.horizon, spec.x0)

    def batch(idx):
        observer = _IsometryObserver(spec, idx.size)
        result = engine.run_batch(idx, observer=observer)
        residual = result.x - mean_curve
        return np.column_stack([inner_product(residual, residual), observer.total])

    samples = engine.map_paths(batch, n_paths)
    return (MCEstimate.from_samples(samples[:, 0]), MCEstimate.from_samples(samples[:, 1]),
            MCEstimate.from_samples(samples[:, 0] - samples[:, 1]))


def normality_diagnostic(engine: PathEngine, maturity: float, n_paths: int,
                         condition_on: Optional[int] = 0) -> Tuple[float, float]:
    """Skewness and excess kurtosis of the f(τ, x) sample.

    Given the volatility path, X_τ is Gaussian because Z is a function of Y;
    by default the sample is drawn conditionally on the W stream of path
    ``condition_on``. Pass None for the unconditional sample.
    """
    sample = terminal_forwards(engine, [maturity], n_paths, fixed_w_path=condition_on)[:, 0]
    return float(stats.skew(sample)), float(stats.kurtosis(sample))
