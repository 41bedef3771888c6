"""
System models x' = A(t, x) x, their integration, and Euler transition factors.

A model maps (t, x) to a Metzler matrix with zero row sums. Time variation
comes from signals: either a constant payload or any object with an
``at(t)`` method and a ``breakpoints`` array (topology.SwitchingSignal).
Signals are read with left-closed intervals, so a step starting on a
breakpoint sees the new value.

Integration grids are refined at model breakpoints, so piecewise-constant
signals are integrated exactly by the Euler scheme, and the transition factor
of an interval is the ordered product of the per-step factors I + h A(t_i, x_i).
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, ClassVar, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import (
    DimensionMismatchError,
    DomainError,
    GridMismatchError,
    MetzlerViolationError,
    NotCertifiableError,
    ParameterError,
    StepSizeError,
)
from .graph import ROW_SUM_TOL, WeightedDigraph, metzler_of_digraph, validate_metzler
from .hilbert import as_state_vector, minimal_gamma_batch, rowwise_hilbert

logger = logging.getLogger(__name__)

SINC_SERIES_CUTOFF = 1e-4
LAMBDA_SHIFT_FACTOR = 1.01


class ModelKind(Enum):
    """Built-in model families."""
    LTV = "ltv"
    KURAMOTO = "kuramoto"
    CUCKER_SMALE_VELOCITY = "cucker_smale_velocity"
    HEGSELMANN_KRAUSE = "hegselmann_krause"
    ANIMAL_GROUP = "animal_group"
    CUSTOM_SWITCHING = "custom_switching"


class Scheme(Enum):
    """Explicit integration schemes."""
    EULER = "euler"
    RK4 = "rk4"


def _payload_at(source: Any, t: float) -> Any:
    return source.at(t) if hasattr(source, "at") else source


def _signal_breakpoints(source: Any, t0: float, t1: float) -> np.ndarray:
    points = np.asarray(getattr(source, "breakpoints", ()), dtype=float)
    return points[(points > t0) & (points < t1)]


def _weights_of(payload: Any) -> np.ndarray:
    if isinstance(payload, WeightedDigraph):
        return payload.weights
    return np.asarray(payload, dtype=float)


def _laplacian_form(W: np.ndarray) -> np.ndarray:
    A = np.array(W, dtype=float)
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1))
    return A


def sinc(delta) -> np.ndarray:
    """sin(d)/d with the removable singularity filled by its Taylor series."""
    delta = np.asarray(delta, dtype=float)
    d2 = delta * delta
    series = 1.0 - d2 / 6.0 + d2 * d2 / 120.0
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.sin(delta) / delta
    return np.where(np.abs(delta) < SINC_SERIES_CUTOFF, series, direct)


class SystemModel(ABC):
    """
    Time- and state-dependent Metzler field A(t, x).

    Subclasses implement matrix(); evaluate_model() adds the contract checks.
    Assumption A1 (local integrability of the bound on A) is a caller
    obligation for black-box signals.
    """

    kind: ClassVar[ModelKind]

    @property
    @abstractmethod
    def n(self) -> int:
        """Number of agents."""

    @abstractmethod
    def matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        """Raw A(t, x) before contract checks."""

    @property
    def metzler(self) -> bool:
        """Whether evaluations are expected to be Metzler (certifiable)."""
        return True

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        """Switching times strictly inside (t0, t1)."""
        return np.empty(0)

    def check_domain(self, x: np.ndarray) -> None:
        """Raise DomainError when x leaves the region where A keeps its Metzler form."""

    def evaluate(self, t: float, x, strict: bool = True) -> np.ndarray:
        return evaluate_model(self, t, x, strict)


@dataclass(frozen=True)
class LTVModel(SystemModel):
    """
    Linear time-varying consensus x' = A(t) x.

    Attributes:
        signal: A constant Metzler matrix or WeightedDigraph, or a switching
            signal whose payloads are either
    """
    signal: Any
    kind: ClassVar[ModelKind] = ModelKind.LTV

    @property
    def n(self) -> int:
        payload = self.signal.values[0] if hasattr(self.signal, "values") else self.signal
        return _weights_of(payload).shape[0]

    def matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        payload = _payload_at(self.signal, t)
        if isinstance(payload, WeightedDigraph):
            return metzler_of_digraph(payload)
        return np.asarray(payload, dtype=float)

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        return _signal_breakpoints(self.signal, t0, t1)


@dataclass(frozen=True)
class KuramotoModel(SystemModel):
    """
    Identical-frequency Kuramoto network in the rotating frame.

    x_i' = sum_j a_ij(t) sin(x_j - x_i), written as A_ij = a_ij(t) sinc(x_j - x_i).
    On [a, b]^n with b - a < pi the coupling stays >= a_ij(t) sin(b-a)/(b-a).
    A common natural frequency is removed with internal_dynamics_transform
    (b = omega).

    Attributes:
        coupling: WeightedDigraph or switching signal of WeightedDigraph payloads
    """
    coupling: Any
    kind: ClassVar[ModelKind] = ModelKind.KURAMOTO

    @property
    def n(self) -> int:
        payload = self.coupling.values[0] if hasattr(self.coupling, "values") else self.coupling
        return _weights_of(payload).shape[0]

    def matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        a = _weights_of(_payload_at(self.coupling, t))
        return _laplacian_form(a * sinc(x[None, :] - x[:, None]))

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        return _signal_breakpoints(self.coupling, t0, t1)

    def check_domain(self, x: np.ndarray) -> None:
        spread = float(np.ptp(x))
        if spread >= math.pi:
            raise DomainError(f"Kuramoto phases spread {spread:.6g} >= pi; coupling would turn negative")


@dataclass(frozen=True)
class CuckerSmaleVelocityModel(SystemModel):
    """
    Velocity block of the Cucker-Smale flock: v_i' = (gain/N) sum_j psi_ij (v_j - v_i).

    The default kernel psi_ij = strength/(sigma^2 + (v_i - v_j)^2)^beta depends on
    velocities only; kernels of (t, v) can be supplied. Positions follow from
    integrate_positions().
    """
    agents: int
    gain: float = 1.0
    strength: float = 1.0
    sigma: float = 1.0
    beta: float = 0.5
    kernel: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    kind: ClassVar[ModelKind] = ModelKind.CUCKER_SMALE_VELOCITY

    @property
    def n(self) -> int:
        return self.agents

    def matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.kernel is not None:
            psi = np.asarray(self.kernel(t, x), dtype=float)
        else:
            gaps = np.subtract.outer(x, x) ** 2
            psi = self.strength / (self.sigma ** 2 + gaps) ** self.beta
        return _laplacian_form(self.gain / self.agents * psi)


def integrate_positions(velocities: "Trajectory", p0) -> np.ndarray:
    """Positions p(t) = p0 + integral of v, trapezoid rule on the trajectory grid."""
    p0 = np.asarray(p0, dtype=float)
    return p0 + cumulative_trapezoid(velocities.states, velocities.times, axis=0, initial=0.0)


@dataclass(frozen=True)
class HegselmannKrauseModel(SystemModel):
    """
    Bounded-confidence opinion dynamics with a time-varying radius.

    phi_ij = gain if |x_i - x_j| <= eps(t) (closed condition), else 0.

    Attributes:
        agents: Number of agents
        radius: Constant radius, callable t -> radius, or switching signal of floats
        gain: Weight of an active link
    """
    agents: int
    radius: Any
    gain: float = 1.0
    kind: ClassVar[ModelKind] = ModelKind.HEGSELMANN_KRAUSE

    @property
    def n(self) -> int:
        return self.agents

    def radius_at(self, t: float) -> float:
        if callable(self.radius) and not hasattr(self.radius, "at"):
            return float(self.radius(t))
        return float(_payload_at(self.radius, t))

    def matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        eps = self.radius_at(t)
        close = np.abs(np.subtract.outer(x, x)) <= eps
        return _laplacian_form(self.gain * close.astype(float))

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        return _signal_breakpoints(self.radius, t0, t1)


@dataclass(frozen=True)
class AnimalGroupModel(SystemModel):
    """
    Attraction/repulsion group model on a line.

    Agents closer than repulsion_radius repel with coefficient -phi_r/|x_i - x_j|;
    agents within [repulsion_radius, attraction_radius] attract with
    phi_a/|x_i - x_j|. Nonzero repulsion makes A non-Metzler: such models
    simulate, but certification refuses them.

    Attributes:
        agents: Number of agents
        attraction_radius: Outer radius of the attraction set
        repulsion_radius: Radius of the repulsion set
        attraction_strength: Constant phi_a, used when attraction_kernel is None
        repulsion_strength: Constant phi_r, used when repulsion_kernel is None
        neighbours: Optional graph or signal restricting both sets to its links
        min_distance: Floor on |x_i - x_j| in the coefficients
    """
    agents: int
    attraction_radius: float = 1.0
    repulsion_radius: float = 0.0
    attraction_strength: float = 1.0
    repulsion_strength: float = 0.0
    attraction_kernel: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    repulsion_kernel: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    neighbours: Any = None
    min_distance: float = 1e-9
    kind: ClassVar[ModelKind] = ModelKind.ANIMAL_GROUP

    @property
    def n(self) -> int:
        return self.agents

    @property
    def metzler(self) -> bool:
        return self.repulsion_kernel is None and self.repulsion_strength == 0.0

    def matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        xi, xj = np.meshgrid(x, x, indexing="ij")
        distance = np.abs(xi - xj)
        mask = ~np.eye(self.agents, dtype=bool)
        if self.neighbours is not None:
            mask &= _weights_of(_payload_at(self.neighbours, t)) > 0
        repel = mask & (distance < self.repulsion_radius)
        attract = mask & (distance >= self.repulsion_radius) & (distance <= self.attraction_radius)

        phi_a = self.attraction_kernel(xi, xj) if self.attraction_kernel else np.full_like(xi, self.attraction_strength)
        phi_r = self.repulsion_kernel(xi, xj) if self.repulsion_kernel else np.full_like(xi, self.repulsion_strength)
        scale = 1.0 / np.maximum(distance, self.min_distance)
        W = np.where(attract, phi_a * scale, 0.0) - np.where(repel, phi_r * scale, 0.0)
        return _laplacian_form(W)

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        if self.neighbours is None:
            return np.empty(0)
        return _signal_breakpoints(self.neighbours, t0, t1)


@dataclass(frozen=True)
class CustomSwitchingModel(SystemModel):
    """
    Switched family x' = A_sigma(t)(x) x.

    Attributes:
        family: Metzler matrices or callables x -> Metzler matrix
        signal: Switching signal whose payloads index into family
        agents: Number of agents; inferred from the first constant member if omitted
    """
    family: Sequence[Any]
    signal: Any
    agents: Optional[int] = None
    kind: ClassVar[ModelKind] = ModelKind.CUSTOM_SWITCHING

    @property
    def n(self) -> int:
        if self.agents is not None:
            return self.agents
        for member in self.family:
            if not callable(member):
                return _weights_of(member).shape[0]
        raise ParameterError("agents must be given when every family member is a callable")

    def matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        member = self.family[int(_payload_at(self.signal, t))]
        value = member(x) if callable(member) else member
        if isinstance(value, WeightedDigraph):
            return metzler_of_digraph(value)
        return np.asarray(value, dtype=float)

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        return _signal_breakpoints(self.signal, t0, t1)


@dataclass(frozen=True)
class ShiftedModel(SystemModel):
    """The shifted system y' = A(t, y - alpha 1) y of a base model."""
    base: SystemModel
    alpha: float

    @property
    def kind(self) -> ModelKind:
        return self.base.kind

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def metzler(self) -> bool:
        return self.base.metzler

    def matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.base.matrix(t, x - self.alpha)

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        return self.base.breakpoints(t0, t1)

    def check_domain(self, x: np.ndarray) -> None:
        self.base.check_domain(x - self.alpha)


def evaluate_model(model: SystemModel, t: float, x, strict: bool = True) -> np.ndarray:
    """
    Evaluate A(t, x) and enforce the model contract.

    Strict mode raises on domain violations and broken Metzler structure.
    Permissive mode clamps negative off-diagonal entries to zero, restores
    zero row sums and logs a warning. Non-Metzler models (animal groups with
    repulsion) are only checked for zero row sums.

    Raises:
        DimensionMismatchError: If x does not have model.n entries
        DomainError: Strict mode, state outside the model's domain
        MetzlerViolationError: Strict mode, contract broken at (t, i, j)
    """
    x = as_state_vector(x)
    if x.size != model.n:
        raise DimensionMismatchError(f"state has {x.size} agents, model has {model.n}")
    if strict:
        model.check_domain(x)
    A = np.array(model.matrix(t, x), dtype=float)
    if A.shape != (model.n, model.n):
        raise DimensionMismatchError(f"model returned shape {A.shape}, expected {(model.n, model.n)}")

    if model.metzler and strict:
        return validate_metzler(A, t)

    off = A.copy()
    np.fill_diagonal(off, 0.0)
    if model.metzler and np.any(off < 0):
        i, j = np.unravel_index(np.argmin(off), off.shape)
        logger.warning("clamping negative coupling %.3g at t=%.6g, (i, j)=(%d, %d)", off[i, j], t, i, j)
        A = _laplacian_form(np.maximum(off, 0.0))
    sums = A.sum(axis=1)
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    worst = int(np.argmax(np.abs(sums)))
    if abs(sums[worst]) > ROW_SUM_TOL * scale:
        raise MetzlerViolationError(t, worst, worst, float(sums[worst]), reason="nonzero row sum")
    return A


def time_grid(t0: float, t_end: float, h: float, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """
    Integration grid on [t0, t_end] refined at breakpoints.

    Each segment between consecutive breakpoints is split into
    ceil(length/h) equal steps, so breakpoints lie exactly on the grid.
    """
    if not t_end > t0:
        raise ParameterError(f"need t_end > t0, got [{t0}, {t_end}]")
    if not h > 0:
        raise ParameterError(f"step size must be positive, got {h}")
    inner = np.asarray(breakpoints, dtype=float)
    inner = inner[(inner > t0) & (inner < t_end)]
    knots = np.unique(np.concatenate([[t0], inner, [t_end]]))
    lengths = np.diff(knots)
    counts = np.maximum(1, np.ceil(lengths / h - 1e-9).astype(int))
    segment = np.repeat(np.arange(len(lengths)), counts)
    position = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    points = knots[segment] + lengths[segment] * position / counts[segment]
    return np.append(points, t_end)


def _euler_factor(A: np.ndarray, h: float, t: float, strict: bool, strict_bound: bool = False) -> np.ndarray:
    rate = float(np.abs(np.diag(A)).max(initial=0.0))
    too_large = h * rate >= 1.0 if strict_bound else h * rate > 1.0
    if too_large:
        message = f"h*lambda = {h * rate:.6g} at t={t:.6g} breaks positivity of the Euler factor"
        if strict or strict_bound:
            raise StepSizeError(message)
        logger.warning(message)
    return np.eye(A.shape[0]) + h * A


def step(model: SystemModel, t: float, x, h: float, scheme: Union[str, Scheme] = Scheme.EULER,
         strict: bool = True) -> np.ndarray:
    """
    Advance the state by one step of size h.

    euler: x + h A(t, x) x, computed as (I + h A) x. With h*lambda <= 1 this is
    a convex combination, so the state stays in [min x, max x]^n.
    rk4: classical four-stage step; the last stage uses the left limit at
    t + h so piecewise-constant signals are read on the current interval.

    Raises:
        StepSizeError: Euler step in strict mode with h*lambda > 1
    """
    if not h > 0:
        raise ParameterError(f"step size must be positive, got {h}")
    scheme = Scheme(scheme)
    x = as_state_vector(x)
    if scheme is Scheme.EULER:
        A = evaluate_model(model, t, x, strict)
        return _euler_factor(A, h, t, strict) @ x

    def f(s, y):
        return evaluate_model(model, s, y, strict) @ y

    t_end = np.nextafter(t + h, t)
    k1 = f(t, x)
    k2 = f(t + h / 2, x + h / 2 * k1)
    k3 = f(t + h / 2, x + h / 2 * k2)
    k4 = f(t_end, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class Trajectory:
    """
    Time-stamped states with per-step diagnostics.

    Diagnostics are computed on states + offset (see shift_to_positive), while
    states stay in original coordinates.

    Attributes:
        times: Strictly increasing sample times
        states: Array of shape (len(times), n)
        hilbert_to_ones: d(x + offset, 1) per sample (inf off the orthant interior)
        spread: max_i x_i - min_i x_i per sample
        minimal_gamma: minimal_gamma(x + offset) per sample (NaN off the orthant)
        offset: Shift alpha applied before computing metric diagnostics
        scheme: Integration scheme that produced the samples, if any
    """
    times: np.ndarray
    states: np.ndarray
    hilbert_to_ones: np.ndarray
    spread: np.ndarray
    minimal_gamma: np.ndarray
    offset: float = 0.0
    scheme: Optional[str] = None

    @classmethod
    def from_states(cls, times, states, offset: float = 0.0, scheme: Optional[str] = None) -> "Trajectory":
        times = np.asarray(times, dtype=float)
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if times.ndim != 1 or states.shape[0] != times.size:
            raise DimensionMismatchError(f"{times.size} times for {states.shape[0]} states")
        if states.shape[1] < 2:
            raise DimensionMismatchError("trajectory needs at least 2 agents")
        if np.any(np.diff(times) <= 0):
            raise ParameterError("trajectory times must be strictly increasing")
        shifted = states + offset
        return cls(
            times=times,
            states=states,
            hilbert_to_ones=rowwise_hilbert(shifted, np.ones_like(shifted)),
            spread=np.ptp(states, axis=1),
            minimal_gamma=minimal_gamma_batch(shifted),
            offset=float(offset),
            scheme=scheme,
        )

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.times.size

    @property
    def shifted_states(self) -> np.ndarray:
        return self.states + self.offset

    def scaled(self, factor: float) -> "Trajectory":
        """Same trajectory with every state multiplied by factor (offset scaled too)."""
        return Trajectory.from_states(self.times, self.states * factor, self.offset * factor, self.scheme)

    def with_offset(self, offset: float) -> "Trajectory":
        return Trajectory.from_states(self.times, self.states, offset, self.scheme)


def simulate(model: SystemModel, x0, t0: float, t_end: float, h: float,
             scheme: Union[str, Scheme] = Scheme.EULER, strict: bool = True, offset: float = 0.0,
             extra_breakpoints: Sequence[float] = ()) -> Trajectory:
    """
    Integrate the model from x0 over [t0, t_end].

    The grid comes from time_grid(), so no step straddles a model breakpoint.

    Args:
        model: System to integrate
        x0: Initial state
        t0: Start time
        t_end: End time, > t0
        h: Nominal step size
        scheme: "euler" or "rk4"
        strict: Enforce the model contract on every evaluation
        offset: Diagnostic shift recorded on the trajectory
        extra_breakpoints: Further times forced onto the grid (checkpoints)

    Returns:
        Trajectory sampled at every grid point
    """
    scheme = Scheme(scheme)
    x0 = as_state_vector(x0)
    if x0.size != model.n:
        raise DimensionMismatchError(f"initial state has {x0.size} agents, model has {model.n}")
    grid = time_grid(t0, t_end, h, np.concatenate([model.breakpoints(t0, t_end), np.asarray(extra_breakpoints, float)]))
    states = np.empty((grid.size, x0.size))
    states[0] = x0
    for k in range(grid.size - 1):
        states[k + 1] = step(model, grid[k], states[k], grid[k + 1] - grid[k], scheme, strict)
    trajectory = Trajectory.from_states(grid, states, offset=offset, scheme=scheme.value)
    logger.info("simulated %s model over [%g, %g]: %d steps (%s), final spread %.3e",
                model.kind.value, t0, t_end, grid.size - 1, scheme.value, trajectory.spread[-1])
    return trajectory


@dataclass
class TransitionFactor:
    """
    Row-stochastic factor P with phi(t_k1, t_k, x) = P x on one grid.

    Attributes:
        P: Ordered product of the Euler factors I + h_i A(t_i, x_i)
        interval: (t_k, t_k1)
        anchor_state: State at t_k
        times: Integration grid of the interval
        endpoint: State at t_k1, propagated step by step with the same
            arithmetic as simulate(); P @ anchor_state agrees with it to rounding
        lambda_shift: lambda used for the lower bound (LAMBDA_SHIFT_FACTOR x max |A_ii|)
        diagonal_integral: sum_i h_i diag(A(t_i, x_i))
        accumulated: Accumulated graph sum_i h_i G^{A(t_i, x_i)} on the same grid
    """
    P: np.ndarray
    interval: Tuple[float, float]
    anchor_state: np.ndarray
    times: np.ndarray
    endpoint: np.ndarray
    lambda_shift: float
    diagonal_integral: np.ndarray
    accumulated: WeightedDigraph

    @property
    def duration(self) -> float:
        return self.interval[1] - self.interval[0]

    def discount(self, lam: float, continuous: bool = False) -> float:
        """exp(-lam T), or its Euler counterpart prod_i (1 - h_i lam) on this grid."""
        if continuous:
            return math.exp(-lam * self.duration)
        factors = 1.0 - np.diff(self.times) * lam
        return float(np.prod(factors)) if np.all(factors > 0) else 0.0


def factorize_transition(model: SystemModel, t_k: float, t_k1: float, x, N: int,
                         strict: bool = True, grid: Optional[np.ndarray] = None) -> TransitionFactor:
    """
    Euler transition factor of [t_k, t_k1] started from x.

    Uses the grid time_grid(t_k, t_k1, (t_k1 - t_k)/N, breakpoints), the same
    one simulate() builds for that step size, unless an explicit grid from
    t_k to t_k1 is passed (a slice of a trajectory's times).

    Raises:
        NotCertifiableError: If the model is not Metzler
        StepSizeError: If some step has h*lambda >= 1
    """
    if not model.metzler:
        raise NotCertifiableError(f"{model.kind.value} model with repulsion is not Metzler")
    if int(N) != N or N < 1:
        raise ParameterError(f"N must be a positive integer, got {N}")
    x = as_state_vector(x)
    n = model.n
    if grid is None:
        grid = time_grid(t_k, t_k1, (t_k1 - t_k) / N, model.breakpoints(t_k, t_k1))
    else:
        grid = np.asarray(grid, dtype=float)
        if grid.size < 2 or grid[0] != t_k or grid[-1] != t_k1 or np.any(np.diff(grid) <= 0):
            raise GridMismatchError(f"grid must increase from {t_k} to {t_k1}")

    P = np.eye(n)
    state = x.copy()
    diagonal = np.zeros(n)
    accumulated = np.zeros((n, n))
    rate = 0.0
    for i in range(grid.size - 1):
        h = grid[i + 1] - grid[i]
        A = evaluate_model(model, grid[i], state, strict)
        factor = _euler_factor(A, h, grid[i], strict, strict_bound=True)
        P = factor @ P
        state = factor @ state
        off = A.copy()
        np.fill_diagonal(off, 0.0)
        accumulated += h * off
        diagonal += h * np.diag(A)
        rate = max(rate, float(np.abs(np.diag(A)).max(initial=0.0)))

    return TransitionFactor(
        P=P,
        interval=(t_k, t_k1),
        anchor_state=x,
        times=grid,
        endpoint=state,
        lambda_shift=LAMBDA_SHIFT_FACTOR * rate,
        diagonal_integral=diagonal,
        accumulated=WeightedDigraph(np.maximum(accumulated, 0.0)),
    )


def transition_lower_bound(factor: TransitionFactor, accumulated: WeightedDigraph, lam: float,
                           continuous: bool = False) -> np.ndarray:
    """Matrix discount * (I + integral of (A + lam I)) built from an accumulated graph."""
    n = factor.P.shape[0]
    if accumulated.n != n:
        raise DimensionMismatchError(f"accumulated graph has {accumulated.n} nodes, factor has {n}")
    integral = np.array(accumulated.weights)
    np.fill_diagonal(integral, factor.diagonal_integral + lam * factor.duration)
    return factor.discount(lam, continuous) * (np.eye(n) + integral)


def lower_bound_transition(factor: TransitionFactor, accumulated: WeightedDigraph, lam: float,
                           continuous: bool = False, slack: float = 1e-6,
                           grid: Optional[np.ndarray] = None) -> bool:
    """
    Check P >= discount * (I + integral of A-bar) elementwise within slack.

    The Euler discount prod_i (1 - h_i lam) makes the inequality exact on any
    grid with h_i lam < 1; continuous=True uses exp(-lam T), which the Euler
    product only reaches as the grid is refined.

    Args:
        factor: Transition factor of the interval
        accumulated: Accumulated graph along the same grid
        lam: Shift lambda >= max |A_ii| on the interval
        continuous: Use exp(-lam T) as the discount
        slack: Absolute tolerance
        grid: Grid the accumulated graph was computed on, checked against the factor's

    Raises:
        GridMismatchError: If grid differs from factor.times
    """
    if grid is not None:
        grid = np.asarray(grid, dtype=float)
        if grid.shape != factor.times.shape or not np.array_equal(grid, factor.times):
            raise GridMismatchError("accumulated graph was computed on a different grid")
    bound = transition_lower_bound(factor, accumulated, lam, continuous)
    holds = bool(np.all(factor.P >= bound - slack))
    if not holds:
        logger.debug("transition lower bound fails by %.3e", float(np.max(bound - factor.P)))
    return holds


def _as_time_function(signal: Any) -> Callable[[float], float]:
    if callable(signal) and not hasattr(signal, "at"):
        return signal
    if hasattr(signal, "at"):
        return lambda t: float(signal.at(t))
    value = float(signal)
    return lambda t: value


def internal_dynamics_transform(a: Any, b: Any, x_traj: Trajectory) -> Trajectory:
    """
    Map x_i' = a(t) x_i + b(t) + sum_j a_ij (x_j - x_i) to plain consensus form.

    y(t) = exp(int_0^t a) x(t) - (int_0^t exp(int_0^tau a) b(tau) dtau) 1, with
    integrals taken from the first trajectory time by the trapezoid rule.
    Spreads satisfy spread_y = exp(int a) spread_x.

    Args:
        a: Constant, callable t -> float, or signal with at()
        b: Constant, callable t -> float, or signal with at()
        x_traj: Trajectory of the original system
    """
    a_of, b_of = _as_time_function(a), _as_time_function(b)
    times = x_traj.times
    a_values = np.array([a_of(t) for t in times])
    b_values = np.array([b_of(t) for t in times])
    growth = np.exp(cumulative_trapezoid(a_values, times, initial=0.0))
    forcing = cumulative_trapezoid(growth * b_values, times, initial=0.0)
    y = growth[:, None] * x_traj.states - forcing[:, None]
    return Trajectory.from_states(times, y, scheme=x_traj.scheme)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [low, high]^n (scalar or per-agent bounds)."""
    low: Any
    high: Any
    agents: Optional[int] = None

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        n = self.agents or np.size(self.low)
        low = np.broadcast_to(np.asarray(self.low, dtype=float), (n,)).copy()
        high = np.broadcast_to(np.asarray(self.high, dtype=float), (n,)).copy()
        if np.any(high < low):
            raise ParameterError("box needs low <= high")
        return low, high

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        low, high = self.bounds()
        return low + (high - low) * rng.random((size, low.size))

    def grid_points(self, resolution: int, rng: np.random.Generator, max_points: int = 4096) -> np.ndarray:
        """Uniform grid with resolution points per axis, or a seeded sample when that grid is too large."""
        low, high = self.bounds()
        if resolution ** low.size > max_points:
            logger.info("grid %d^%d too large, sampling %d points of the box", resolution, low.size, max_points)
            return self.sample(max_points, rng)
        axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(low, high)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, low.size)


def shift_to_positive(target: Union[np.ndarray, Sequence[float], Box], margin: float) -> Tuple[float, Any]:
    """
    Shift alpha with target + alpha >= margin: alpha = margin + max(0, -min target).

    The shifted system y' = A(t, y - alpha 1) y (ShiftedModel) has the same
    increments as the original, so diagnostics can be read in either frame.

    Returns:
        (alpha, shifted state or Box)
    """
    if not margin > 0:
        raise ParameterError(f"margin must be positive, got {margin}")
    if isinstance(target, Box):
        low, high = target.bounds()
        alpha = margin + max(0.0, -float(low.min()))
        return alpha, Box(low + alpha, high + alpha, target.agents)
    x = as_state_vector(target)
    alpha = margin + max(0.0, -float(x.min()))
    return alpha, x + alpha
