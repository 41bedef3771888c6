"""
Switching topologies and the accumulated-graph lower-bound check.

Signals are piecewise constant on left-closed intervals
[breakpoints[k], breakpoints[k+1]) and hold their first/last payload outside
the declared range. Generators are pure functions of (seed, parameters).
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from .dynamics import Box, SystemModel, Trajectory, evaluate_model
from .errors import CoverageError, NotCertifiableError, ParameterError
from .graph import (
    ConnectivityCertificate,
    WeightedDigraph,
    accumulate,
    digraph_of_metzler,
    integrate_stack,
    is_qsc,
)

logger = logging.getLogger(__name__)

COVERAGE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SwitchingSignal:
    """
    Piecewise-constant signal.

    Attributes:
        breakpoints: Strictly increasing times t_0 < ... < t_M
        values: One payload per interval (M payloads): a WeightedDigraph,
            a family index or a scalar
        dwell_time: Declared minimum interval length, checked on construction
        epochs: Optional coarser partition recorded by a generator (the outer
            intervals of the chain protocol)
    """
    breakpoints: np.ndarray
    values: Tuple[Any, ...]
    dwell_time: Optional[float] = None
    epochs: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        points = np.array(self.breakpoints, dtype=float)
        points.setflags(write=False)
        object.__setattr__(self, "breakpoints", points)
        object.__setattr__(self, "values", tuple(self.values))
        if points.ndim != 1 or points.size < 2:
            raise ParameterError("a switching signal needs at least one interval")
        if np.any(np.diff(points) <= 0):
            raise ParameterError("breakpoints must be strictly increasing")
        if len(self.values) != points.size - 1:
            raise ParameterError(f"{len(self.values)} payloads for {points.size - 1} intervals")
        if self.dwell_time is not None:
            shortest = float(np.diff(points).min())
            if shortest < self.dwell_time - COVERAGE_TOL:
                raise ParameterError(f"interval of length {shortest:.6g} below dwell time {self.dwell_time:.6g}")

    @property
    def start(self) -> float:
        return float(self.breakpoints[0])

    @property
    def end(self) -> float:
        return float(self.breakpoints[-1])

    def __len__(self) -> int:
        return len(self.values)

    def index_at(self, t: float) -> int:
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(max(k, 0), len(self.values) - 1)

    def at(self, t: float) -> Any:
        return self.values[self.index_at(t)]

    def intervals(self):
        """Yield (t_start, t_end, payload) per interval."""
        for k, payload in enumerate(self.values):
            yield float(self.breakpoints[k]), float(self.breakpoints[k + 1]), payload

    def graphs(self, family: Optional[Sequence[WeightedDigraph]] = None) -> List[WeightedDigraph]:
        """Payloads as graphs, looking indices up in family when given."""
        if family is None:
            return list(self.values)
        return [family[int(v)] for v in self.values]

    def samples(self, family: Optional[Sequence[WeightedDigraph]] = None) -> List[Tuple[float, WeightedDigraph]]:
        """Left-rule samples for graph.accumulate: one per breakpoint."""
        graphs = self.graphs(family)
        return list(zip(self.breakpoints[:-1].tolist(), graphs)) + [(self.end, graphs[-1])]

    def accumulated(self, t1: float, t2: float,
                    family: Optional[Sequence[WeightedDigraph]] = None) -> WeightedDigraph:
        """Exact accumulated graph of the signal over [t1, t2]."""
        return accumulate(self.samples(family), t1, t2)

    def edge_trace(self, i: int, j: int) -> Tuple[np.ndarray, np.ndarray]:
        """Breakpoints and per-interval weight of link (i, j)."""
        weights = np.array([g.weights[i, j] for g in self.graphs()])
        return self.breakpoints, weights


@dataclass(frozen=True)
class CheckpointSequence:
    """Checkpoints t_0 < t_1 < ... with bounded gaps."""
    times: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ParameterError("need at least two checkpoints")
        if np.any(np.diff(times) <= 0):
            raise ParameterError("checkpoints must be strictly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, t0: float, t_end: float, spacing: float) -> "CheckpointSequence":
        """Checkpoints every spacing from t0; a trailing remainder becomes a shorter last interval."""
        if not spacing > 0:
            raise ParameterError(f"checkpoint spacing must be positive, got {spacing}")
        count = int(np.floor((t_end - t0) / spacing + 1e-9))
        times = t0 + spacing * np.arange(count + 1)
        if t_end - times[-1] > COVERAGE_TOL:
            times = np.append(times, t_end)
        else:
            times[-1] = t_end
        return cls(times)

    @property
    def sup_gap(self) -> float:
        return float(np.diff(self.times).max())

    def intervals(self) -> List[Tuple[float, float]]:
        return list(zip(self.times[:-1].tolist(), self.times[1:].tolist()))


def dwell_time_signal(graphs: Sequence[Any], tau_D: float, horizon: float, seed: int,
                      t0: float = 0.0) -> SwitchingSignal:
    """
    Random piecewise-constant signal over a graph family with dwell time tau_D.

    Interval lengths are uniform in [tau_D, 2 tau_D] and payloads uniform over
    the family; the last interval is cut at the horizon and merged into its
    predecessor when that would leave it shorter than tau_D.

    Raises:
        ParameterError: Empty family, tau_D <= 0 or horizon < tau_D
    """
    graphs = list(graphs)
    if not graphs:
        raise ParameterError("dwell_time_signal needs at least one graph")
    if not tau_D > 0:
        raise ParameterError(f"dwell time must be positive, got {tau_D}")
    if horizon < tau_D:
        raise ParameterError(f"horizon {horizon} shorter than dwell time {tau_D}")
    if len(graphs) == 1:
        return SwitchingSignal([t0, t0 + horizon], (graphs[0],), dwell_time=tau_D)

    rng = np.random.default_rng(seed)
    lengths = []
    while sum(lengths) < horizon:
        lengths.append(rng.uniform(tau_D, 2 * tau_D))
    lengths[-1] = horizon - sum(lengths[:-1])
    if lengths[-1] < tau_D and len(lengths) > 1:
        tail = lengths.pop()
        lengths[-1] += tail
    points = t0 + np.concatenate([[0.0], np.cumsum(lengths)])
    points[-1] = t0 + horizon
    indices = rng.integers(len(graphs), size=len(lengths))
    logger.debug("dwell-time signal: %d intervals over %g", len(lengths), horizon)
    return SwitchingSignal(points, tuple(graphs[k] for k in indices), dwell_time=tau_D)


@dataclass(frozen=True)
class ChainActivationConfig:
    """
    Randomization choices of the chain activation protocol.

    Attributes:
        outer_min: Lower bound of outer interval lengths
        outer_max: Upper bound of outer interval lengths
        pieces_min: Fewest pieces per outer interval
        pieces_max: Most pieces per outer interval
        weight_spread: Active weights are uniform in [delta, weight_spread * delta]
    """
    outer_min: float = 0.5
    outer_max: float = 1.5
    pieces_min: int = 5
    pieces_max: int = 15
    weight_spread: float = 2.0

    def __post_init__(self):
        if not 0 < self.outer_min <= self.outer_max:
            raise ParameterError("need 0 < outer_min <= outer_max")
        if not 1 <= self.pieces_min <= self.pieces_max:
            raise ParameterError("need 1 <= pieces_min <= pieces_max")
        if self.weight_spread < 1:
            raise ParameterError("weight_spread must be >= 1")


def _outer_lengths(rng: np.random.Generator, horizon: float, config: ChainActivationConfig) -> List[float]:
    lengths = []
    while sum(lengths) < horizon:
        lengths.append(rng.uniform(config.outer_min, config.outer_max))
    lengths[-1] = horizon - sum(lengths[:-1])
    if lengths[-1] < config.outer_min and len(lengths) > 1:
        tail = lengths.pop()
        lengths[-1] += tail
    return lengths


def chain_random_activation(n: int, delta: float, horizon: float, seed: int, edges_per_step: int = 3,
                            step: float = 0.01, t0: float = 0.0,
                            config: Optional[ChainActivationConfig] = None) -> SwitchingSignal:
    """
    Sparse random activation of the chain links a_{p,p+1}.

    Random outer intervals are each cut into a random number of pieces; every
    piece is split into Euler steps of size at most step, and on each step
    edges_per_step links (p, p+1), drawn with replacement, get weights
    uniform in [delta, weight_spread*delta] while every other link is zero.
    Node p listens to node p+1, so information flows towards index 0 and
    the last node is the chain's center.

    Args:
        n: Number of agents, >= 2
        delta: Lower bound on active weights, > 0
        horizon: Signal length
        seed: Seed of the generator
        edges_per_step: Links drawn per step
        step: Maximal step size
        t0: Start time
        config: Distribution choices, ChainActivationConfig() by default

    Returns:
        SwitchingSignal with one interval per step and epochs set to the
        outer interval boundaries
    """
    if n < 2:
        raise ParameterError(f"a chain needs n >= 2, got {n}")
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    if not horizon > 0 or not step > 0:
        raise ParameterError("horizon and step must be positive")
    if edges_per_step < 1:
        raise ParameterError("edges_per_step must be >= 1")
    config = config or ChainActivationConfig()
    rng = np.random.default_rng(seed)

    outer = _outer_lengths(rng, horizon, config)
    epochs = t0 + np.concatenate([[0.0], np.cumsum(outer)])
    epochs[-1] = t0 + horizon

    knots = []
    for start, end in zip(epochs[:-1], epochs[1:]):
        pieces = int(rng.integers(config.pieces_min, config.pieces_max + 1))
        cuts = np.sort(rng.uniform(start, end, size=pieces - 1))
        edges = np.concatenate([[start], cuts, [end]])
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a <= 0:
                continue
            count = max(1, int(np.ceil((b - a) / step - 1e-9)))
            knots.append(np.linspace(a, b, count + 1)[:-1])
    points = np.append(np.concatenate(knots), epochs[-1])

    steps = points.size - 1
    chosen = rng.integers(0, n - 1, size=(steps, edges_per_step))
    weights = rng.uniform(delta, config.weight_spread * delta, size=(steps, edges_per_step))
    graphs = []
    for links, values in zip(chosen, weights):
        W = np.zeros((n, n))
        W[links, links + 1] = values
        graphs.append(WeightedDigraph(W))
    logger.info("chain activation: n=%d, %d outer intervals, %d steps", n, len(outer), steps)
    return SwitchingSignal(points, tuple(graphs), epochs=epochs)


def periodic_signal(pattern: Sequence[Tuple[float, Any]], horizon: float, t0: float = 0.0) -> SwitchingSignal:
    """
    Repeat a (duration, payload) pattern until the horizon.

    The last repetition is cut at the horizon.
    """
    if not pattern:
        raise ParameterError("periodic_signal needs a nonempty pattern")
    if any(not duration > 0 for duration, _ in pattern):
        raise ParameterError("pattern durations must be positive")
    points, values = [t0], []
    t = t0
    end = t0 + horizon
    while t < end - COVERAGE_TOL:
        for duration, payload in pattern:
            if t >= end - COVERAGE_TOL:
                break
            t = min(t + duration, end)
            points.append(t)
            values.append(payload)
    points[-1] = end
    return SwitchingSignal(points, tuple(values))


def _check_coverage(traj: Trajectory, t1: float, t2: float):
    if traj.times[0] > t1 + COVERAGE_TOL or traj.times[-1] < t2 - COVERAGE_TOL:
        raise CoverageError(f"trajectory covers [{traj.times[0]}, {traj.times[-1]}], need [{t1}, {t2}]")


def _offdiagonal_stack(model: SystemModel, times: np.ndarray, states: np.ndarray) -> np.ndarray:
    stack = np.empty((times.size, model.n, model.n))
    for k, (t, x) in enumerate(zip(times, states)):
        stack[k] = digraph_of_metzler(evaluate_model(model, t, x)).weights
    return stack


def accumulate_along(model: SystemModel, traj: Trajectory, t1: float, t2: float) -> WeightedDigraph:
    """
    Accumulated graph of G^{A(t, x(t))} along a realized trajectory.

    Left rule on the trajectory grid: A(t_i, x_i) holds on [t_i, t_{i+1}),
    the same piecewise-constant field an Euler step integrates.

    Raises:
        CoverageError: If the trajectory does not span [t1, t2]
        NotCertifiableError: If the model is not Metzler
    """
    if not model.metzler:
        raise NotCertifiableError(f"{model.kind.value} model is not Metzler")
    _check_coverage(traj, t1, t2)
    first = max(int(np.searchsorted(traj.times, t1, side="right")) - 1, 0)
    last = int(np.searchsorted(traj.times, t2, side="left"))
    last = min(last, traj.times.size - 1)
    times = traj.times[first:last + 1]
    stack = _offdiagonal_stack(model, times, traj.states[first:last + 1])
    lo, hi = max(t1, times[0]), min(t2, times[-1])
    return WeightedDigraph(np.maximum(integrate_stack(times, stack, lo, hi), 0.0))


BoundSpec = Union[WeightedDigraph, Callable[[np.ndarray], WeightedDigraph]]


@dataclass
class IntervalMargin:
    """
    Lower-bound margin on one checkpoint interval.

    Attributes:
        interval: (t_k, t_k1)
        margin: min over entries with B > 0 of accumulated - B (inf when B has none)
        entry: (i, j) of the binding entry, or None
        state: Sampled state that attained the margin (sampled mode), else None
    """
    interval: Tuple[float, float]
    margin: float
    entry: Optional[Tuple[int, int]]
    state: Optional[np.ndarray] = None

    @property
    def passed(self) -> bool:
        return self.margin >= 0.0


@dataclass
class AccumulatedBoundReport:
    """
    Outcome of verify_accumulated_lower_bound.

    Attributes:
        mode: "trajectory" (along the realized solution) or "sampled" (frozen
            states sampled from a domain; a sampled verdict is never a proof)
        intervals: Per-interval margins
        bound_certificate: QSC certificate of B (at the first anchor state when
            B depends on x), or None when B is not QSC
        points: Number of frozen states per interval in sampled mode
    """
    mode: str
    intervals: List[IntervalMargin]
    bound_certificate: Optional[ConnectivityCertificate]
    points: int = 0

    @property
    def passed(self) -> bool:
        return all(item.passed for item in self.intervals)

    @property
    def binding(self) -> IntervalMargin:
        return min(self.intervals, key=lambda item: item.margin)

    @property
    def bound_is_qsc(self) -> bool:
        return self.bound_certificate is not None

    @property
    def label(self) -> str:
        outcome = "pass" if self.passed else "fail"
        return f"{outcome} (sampled)" if self.mode == "sampled" else outcome


def _margin(accumulated: np.ndarray, bound: np.ndarray) -> Tuple[float, Optional[Tuple[int, int]]]:
    gap = accumulated - bound
    # entries where B = 0 hold trivially since accumulated graphs are nonnegative
    relevant = bound > 0
    if not relevant.any():
        return float("inf"), None
    masked = np.where(relevant, gap, np.inf)
    i, j = np.unravel_index(int(np.argmin(masked)), masked.shape)
    return float(masked[i, j]), (int(i), int(j))


def _bound_at(bound: BoundSpec, x: np.ndarray) -> WeightedDigraph:
    return bound(x) if callable(bound) else bound


def _frozen_accumulated(model: SystemModel, times: np.ndarray, x: np.ndarray, t1: float, t2: float) -> np.ndarray:
    states = np.broadcast_to(x, (times.size, x.size))
    return integrate_stack(times, _offdiagonal_stack(model, times, states), t1, t2)


def _sampled_interval(model: SystemModel, bound: BoundSpec, times: np.ndarray, points: np.ndarray,
                      t1: float, t2: float) -> IntervalMargin:
    worst = IntervalMargin((t1, t2), float("inf"), None)
    for x in points:
        accumulated = _frozen_accumulated(model, times, x, t1, t2)
        margin, entry = _margin(accumulated, _bound_at(bound, x).weights)
        if margin < worst.margin:
            worst = IntervalMargin((t1, t2), margin, entry, np.array(x))
    return worst


def verify_accumulated_lower_bound(model: SystemModel, traj: Trajectory, checkpoints: CheckpointSequence,
                                   bound: BoundSpec, mode: str = "trajectory", domain: Optional[Box] = None,
                                   resolution: int = 3, seed: int = 0, max_points: int = 256,
                                   n_jobs: int = 1) -> AccumulatedBoundReport:
    """
    Check that the accumulated graph on every checkpoint interval dominates B.

    trajectory mode integrates G^{A(t, x(t))} along traj. sampled mode freezes
    x at points of the domain box (a grid of resolution points per axis,
    capped at max_points) plus the trajectory's states at the checkpoints, and
    integrates G^{A(t, x)} on the trajectory grid.

    Args:
        model: Model that produced traj
        traj: Realized trajectory covering all checkpoint intervals
        checkpoints: Interval partition
        bound: Constant graph B or a callable x -> B(x)
        mode: "trajectory" or "sampled"
        domain: Box sampled in sampled mode; the trajectory's bounding box if omitted
        resolution: Grid points per axis in sampled mode
        seed: Seed for the fallback sample when the grid is too large
        max_points: Cap on domain points per interval
        n_jobs: Parallel workers over intervals

    Raises:
        CoverageError: If traj misses part of the checkpoint range
        NotCertifiableError: If the model is not Metzler
    """
    if mode not in ("trajectory", "sampled"):
        raise ParameterError(f"unknown verification mode {mode!r}")
    if not model.metzler:
        raise NotCertifiableError(f"{model.kind.value} model is not Metzler")
    _check_coverage(traj, checkpoints.times[0], checkpoints.times[-1])
    anchors = np.array([traj.states[max(int(np.searchsorted(traj.times, t, side="right")) - 1, 0)]
                        for t in checkpoints.times[:-1]])
    certificate = is_qsc(_bound_at(bound, anchors[0]))

    if mode == "trajectory":
        intervals = []
        for (t1, t2), x in zip(checkpoints.intervals(), anchors):
            accumulated = accumulate_along(model, traj, t1, t2)
            margin, entry = _margin(accumulated.weights, _bound_at(bound, x).weights)
            intervals.append(IntervalMargin((t1, t2), margin, entry))
        report = AccumulatedBoundReport("trajectory", intervals, certificate)
    else:
        box = domain or Box(traj.states.min(axis=0), traj.states.max(axis=0))
        grid = box.grid_points(resolution, np.random.default_rng(seed), max_points)
        points = np.vstack([grid, anchors])
        jobs = []
        for t1, t2 in checkpoints.intervals():
            lo = max(int(np.searchsorted(traj.times, t1, side="right")) - 1, 0)
            hi = min(int(np.searchsorted(traj.times, t2, side="left")), traj.times.size - 1)
            jobs.append(delayed(_sampled_interval)(model, bound, traj.times[lo:hi + 1], points, t1, t2))
        intervals = Parallel(n_jobs=n_jobs)(jobs)
        report = AccumulatedBoundReport("sampled", list(intervals), certificate, points=len(points))

    binding = report.binding
    logger.info("accumulated lower bound %s over %d intervals, binding margin %.3e at %s",
                report.label, len(report.intervals), binding.margin, binding.entry)
    return report
