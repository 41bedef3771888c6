"""
Consensus certification and numerical checks of the cone-contraction lemmas.

certify_consensus reads a verdict off a trajectory by log-linear regression
of d(x(t), 1). The verify_* functions sample the inequalities the
exponential-consensus argument is built on and count violations; each
returns a report value with a ``passed`` property.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm
from scipy.stats import linregress

from .dynamics import Trajectory
from .errors import DimensionMismatchError, ParameterError
from .hilbert import (
    Cone,
    an_bn,
    box_vertex_rays,
    comparison_constant,
    contraction_constant,
    diameter_linear_bounds,
    extreme_rays,
    gamma_upper,
    is_admissible_gamma,
    minimal_gamma_batch,
    norm_metric_bounds,
    pairwise_hilbert,
    sample_box_rays,
    sample_cone_rays,
)

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10
CONSENSUS_FLOOR = 1e-12
VIOLATION_SLACK = 1e-9
FIT_METHOD = "least squares fit of ln d(x(t), 1) against t over the trailing window"


class ConsensusVerdict(Enum):
    EXPONENTIAL = "exponential"
    ASYMPTOTIC = "asymptotic"
    UNDECIDED = "undecided"
    DIVERGING = "diverging"


@dataclass
class ConsensusReport:
    """
    Consensus verdict of one trajectory.

    d(t) ~ prefactor_K * exp(-rate_lambda * (t - t_0)) * d(t_0) over the window.

    Attributes:
        verdict: Classification of the decay
        rate_lambda: Fitted decay exponent of d(x(t), 1) (inf for exact consensus)
        prefactor_K: Fitted prefactor relative to d(x(t_0), 1)
        fit_residual: 1 - r^2 of the log-linear fit
        spread_initial: max x - min x at the first sample
        spread_final: max x - min x at the last sample
        window: (t_a, t_b) of the fit
        spread_rate: Decay exponent fitted to ln(spread) on the same window, if fittable
        samples: Points used by the fit
        method: Description of the estimator
    """
    verdict: ConsensusVerdict
    rate_lambda: float
    prefactor_K: float
    fit_residual: float
    spread_initial: float
    spread_final: float
    window: Tuple[float, float]
    spread_rate: Optional[float] = None
    samples: int = 0
    method: str = FIT_METHOD

    @property
    def reached_consensus(self) -> bool:
        return self.verdict in (ConsensusVerdict.EXPONENTIAL, ConsensusVerdict.ASYMPTOTIC)


def _log_fit(times: np.ndarray, values: np.ndarray):
    usable = values > CONSENSUS_FLOOR
    if usable.sum() < 3:
        return None
    t, v = times[usable], np.log(values[usable])
    if np.ptp(v) == 0.0:
        return 0.0, float(v[0]), 0.0, int(usable.sum())
    fit = linregress(t, v)
    return float(fit.slope), float(fit.intercept), float(1.0 - fit.rvalue ** 2), int(usable.sum())


def certify_consensus(traj: Trajectory, fit_window_fraction: float = 0.5, residual_tol: float = 0.05,
                      jitter_tol: float = 1e-9, min_log_decay: float = 1.0) -> ConsensusReport:
    """
    Classify the decay of d(x(t), 1) along a trajectory.

    exponential: negative slope with 1 - r^2 <= residual_tol, and d fell by
    at least min_log_decay e-folds over the run.
    asymptotic: d nonincreasing within jitter_tol without a clean fit.
    diverging: the spread grew.
    undecided: anything else.

    Args:
        traj: Trajectory; d(x, 1) must be finite on at least MIN_SAMPLES states
            (shift states into the positive orthant first if needed)
        fit_window_fraction: Trailing fraction of samples used by the fit
        residual_tol: Largest accepted 1 - r^2
        jitter_tol: Relative tolerance on increases of d for the asymptotic verdict
        min_log_decay: Smallest ln(d(t_0)/d(t_end)) for an exponential verdict

    Raises:
        ParameterError: Too few finite samples or a fraction outside (0, 1]
    """
    if not 0.0 < fit_window_fraction <= 1.0:
        raise ParameterError(f"fit_window_fraction must lie in (0, 1], got {fit_window_fraction}")
    finite = np.isfinite(traj.hilbert_to_ones)
    if finite.sum() < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} samples with finite d(x, 1), got {int(finite.sum())}")
    times = traj.times[finite]
    d = traj.hilbert_to_ones[finite]
    spread = traj.spread[finite]
    t0 = times[0]
    spread_initial, spread_final = float(traj.spread[0]), float(traj.spread[-1])

    if np.all(d <= CONSENSUS_FLOOR):
        logger.info("trajectory sits at consensus; rate reported as inf")
        return ConsensusReport(ConsensusVerdict.EXPONENTIAL, math.inf, 0.0, 0.0, spread_initial, spread_final,
                               (float(times[0]), float(times[-1])), math.inf, len(times))

    start = min(int(math.floor((1.0 - fit_window_fraction) * len(times))), len(times) - MIN_SAMPLES // 2)
    start = max(start, 0)
    window = slice(start, None)
    fit = _log_fit(times[window] - t0, d[window])
    if fit is None:
        # window already at consensus: fit the decay over the whole run
        window = slice(0, None)
        fit = _log_fit(times - t0, d)
    spread_fit = _log_fit(times[window] - t0, spread[window])
    spread_rate = -spread_fit[0] if spread_fit else None
    span = (float(times[window][0]), float(times[window][-1]))

    if fit is None:
        slope, intercept, residual, used = -math.inf, -math.inf, 0.0, 0
        rate, prefactor = math.inf, 0.0
    else:
        slope, intercept, residual, used = fit
        rate = -slope
        prefactor = math.exp(intercept) / d[0] if d[0] > 0 else math.inf

    progress = math.log(d[0] / d[-1]) if d[-1] > 0 and d[0] > 0 else (math.inf if d[-1] == 0 else 0.0)
    growth = np.diff(d)
    monotone = bool(np.all(growth <= jitter_tol * d.max()))
    if spread_final > spread_initial * (1.0 + jitter_tol) + CONSENSUS_FLOOR:
        verdict = ConsensusVerdict.DIVERGING
    elif fit is None:
        verdict = ConsensusVerdict.EXPONENTIAL if d[-1] <= CONSENSUS_FLOOR else ConsensusVerdict.UNDECIDED
    elif slope < 0 and residual <= residual_tol and progress >= min_log_decay:
        verdict = ConsensusVerdict.EXPONENTIAL
    elif monotone and d[-1] < d[0]:
        verdict = ConsensusVerdict.ASYMPTOTIC
    else:
        verdict = ConsensusVerdict.UNDECIDED

    logger.info("consensus verdict %s: rate %.6g, residual %.3g over [%g, %g]",
                verdict.value, rate, residual, span[0], span[1])
    return ConsensusReport(verdict, rate, prefactor, residual, spread_initial, spread_final, span,
                           spread_rate, used)


@dataclass
class ContractionReport:
    """
    Observed cone inclusion of the box rays under row-stochastic matrices.

    The certified inputs are x = 1/sqrt(n) 1 - e with e in [0, epsilon]^n,
    for which A x lies in K(C_theoretical * epsilon). C_cone_observed repeats
    the measurement on rays spread over all of K(epsilon); it is reported
    only, since no constant below 1 holds there for every such A.

    Attributes:
        n: Number of agents
        epsilon: Cone parameter of the inputs
        delta: Lower bound on the distinguished column
        C_theoretical: (1 - delta)/(1 - sqrt(n) epsilon delta)
        C_observed: max over box samples of minimal_gamma(A x)/epsilon
        samples: Number of (A, x) pairs
        violations: Box pairs with minimal_gamma(A x) > C_theoretical*epsilon + slack
        C_cone_observed: max over K(epsilon) samples of minimal_gamma(A x)/epsilon
    """
    n: int
    epsilon: float
    delta: float
    C_theoretical: float
    C_observed: float
    samples: int
    violations: int
    C_cone_observed: float = math.nan

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _blend_matrices(rng: np.random.Generator, count: int, n: int, delta: float) -> np.ndarray:
    rows = rng.random((count, n, n))
    rows /= rows.sum(axis=2, keepdims=True)
    columns = rng.integers(n, size=count)
    A = (1.0 - delta) * rows
    A[np.arange(count), :, columns] += delta
    return A


def sample_blend_matrix(n: int, delta: float, seed: int = 0) -> np.ndarray:
    """One row-stochastic matrix with a column >= delta, as drawn by verify_lemma_contraction."""
    if n < 2 or not 0.0 < delta <= 1.0:
        raise ParameterError(f"need n >= 2 and delta in (0, 1], got n={n}, delta={delta}")
    return _blend_matrices(np.random.default_rng(seed), 1, n, delta)[0]


def verify_lemma_contraction(n: int, delta: float, epsilon: float, samples: int = 10_000, seed: int = 0,
                             chunk: int = 20_000) -> ContractionReport:
    """
    Sample row-stochastic A with a column >= delta and box rays x.

    A = (1 - delta) R + delta 1 e_k^T with R a random row-normalized
    nonnegative matrix; x runs over the box vertices, random vertices and
    random box points (see sample_box_rays). Each chunk also maps random
    rays of K(epsilon) through the same matrices for C_cone_observed.

    Raises:
        ParameterError: delta outside (0, 1], epsilon outside (0, 1/sqrt(n)), samples < 1
    """
    C = contraction_constant(n, delta, epsilon)
    if samples < 1:
        raise ParameterError(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    structured = box_vertex_rays(n, epsilon)
    limit = C * epsilon + VIOLATION_SLACK
    worst, worst_cone, violations, done = 0.0, 0.0, 0, 0
    while done < samples:
        count = min(chunk, samples - done)
        half = count // 2
        x = np.vstack([
            sample_box_rays(n, epsilon, half, rng, vertices=True),
            sample_box_rays(n, epsilon, count - half, rng, vertices=False),
        ])
        if done == 0:
            head = min(len(structured), count)
            x[:head] = structured[:head]
        A = _blend_matrices(rng, count, n, delta)
        gammas = minimal_gamma_batch(np.einsum("sij,sj->si", A, x))
        worst = max(worst, float(np.nanmax(gammas)))
        violations += int(np.sum(gammas > limit))

        cone_x = sample_cone_rays(n, epsilon, count, rng, boundary=True)
        cone_gammas = minimal_gamma_batch(np.einsum("sij,sj->si", A, cone_x))
        worst_cone = max(worst_cone, float(np.nanmax(cone_gammas)))
        done += count
    report = ContractionReport(n, epsilon, delta, C, worst / epsilon, samples, violations, worst_cone / epsilon)
    logger.info("contraction n=%d delta=%g eps=%g: C=%.6g observed %.6g (K(eps) %.6g), %d violations",
                n, delta, epsilon, C, report.C_observed, report.C_cone_observed, violations)
    return report


@dataclass
class DecayRow:
    """One power m: sampled diameter of A^m K(eps) against c^m alpha(eps)."""
    m: int
    estimate: float
    bound: float
    cone_bound: float

    @property
    def passed(self) -> bool:
        return self.estimate <= self.bound + VIOLATION_SLACK * max(1.0, self.bound)


@dataclass
class DiameterDecayReport:
    """
    Iterated diameter decay of one matrix.

    Attributes:
        epsilon: Cone parameter
        delta: Measured max_k min_i A_ik
        C: Cone-inclusion constant for (n, delta, epsilon)
        c: Certified per-step factor of the diameter
        eta: c = 1/(1 + eta C)
        rows: Table for m = 0..m_max
    """
    epsilon: float
    delta: float
    C: float
    c: float
    eta: float
    rows: List[DecayRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)


def _column_floor(A: np.ndarray) -> float:
    return float(A.min(axis=0).max())


def verify_diameter_decay(A, epsilon: float, m_max: int, samples: int = 400, seed: int = 0) -> DiameterDecayReport:
    """
    Estimate diam(A^m K(epsilon)) for m = 0..m_max and compare with c^m alpha(epsilon).

    The estimate is the largest Hilbert distance among images of the
    structured boundary rays plus sampled boundary rays, so it is a lower
    bound of the true diameter and any excess over the bound is a genuine
    violation. cone_bound is alpha(C^m epsilon), the diameter the iterated
    box inclusion would give; it is printed for reference and not checked.

    Raises:
        ParameterError: If A is not row stochastic and nonnegative, or no column is positive
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    if np.any(A < 0) or not np.allclose(A.sum(axis=1), 1.0, atol=1e-10):
        raise ParameterError("A must be nonnegative and row stochastic")
    if m_max < 0:
        raise ParameterError(f"m_max must be >= 0, got {m_max}")
    delta = min(_column_floor(A), 1.0)
    if not delta > 0:
        raise ParameterError("A has no column bounded away from zero")
    C = contraction_constant(n, delta, epsilon)
    bounds = diameter_linear_bounds(n, eps0=max(epsilon, 0.8 * gamma_upper(n)))
    c = bounds.contraction_factor(C)
    alpha = Cone(n, epsilon).diameter

    rng = np.random.default_rng(seed)
    rays = np.vstack([extreme_rays(n, epsilon), sample_cone_rays(n, epsilon, samples, rng, boundary=True)])
    report = DiameterDecayReport(epsilon, delta, C, c, bounds.eta(C))
    power = np.eye(n)
    for m in range(m_max + 1):
        images = rays @ power.T
        estimate = float(pairwise_hilbert(images).max())
        report.rows.append(DecayRow(m, estimate, c ** m * alpha, Cone(n, C ** m * epsilon).diameter))
        power = A @ power
    logger.info("diameter decay n=%d delta=%.4g: c=%.6g, %s", n, delta, c, "pass" if report.passed else "FAIL")
    return report


@dataclass
class ConeDiameterReport:
    """Sampled supremum of pairwise distances in K(gamma) against the closed form."""
    n: int
    gamma: float
    estimate: float
    formula: float
    pairs: int

    @property
    def relative_gap(self) -> float:
        return (self.formula - self.estimate) / self.formula if self.formula > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.estimate <= self.formula + VIOLATION_SLACK


def verify_cone_diameter(n: int, gamma: float, samples: int = 1000, seed: int = 0) -> ConeDiameterReport:
    """Compare the sampled diameter of K(gamma) (boundary rays plus structured rays) with its formula."""
    cone = Cone(n, gamma)
    rng = np.random.default_rng(seed)
    rays = np.vstack([extreme_rays(n, gamma), sample_cone_rays(n, gamma, samples, rng, boundary=True)])
    estimate = float(pairwise_hilbert(rays).max())
    return ConeDiameterReport(n, gamma, estimate, cone.diameter, len(rays) ** 2)


@dataclass
class TwoConeReport:
    """
    Flow of x1' = 0, x2' = x1 - x2 on the orthant and on the subcones K(gamma).

    Attributes:
        horizon: Time at which cone images are measured
        boundary_gamma: minimal_gamma of the boundary ray (0, 1) at every sampled time
        boundary_preserved: Whether (0, 1) stays on the boundary ray for all sampled times
        consensus_fixed: Whether (1, 1) is a fixed point
        cone_images: (gamma, max minimal_gamma of the image at horizon) per gamma
    """
    horizon: float
    boundary_gamma: np.ndarray
    boundary_preserved: bool
    consensus_fixed: bool
    cone_images: List[Tuple[float, float]]

    @property
    def contracts_subcones(self) -> bool:
        return all(image < gamma for gamma, image in self.cone_images)

    @property
    def passed(self) -> bool:
        return self.boundary_preserved and self.consensus_fixed and self.contracts_subcones


TWO_CONE_SYSTEM = np.array([[0.0, 0.0], [1.0, -1.0]])


def two_cone_flow(t: float) -> np.ndarray:
    """Transition matrix exp(t A) of the two-agent system, [[1, 0], [1 - e^-t, e^-t]]."""
    decay = math.exp(-t)
    return np.array([[1.0, 0.0], [1.0 - decay, decay]])


def two_cone_demo(gammas: Sequence[float] = (0.1, 0.2), horizon: float = 1.0, samples: int = 2000,
                  seed: int = 0) -> TwoConeReport:
    """
    The orthant is not contracted into its interior but every K(gamma) is.

    The boundary ray (0, 1) flows to (0, e^-t), staying on the boundary
    (minimal_gamma 1/sqrt(2)); rays of K(gamma) land in a strictly smaller
    cone at the horizon.
    """
    times = np.linspace(0.0, 5.0, 11)
    boundary = np.array([two_cone_flow(t) @ np.array([0.0, 1.0]) for t in times])
    preserved = bool(np.all(boundary[:, 0] == 0.0) and np.all(boundary[:, 1] > 0.0))
    fixed = bool(np.allclose(two_cone_flow(horizon) @ np.ones(2), 1.0, rtol=0, atol=1e-15))

    flow = expm(horizon * TWO_CONE_SYSTEM)
    rng = np.random.default_rng(seed)
    images = []
    for gamma in gammas:
        if not is_admissible_gamma(gamma, 2):
            raise ParameterError(f"gamma {gamma} is not admissible for n=2")
        rays = np.vstack([extreme_rays(2, gamma), sample_cone_rays(2, gamma, samples, rng, boundary=True),
                          sample_cone_rays(2, gamma, samples, rng, boundary=False)])
        images.append((float(gamma), float(minimal_gamma_batch(rays @ flow.T).max())))
    return TwoConeReport(horizon, minimal_gamma_batch(boundary), preserved, fixed, images)


@dataclass
class SandwichReport:
    """
    Checks of n A_n <= B_n <= 2n A_n and of the norm/metric comparison.

    Slacks are relative to B_n; negative values are violations.

    Attributes:
        steps: States checked
        sandwich_violations: States breaking n A_n <= B_n <= 2n A_n
        norm_violations: States breaking C tanh(d/2) <= |x - 1/sqrt(n)| <= e^d - 1
        worst_lower_slack: min (B_n - n A_n)/B_n
        worst_upper_slack: min (2n A_n - B_n)/B_n
        constant: Calibrated comparison constant used (None when not checked)
    """
    steps: int
    sandwich_violations: int
    norm_violations: int
    worst_lower_slack: float
    worst_upper_slack: float
    constant: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.sandwich_violations == 0 and self.norm_violations == 0


def _sandwich_counts(states: np.ndarray, rel_tol: float) -> Tuple[int, float, float]:
    n = states.shape[1]
    violations, worst_low, worst_high = 0, math.inf, math.inf
    for x in states:
        a_n, b_n = an_bn(x)
        # A_n loses digits to cancellation near consensus
        tol = rel_tol * b_n + 64 * np.finfo(float).eps * n * float(x @ x)
        low, high = b_n - n * a_n, 2 * n * a_n - b_n
        if low < -tol or high < -tol:
            violations += 1
        if b_n > 0:
            worst_low, worst_high = min(worst_low, low / b_n), min(worst_high, high / b_n)
    return violations, worst_low, worst_high


def verify_sandwich(n: int, draws: int = 10_000, seed: int = 0, rel_tol: float = 1e-12) -> SandwichReport:
    """n A_n <= B_n <= 2n A_n on random nonnegative vectors."""
    if n < 2 or draws < 1:
        raise ParameterError("need n >= 2 and draws >= 1")
    states = np.random.default_rng(seed).random((draws, n))
    violations, low, high = _sandwich_counts(states, rel_tol)
    return SandwichReport(draws, violations, 0, low, high)


def metric_norm_consistency(traj: Trajectory, constant: Optional[float] = None,
                            rel_tol: float = 1e-12) -> SandwichReport:
    """
    Check the A_n/B_n sandwich and the norm/metric bounds at every state.

    States are read with the trajectory's offset. The comparison constant is
    calibrated once on the widest cone the trajectory visits, which covers
    every state.

    Raises:
        ParameterError: If a shifted state is not strictly positive
    """
    states = traj.shifted_states
    if np.any(states <= 0):
        raise ParameterError("metric_norm_consistency needs strictly positive states")
    n = traj.n
    violations, low, high = _sandwich_counts(states, rel_tol)

    if constant is None:
        widest = float(np.max(traj.minimal_gamma))
        constant = comparison_constant(n, widest) if is_admissible_gamma(widest, n) else 0.0
    ones = np.ones(n)
    norm_violations = 0
    for x in states:
        bounds = norm_metric_bounds(x, ones, constant)
        if not (bounds.lower <= bounds.norm_gap + VIOLATION_SLACK and bounds.norm_gap <= bounds.upper + VIOLATION_SLACK):
            norm_violations += 1
    report = SandwichReport(len(states), violations, norm_violations, low, high, constant)
    logger.info("metric/norm consistency over %d states: %d sandwich, %d norm violations",
                report.steps, violations, norm_violations)
    return report
