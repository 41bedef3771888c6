"""
Hilbert projective metric on the positive orthant and the cone family K(gamma).

This module holds the geometric side of the toolkit: the metric itself, the
shrinking cones K(gamma) = {x : x_i/|x| >= 1/sqrt(n) - gamma} around the
consensus ray, their diameters, the contraction constant of row-stochastic
matrices with a heavy column, and the comparison bounds between the Euclidean
norm and the metric. All functions are pure; arrays passed in are never
modified.

Norms are Euclidean 2-norms throughout.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionMismatchError, ParameterError

logger = logging.getLogger(__name__)

# gamma values closer than this (relative) to 1/sqrt(n) are rejected
GAMMA_MARGIN = 1e-9
MEMBERSHIP_TOL = 1e-12
CALIBRATION_SAMPLES = 100_000
CALIBRATION_SAFETY = 0.9
# calibration cones are rounded up to this gamma resolution so results can be cached
CALIBRATION_RESOLUTION = 1e-3


def as_state_vector(x) -> np.ndarray:
    """
    Convert an array-like to a float state vector.

    Raises:
        DimensionMismatchError: If x is not one-dimensional or has fewer than 2 agents
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"state must be one-dimensional, got shape {arr.shape}")
    if arr.size < 2:
        raise DimensionMismatchError(f"state needs at least 2 agents, got {arr.size}")
    return arr


def _pair(x, y) -> Tuple[np.ndarray, np.ndarray]:
    x = as_state_vector(x)
    y = as_state_vector(y)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"dimension mismatch: {x.size} vs {y.size}")
    return x, y


def gamma_upper(n: int) -> float:
    """Open upper end 1/sqrt(n) of the gamma range."""
    return 1.0 / math.sqrt(n)


def max_admissible_gamma(n: int) -> float:
    """Largest gamma still accepted by the cone operations."""
    return (1.0 - GAMMA_MARGIN) / math.sqrt(n)


def is_admissible_gamma(gamma: float, n: int) -> bool:
    """True when K(gamma) is a proper subcone of the orthant interior."""
    return 0.0 <= gamma < max_admissible_gamma(n)


def hilbert_distance(x, y) -> float:
    """
    Hilbert projective distance ln(max_i(x_i/y_i) / min_i(x_i/y_i)).

    Vectors with identical zero patterns are compared on their common
    support. A negative entry, or a coordinate that is zero in one vector
    but not in the other, degenerates the ratio and gives +inf.

    Args:
        x: First state vector
        y: Second state vector

    Returns:
        Nonnegative distance, possibly math.inf

    Raises:
        DimensionMismatchError: If x and y have different lengths
    """
    x, y = _pair(x, y)
    if np.any(x < 0) or np.any(y < 0):
        return math.inf
    support = x > 0
    if not support.any() or not np.array_equal(support, y > 0):
        return math.inf
    ratios = x[support] / y[support]
    return float(np.log(ratios.max() / ratios.min()))


def distance_to_consensus(x) -> float:
    """Hilbert distance from x to the consensus ray span{1}."""
    x = as_state_vector(x)
    return hilbert_distance(x, np.ones_like(x))


def pairwise_hilbert(X: np.ndarray, Y: Optional[np.ndarray] = None, chunk: int = 512) -> np.ndarray:
    """
    Distance matrix between two sets of strictly positive rays.

    Args:
        X: Array of shape (p, n)
        Y: Array of shape (q, n); defaults to X
        chunk: Rows of X processed at once, bounds memory use

    Returns:
        Array of shape (p, q); rows with a nonpositive entry give +inf
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")

    bad_x = np.any(X <= 0, axis=1)
    bad_y = np.any(Y <= 0, axis=1)
    with np.errstate(divide="ignore"):
        log_x = np.log(np.where(X > 0, X, 1.0))
        log_y = np.log(np.where(Y > 0, Y, 1.0))

    out = np.empty((X.shape[0], Y.shape[0]))
    for start in range(0, X.shape[0], chunk):
        diff = log_x[start:start + chunk, None, :] - log_y[None, :, :]
        out[start:start + chunk] = diff.max(axis=2) - diff.min(axis=2)
    out[bad_x, :] = math.inf
    out[:, bad_y] = math.inf
    return out


def rowwise_hilbert(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Distances d(X[k], Y[k]) for matching rows of two positive arrays."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape != Y.shape:
        raise DimensionMismatchError(f"shape mismatch: {X.shape} vs {Y.shape}")
    bad = np.any(X <= 0, axis=1) | np.any(Y <= 0, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = np.log(np.where(X > 0, X, 1.0)) - np.log(np.where(Y > 0, Y, 1.0))
    out = diff.max(axis=1) - diff.min(axis=1)
    out[bad] = math.inf
    return out


@dataclass(frozen=True)
class Cone:
    """
    The cone K(gamma) = {x : x_i/|x| >= 1/sqrt(n) - gamma for all i}.

    Attributes:
        n: Number of agents
        gamma: Opening parameter, 0 <= gamma < 1/sqrt(n); K(0) is the consensus ray
    """
    n: int
    gamma: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"cone dimension must be an integer >= 2, got {self.n}")
        if not is_admissible_gamma(self.gamma, self.n):
            raise ParameterError(
                f"gamma must lie in [0, {max_admissible_gamma(self.n):.12g}) for n={self.n}, got {self.gamma}"
            )

    @property
    def threshold(self) -> float:
        """Lower bound 1/sqrt(n) - gamma on normalized entries."""
        return gamma_upper(self.n) - self.gamma

    @property
    def diameter(self) -> float:
        return cone_diameter(self)

    def contains(self, x) -> bool:
        return cone_membership(x, self)


def _gamma_deficit(x: np.ndarray, norm: float) -> float:
    return gamma_upper(x.size) - float(x.min()) / norm


def cone_membership(x, cone: Cone) -> bool:
    """
    Test whether x lies in K(gamma).

    The zero vector belongs to every cone.

    Raises:
        DimensionMismatchError: If len(x) differs from cone.n
    """
    x = as_state_vector(x)
    if x.size != cone.n:
        raise DimensionMismatchError(f"state has {x.size} agents, cone has {cone.n}")
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return True
    return _gamma_deficit(x, norm) <= cone.gamma + MEMBERSHIP_TOL


def minimal_gamma(x) -> float:
    """
    Smallest gamma with x in K(gamma): max(0, 1/sqrt(n) - min_i x_i/|x|).

    A result that is not admissible (see is_admissible_gamma) flags a point on
    the orthant boundary, which belongs to no proper cone of the family.

    Raises:
        ParameterError: If x has a negative entry or is the zero vector
    """
    x = as_state_vector(x)
    if np.any(x < 0):
        raise ParameterError("minimal_gamma needs a nonnegative state")
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        raise ParameterError("minimal_gamma is undefined for the zero vector")
    deficit = _gamma_deficit(x, norm)
    return deficit if deficit > MEMBERSHIP_TOL else 0.0


def minimal_gamma_batch(X: np.ndarray) -> np.ndarray:
    """Row-wise minimal_gamma; rows with a negative entry or zero norm give NaN."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    norms = np.linalg.norm(X, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        deficit = gamma_upper(X.shape[1]) - X.min(axis=1) / norms
    deficit = np.where(deficit > MEMBERSHIP_TOL, deficit, 0.0)
    invalid = np.any(X < 0, axis=1) | (norms == 0.0)
    return np.where(invalid, np.nan, deficit)


def _alpha(n: int, gamma) -> np.ndarray:
    s = math.sqrt(n) * np.asarray(gamma, dtype=float)
    return np.log1p(n * (1.0 / (1.0 - s) ** 2 - 1.0))


def _alpha_prime(n: int, gamma) -> np.ndarray:
    root_n = math.sqrt(n)
    u = 1.0 / (1.0 - root_n * np.asarray(gamma, dtype=float))
    return 2.0 * n * root_n * u ** 3 / (1.0 - n + n * u ** 2)


def cone_diameter(cone: Cone) -> float:
    """
    Hilbert diameter of K(gamma): ln(1 - n + n/(1 - sqrt(n) gamma)^2).

    Zero at gamma=0, strictly increasing, divergent as gamma -> 1/sqrt(n).
    """
    return float(_alpha(cone.n, cone.gamma))


def contraction_constant(n: int, delta: float, epsilon: float) -> float:
    """
    Cone-inclusion constant C = (1 - delta)/(1 - sqrt(n) epsilon delta).

    A nonnegative row-stochastic matrix whose column k is bounded below by
    delta maps every x with min(x) >= (1 - sqrt(n) epsilon) max(x) into
    K(C epsilon). Such x are the rays 1/sqrt(n) 1 - e with e in
    [0, epsilon]^n, a proper subset of K(epsilon); on the whole of K(epsilon)
    the image can leave K(C epsilon), and even K(epsilon) itself.

    Raises:
        ParameterError: If n < 2, delta not in (0, 1], or epsilon not in (0, 1/sqrt(n))
    """
    if int(n) != n or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n}")
    if not 0.0 < delta <= 1.0:
        raise ParameterError(f"delta must lie in (0, 1], got {delta}")
    if not 0.0 < epsilon < gamma_upper(n):
        raise ParameterError(f"epsilon must lie in (0, {gamma_upper(n):.12g}), got {epsilon}")
    return (1.0 - delta) / (1.0 - math.sqrt(n) * epsilon * delta)


@dataclass(frozen=True)
class DiameterBounds:
    """
    Grid-certified constants for the cone diameter alpha on [0, eps0].

    Attributes:
        n: Number of agents
        eps0: Right end of the certified range
        k1: Lower linear bound, k1*gamma <= alpha(gamma) on the grid
        k2: Upper linear bound, alpha(gamma) <= k2*gamma on [0, eps0]
        min_slope: Minimum of alpha' on [0, eps0]
    """
    n: int
    eps0: float
    k1: float
    k2: float
    min_slope: float

    def contraction_factor(self, C: float) -> float:
        """
        Factor k < 1 with alpha(C*gamma) <= k*alpha(gamma) for gamma in [0, eps0].

        Uses alpha(r) - alpha(Cr) >= (1 - C) min(alpha') r together with
        alpha(Cr) <= k2 C r.
        """
        if not 0.0 <= C < 1.0:
            raise ParameterError(f"C must lie in [0, 1), got {C}")
        if C == 0.0:
            return 0.0
        slope = (1.0 - C) * self.min_slope
        return 1.0 / (1.0 + slope / (self.k2 * C))

    def eta(self, C: float) -> float:
        """The eta of the decay rate c = 1/(1 + eta C) implied by contraction_factor."""
        if C == 0.0:
            return math.inf
        return (1.0 - C) * self.min_slope / (self.k2 * C * C)


def diameter_linear_bounds(n: int, eps0: Optional[float] = None, points: int = 2001) -> DiameterBounds:
    """
    Certify linear bounds k1*gamma <= alpha(gamma) <= k2*gamma on [0, eps0].

    alpha is concave then convex, so alpha(gamma)/gamma decreases then
    increases: its supremum sits at an endpoint (alpha'(0) or alpha(eps0)/eps0)
    and is exact, while the infimum is a grid value. alpha' attains its
    minimum at the inflection point u^2 = 3(n-1)/n, u = 1/(1 - sqrt(n) gamma).

    Args:
        n: Number of agents
        eps0: Right end of the range; defaults to 0.8/sqrt(n)
        points: Grid size
    """
    if eps0 is None:
        eps0 = 0.8 * gamma_upper(n)
    if not 0.0 < eps0 < max_admissible_gamma(n):
        raise ParameterError(f"eps0 must lie in (0, {max_admissible_gamma(n):.12g}), got {eps0}")

    grid = np.linspace(0.0, eps0, points)[1:]
    ratios = _alpha(n, grid) / grid
    slope_at_zero = 2.0 * n * math.sqrt(n)
    k1 = float(min(ratios.min(), slope_at_zero))
    k2 = float(max(ratios.max(), slope_at_zero))

    u_inflection = math.sqrt(3.0 * (n - 1) / n)
    gamma_inflection = (1.0 - 1.0 / u_inflection) / math.sqrt(n)
    candidates = [float(_alpha_prime(n, 0.0)), float(_alpha_prime(n, eps0))]
    if gamma_inflection <= eps0:
        candidates.append(float(_alpha_prime(n, gamma_inflection)))

    return DiameterBounds(n=n, eps0=eps0, k1=k1, k2=k2, min_slope=min(candidates))


def sample_cone_rays(n: int, gamma: float, size: int, rng: np.random.Generator, boundary: bool = True) -> np.ndarray:
    """
    Draw unit rays of K(gamma).

    Each ray starts at 1/sqrt(n) and moves along a random direction orthogonal
    to 1 until it crosses the boundary of K(gamma) (closed form); interior
    rays stop at a uniform fraction of that distance.

    Returns:
        Array of shape (size, n) with unit-norm rows
    """
    if not is_admissible_gamma(gamma, n):
        raise ParameterError(f"gamma {gamma} is not admissible for n={n}")
    directions = rng.standard_normal((size, n))
    directions -= directions.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(directions, axis=1)
    degenerate = norms < 1e-12
    if np.any(degenerate):
        fallback = np.zeros(n)
        fallback[0], fallback[1] = 1.0, -1.0
        directions[degenerate] = fallback
        norms[degenerate] = math.sqrt(2.0)
    directions /= norms[:, None]

    a = gamma_upper(n)
    theta = a - gamma
    b = directions.min(axis=1)
    reach = (a * a - theta * theta) / (-a * b + theta * np.sqrt(a * a + b * b - theta * theta))
    if not boundary:
        reach = reach * rng.random(size)

    rays = a + reach[:, None] * directions
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def extreme_rays(n: int, gamma: float, exhaustive_up_to: int = 4) -> np.ndarray:
    """
    Structured boundary rays of K(gamma).

    For a subset S of agents the ray has x_i = 1/sqrt(n) - gamma on S and a
    common larger value elsewhere (unit norm). All nonempty proper subsets are
    enumerated for n <= exhaustive_up_to; otherwise subsets of size 1 and n-1.
    The pair of (n-1)-subset rays missing different agents attains the cone
    diameter.
    """
    if not is_admissible_gamma(gamma, n):
        raise ParameterError(f"gamma {gamma} is not admissible for n={n}")
    theta = gamma_upper(n) - gamma
    sizes = range(1, n) if n <= exhaustive_up_to else sorted({1, n - 1})
    rays = []
    for size in sizes:
        rest = math.sqrt((1.0 - size * theta * theta) / (n - size))
        for subset in itertools.combinations(range(n), size):
            ray = np.full(n, rest)
            ray[list(subset)] = theta
            rays.append(ray)
    return np.array(rays)


def box_floor(n: int, epsilon: float) -> float:
    """Smallest min/max ratio of the box rays 1/sqrt(n) - e, e in [0, epsilon]^n."""
    return 1.0 - math.sqrt(n) * epsilon


def box_vertex_rays(n: int, epsilon: float, exhaustive_up_to: int = 10) -> np.ndarray:
    """
    Vertices 1/sqrt(n) 1 - epsilon 1_S of the box, as unit rays.

    All nonempty proper subsets S for n <= exhaustive_up_to; otherwise the
    subsets of size 1 and n-1.
    """
    if not 0.0 < epsilon < gamma_upper(n):
        raise ParameterError(f"epsilon must lie in (0, {gamma_upper(n):.12g}), got {epsilon}")
    a = gamma_upper(n)
    sizes = range(1, n) if n <= exhaustive_up_to else sorted({1, n - 1})
    rays = []
    for size in sizes:
        for subset in itertools.combinations(range(n), size):
            ray = np.full(n, a)
            ray[list(subset)] -= epsilon
            rays.append(ray)
    rays = np.array(rays)
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def sample_box_rays(n: int, epsilon: float, size: int, rng: np.random.Generator, vertices: bool = False) -> np.ndarray:
    """
    Draw unit rays 1/sqrt(n) 1 - e with e uniform in [0, epsilon]^n.

    Up to scaling these are exactly the positive x with
    min(x) >= box_floor(n, epsilon) * max(x), a subset of K(epsilon). With
    vertices=True each e_i is 0 or epsilon with equal odds.
    """
    if not 0.0 < epsilon < gamma_upper(n):
        raise ParameterError(f"epsilon must lie in (0, {gamma_upper(n):.12g}), got {epsilon}")
    if vertices:
        e = epsilon * rng.integers(0, 2, size=(size, n))
    else:
        e = epsilon * rng.random((size, n))
    rays = gamma_upper(n) - e
    return rays / np.linalg.norm(rays, axis=1, keepdims=True)


def proven_comparison_constant(n: int, gamma: float) -> float:
    """
    Constant C with C*tanh(d/2) <= |x - w| for unit x, w in K(gamma).

    Follows from |x - w| >= min_i w_i (M - m)/sqrt(2) and
    tanh(d/2) = (M - m)/(M + m) with m <= 1 <= M for unit vectors.
    """
    return (gamma_upper(n) - gamma) / math.sqrt(2.0)


@lru_cache(maxsize=256)
def _calibrated_constant(n: int, gamma: float, samples: int, seed: int) -> float:
    if gamma == 0.0:
        return proven_comparison_constant(n, gamma)
    rng = np.random.default_rng(seed)
    half = samples // 2
    x = np.vstack([
        sample_cone_rays(n, gamma, half, rng, boundary=True),
        sample_cone_rays(n, gamma, samples - half, rng, boundary=False),
    ])
    w = sample_cone_rays(n, gamma, samples, rng, boundary=False)

    # two-coordinate perturbations of the consensus ray
    center = np.full(n, gamma_upper(n))
    steps = np.geomspace(1e-6, gamma_upper(n), 40)
    structured = []
    for i, j in itertools.permutations(range(n), 2):
        for step in steps:
            ray = center.copy()
            ray[i] += step
            ray[j] -= step
            if ray.min() > 0:
                structured.append(ray / np.linalg.norm(ray))
    structured = np.array(structured)
    structured = structured[minimal_gamma_batch(structured) <= gamma]
    x = np.vstack([x, structured])
    w = np.vstack([w, np.tile(center, (len(structured), 1))])

    distances = rowwise_hilbert(x, w)
    usable = distances > 1e-8
    gaps = np.linalg.norm(x - w, axis=1)
    ratios = gaps[usable] / np.tanh(distances[usable] / 2.0)
    constant = CALIBRATION_SAFETY * float(ratios.min())
    logger.debug("calibrated comparison constant n=%d gamma=%.4g: %.6g", n, gamma, constant)
    return constant


def comparison_constant(n: int, gamma: float, samples: int = CALIBRATION_SAMPLES, seed: int = 0) -> float:
    """
    Empirical comparison constant for norm_metric_bounds on K(gamma).

    The infimum of |x - w|/tanh(d(x, w)/2) over a seeded sample of pairs in
    K(gamma) (random rays plus two-coordinate perturbations of the consensus
    ray), times CALIBRATION_SAFETY. gamma is rounded up to
    CALIBRATION_RESOLUTION so calibrations are shared and cover the query.
    """
    rounded = math.ceil(gamma / CALIBRATION_RESOLUTION - 1e-9) * CALIBRATION_RESOLUTION
    rounded = min(max(rounded, 0.0), max_admissible_gamma(n) * (1.0 - 1e-6))
    return _calibrated_constant(int(n), float(rounded), int(samples), int(seed))


@dataclass(frozen=True)
class NormMetricBounds:
    """
    Comparison of |x - w| with the Hilbert distance for normalized inputs.

    Attributes:
        lower: constant * tanh(distance / 2)
        upper: exp(distance) - 1
        distance: Hilbert distance d(x, w)
        norm_gap: |x/|x| - w/|w||
        constant: Comparison constant used for the lower bound
        scale_x: Norm of x before normalization
        scale_w: Norm of w before normalization
    """
    lower: float
    upper: float
    distance: float
    norm_gap: float
    constant: float
    scale_x: float
    scale_w: float

    @property
    def holds(self) -> bool:
        return self.lower <= self.norm_gap <= self.upper


def norm_metric_bounds(x, w, constant: Optional[float] = None) -> NormMetricBounds:
    """
    Sandwich C*tanh(d/2) <= |x - w| <= exp(d) - 1 for unit vectors.

    Inputs are normalized internally and their norms recorded.

    Args:
        x: Strictly positive state
        w: Strictly positive state
        constant: Comparison constant; defaults to comparison_constant on the
            smallest cone K(gamma) holding both rays (0 if none exists)
    """
    x, w = _pair(x, w)
    scale_x = float(np.linalg.norm(x))
    scale_w = float(np.linalg.norm(w))
    if scale_x == 0.0 or scale_w == 0.0:
        raise ParameterError("norm_metric_bounds needs nonzero states")
    x_unit = x / scale_x
    w_unit = w / scale_w
    distance = hilbert_distance(x_unit, w_unit)

    if constant is None:
        if np.any(x_unit < 0) or np.any(w_unit < 0):
            constant = 0.0
        else:
            gamma = max(minimal_gamma(x_unit), minimal_gamma(w_unit))
            constant = comparison_constant(x.size, gamma) if is_admissible_gamma(gamma, x.size) else 0.0

    upper = math.inf if math.isinf(distance) else math.expm1(distance)
    lower = constant * (1.0 if math.isinf(distance) else math.tanh(distance / 2.0))
    return NormMetricBounds(
        lower=lower,
        upper=upper,
        distance=distance,
        norm_gap=float(np.linalg.norm(x_unit - w_unit)),
        constant=constant,
        scale_x=scale_x,
        scale_w=scale_w,
    )


def an_bn(x) -> Tuple[float, float]:
    """
    A_n(x) = |x - (|x|/sqrt(n)) 1|^2 and B_n(x) = sum_{i,j} (x_i - x_j)^2.

    For x >= 0 these satisfy n*A_n <= B_n <= 2n*A_n. B_n is summed from the
    pairwise differences to avoid cancellation near consensus.

    Raises:
        ParameterError: If x has a negative entry
    """
    x = as_state_vector(x)
    if np.any(x < 0):
        raise ParameterError("an_bn is stated for nonnegative states")
    n = x.size
    a_n = float(np.sum((x - np.linalg.norm(x) / math.sqrt(n)) ** 2))
    b_n = float(np.sum(np.subtract.outer(x, x) ** 2))
    return a_n, b_n
