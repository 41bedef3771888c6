"""
Weighted digraphs attached to Metzler matrices.

Edge convention: weights[i][j] = a_ij is the influence of agent j on agent i
(agent i listens to j), so information flows j -> i. A graph is quasi-strongly
connected (QSC) when some center k reaches every other agent along that flow.
See doc/EDGE_CONVENTION.md.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import CoverageError, DimensionMismatchError, MetzlerViolationError, ParameterError

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12


def validate_metzler(A, t: float = 0.0, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """
    Check that A is Metzler with zero row sums.

    Row sums are compared against tol scaled by max(1, max|A_ij|).

    Args:
        A: Square matrix
        t: Time stamp reported in errors
        tol: Row-sum tolerance

    Returns:
        A as a float array

    Raises:
        MetzlerViolationError: On a negative off-diagonal entry or a nonzero row sum
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"Metzler matrix must be square, got shape {A.shape}")
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise MetzlerViolationError(t, int(i), int(j), float(off[i, j]))
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    sums = A.sum(axis=1)
    worst = int(np.argmax(np.abs(sums)))
    if abs(sums[worst]) > tol * scale:
        raise MetzlerViolationError(t, worst, worst, float(sums[worst]), reason="nonzero row sum")
    return A


@dataclass(eq=False)
class WeightedDigraph:
    """
    Nonnegative weight matrix with zero diagonal.

    Attributes:
        weights: n x n array; weights[i][j] > 0 is a link carrying j's state to i
    """
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
            raise DimensionMismatchError(f"weights must be a square matrix, got shape {w.shape}")
        if np.any(np.diag(w) != 0.0):
            raise ParameterError("digraph weights must have a zero diagonal (no self loops)")
        if np.any(w < 0):
            raise ParameterError("digraph weights must be nonnegative")
        w.setflags(write=False)
        self.weights = w

    @classmethod
    def empty(cls, n: int) -> "WeightedDigraph":
        return cls(np.zeros((n, n)))

    @classmethod
    def from_edges(cls, n: int, edges: Mapping[Tuple[int, int], float]) -> "WeightedDigraph":
        """Build a graph from {(i, j): a_ij} entries."""
        w = np.zeros((n, n))
        for (i, j), value in edges.items():
            w[i, j] = value
        return cls(w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def edges(self, tol: float = 0.0) -> Dict[Tuple[int, int], float]:
        """Links with weight above tol as {(i, j): a_ij}."""
        rows, cols = np.nonzero(self.weights > tol)
        return {(int(i), int(j)): float(self.weights[i, j]) for i, j in zip(rows, cols)}

    def scaled(self, factor: float) -> "WeightedDigraph":
        return WeightedDigraph(self.weights * factor)

    def __add__(self, other: "WeightedDigraph") -> "WeightedDigraph":
        _check_same_size(self, other)
        return WeightedDigraph(self.weights + other.weights)

    def __ge__(self, other: "WeightedDigraph") -> bool:
        return graph_geq(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightedDigraph):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.weights, other.weights))

    def __repr__(self) -> str:
        return f"WeightedDigraph(n={self.n}, edges={len(self.edges())})"


def _check_same_size(G1: WeightedDigraph, G2: WeightedDigraph):
    if G1.n != G2.n:
        raise DimensionMismatchError(f"graphs have {G1.n} and {G2.n} nodes")


def digraph_of_metzler(A) -> WeightedDigraph:
    """Graph G^A: off-diagonal entries of A, self loops dropped."""
    A = validate_metzler(A)
    weights = A.copy()
    np.fill_diagonal(weights, 0.0)
    return WeightedDigraph(weights)


def metzler_of_digraph(G: WeightedDigraph) -> np.ndarray:
    """Metzler matrix with zero row sums whose graph is G: A = W - diag(W 1)."""
    A = np.array(G.weights)
    np.fill_diagonal(A, -A.sum(axis=1))
    return A


def graph_geq(G1: WeightedDigraph, G2: WeightedDigraph) -> bool:
    """Partial order G1 >= G2: elementwise off-diagonal dominance."""
    _check_same_size(G1, G2)
    return bool(np.all(G1.weights >= G2.weights))


def accumulate(samples: Sequence[Tuple[float, WeightedDigraph]], t1: float, t2: float,
               rule: str = "left") -> WeightedDigraph:
    """
    Accumulated graph: elementwise integral of G(t) over [t1, t2].

    With the default left rule each sample holds until the next timestamp,
    which is exact for piecewise-constant signals sampled at their
    breakpoints. Repeated timestamps mark a switch; the later sample wins.
    The trapezoid rule interpolates linearly between samples.

    Args:
        samples: (t, G) pairs with nondecreasing t, covering [t1, t2]
        t1: Interval start
        t2: Interval end, t2 > t1
        rule: "left" or "trapezoid"

    Raises:
        CoverageError: If the samples do not span [t1, t2]
    """
    if not t2 > t1:
        raise ParameterError(f"accumulation interval needs t1 < t2, got [{t1}, {t2}]")
    if rule not in ("left", "trapezoid"):
        raise ParameterError(f"unknown quadrature rule {rule!r}")
    if not samples:
        raise CoverageError("no samples to accumulate")
    times = np.array([t for t, _ in samples], dtype=float)
    if np.any(np.diff(times) < 0):
        raise ParameterError("sample timestamps must be nondecreasing")
    if times[0] > t1 or times[-1] < t2:
        raise CoverageError(f"samples cover [{times[0]}, {times[-1]}], need [{t1}, {t2}]")
    stack = np.stack([G.weights for _, G in samples])
    return WeightedDigraph(integrate_stack(times, stack, t1, t2, rule))


def integrate_stack(times: np.ndarray, stack: np.ndarray, t1: float, t2: float, rule: str = "left") -> np.ndarray:
    """Integral over [t1, t2] of a sampled matrix signal given as (K,) times and (K, n, n) values."""
    if rule == "left":
        return _left_primitive(times, stack, t2) - _left_primitive(times, stack, t1)
    return _trapezoid(times, stack, t1, t2)


def _left_primitive(times: np.ndarray, stack: np.ndarray, t: float) -> np.ndarray:
    # index of the sample holding at t (the last one with time <= t)
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = max(k, 0)
    durations = np.diff(times[:k + 1])
    total = np.tensordot(durations, stack[:k], axes=1) if k > 0 else np.zeros(stack.shape[1:])
    return total + (t - times[k]) * stack[k]


def _trapezoid(times: np.ndarray, stack: np.ndarray, t1: float, t2: float) -> np.ndarray:
    def value_at(t):
        k = int(np.searchsorted(times, t, side="right")) - 1
        k = min(max(k, 0), len(times) - 2) if len(times) > 1 else 0
        if len(times) == 1 or times[k + 1] == times[k]:
            return stack[k]
        frac = (t - times[k]) / (times[k + 1] - times[k])
        return (1.0 - frac) * stack[k] + frac * stack[k + 1]

    inside = (times > t1) & (times < t2)
    knots = np.concatenate([[t1], times[inside], [t2]])
    values = np.stack([value_at(t1)] + list(stack[inside]) + [value_at(t2)])
    widths = np.diff(knots)
    return np.tensordot(widths, 0.5 * (values[:-1] + values[1:]), axes=1)


class ConnectivityKind(Enum):
    """Connectivity notions certified by this module."""
    QSC_SPANNING_TREE = "qsc_spanning_tree"
    SINGLE_HOP = "single_hop"
    DELTA_CONNECTED = "delta_connected"


@dataclass(frozen=True)
class ConnectivityCertificate:
    """
    Witness that a graph is connected in one of the ConnectivityKind senses.

    Attributes:
        kind: Which notion is certified
        center: Index of the center node k
        margin: Smallest positive weight the certificate relies on
        parent: Spanning-tree kind only; maps each non-center node to the node
            it receives information from
    """
    kind: ConnectivityKind
    center: int
    margin: float
    parent: Optional[Dict[int, int]] = field(default=None)


def is_delta_connected(G: WeightedDigraph, delta: float) -> Optional[ConnectivityCertificate]:
    """
    Find the first column k with weights[i][k] >= delta for all i != k.

    Returns:
        A DELTA_CONNECTED certificate with the achieved margin, or None
    """
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    return _column_certificate(G, lambda column: column.min() >= delta, ConnectivityKind.DELTA_CONNECTED)


def is_single_hop(G: WeightedDigraph, tol: float = 0.0) -> Optional[ConnectivityCertificate]:
    """Find the first column with every off-diagonal entry above tol."""
    return _column_certificate(G, lambda column: column.min() > tol, ConnectivityKind.SINGLE_HOP)


def _column_certificate(G: WeightedDigraph, accept, kind: ConnectivityKind) -> Optional[ConnectivityCertificate]:
    if G.n == 1:
        return ConnectivityCertificate(kind, 0, float("inf"))
    for k in range(G.n):
        column = np.delete(G.weights[:, k], k)
        if accept(column):
            return ConnectivityCertificate(kind, k, float(column.min()))
    return None


def information_flow(G: WeightedDigraph, tol: float = 0.0) -> nx.DiGraph:
    """networkx view with an arc j -> i for every link a_ij > tol."""
    flow = nx.DiGraph()
    flow.add_nodes_from(range(G.n))
    for (i, j), weight in G.edges(tol).items():
        flow.add_edge(j, i, weight=weight)
    return flow


def is_qsc(G: WeightedDigraph, tol: float = 0.0) -> Optional[ConnectivityCertificate]:
    """
    Spanning-tree QSC test: some center reaches every node along information flow.

    Centers are tried in increasing index order; the witness is the
    breadth-first tree of the first center that reaches everyone.

    Args:
        G: Graph to test
        tol: Weights <= tol are treated as absent

    Returns:
        QSC_SPANNING_TREE certificate with parent map and margin, or None
    """
    if tol < 0:
        raise ParameterError(f"tol must be nonnegative, got {tol}")
    flow = information_flow(G, tol)
    for center in range(G.n):
        parent = dict(nx.bfs_predecessors(flow, center))
        if len(parent) == G.n - 1:
            used = [G.weights[child, source] for child, source in parent.items()]
            margin = float(min(used)) if used else float("inf")
            logger.debug("QSC center %d, margin %.6g", center, margin)
            return ConnectivityCertificate(ConnectivityKind.QSC_SPANNING_TREE, center, margin, parent)
    return None


def power_delta_bound(S: WeightedDigraph, lambda_floor: float) -> Tuple[int, float]:
    """
    Smallest m with a strictly positive column in (lambda_floor*I + S)^m.

    This is the single-hop certificate for products of m consecutive
    transition factors whose accumulated graph dominates S.

    Returns:
        (m, delta) where delta is the smallest off-diagonal entry of that column

    Raises:
        ParameterError: If S is not QSC or lambda_floor <= 0
    """
    if not lambda_floor > 0:
        raise ParameterError(f"lambda_floor must be positive, got {lambda_floor}")
    if is_qsc(S) is None:
        raise ParameterError("power_delta_bound needs a QSC graph")
    n = S.n
    if n == 1:
        return 1, float("inf")
    factor = lambda_floor * np.eye(n) + S.weights
    power = np.eye(n)
    for m in range(1, n):
        power = power @ factor
        positive = np.all(power > 0, axis=0)
        if positive.any():
            k = int(np.argmax(positive))
            return m, float(np.delete(power[:, k], k).min())
    raise RuntimeError("QSC graph without a positive column in its (n-1)-th power")


def union(graphs: Iterable[WeightedDigraph]) -> WeightedDigraph:
    """Elementwise sum of a family of graphs."""
    graphs = list(graphs)
    if not graphs:
        raise ParameterError("union of an empty family")
    total = graphs[0]
    for G in graphs[1:]:
        total = total + G
    return total
