"""
Property-based tests of the metric, the cone family and the graph/matrix
correspondence.
"""

import math
import unittest

import numpy as np
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hilbert_consensus import (
    WeightedDigraph,
    digraph_of_metzler,
    hilbert_distance,
    metzler_of_digraph,
    minimal_gamma,
    validate_metzler,
    verify_lemma_contraction,
)

DIMENSION = 4
MIN_ENTRY = 1e-3
MAX_ENTRY = 1e3
ABS_TOLERANCE = 1e-9

positive_states = arrays(np.float64, (DIMENSION,), elements=st.floats(min_value=MIN_ENTRY, max_value=MAX_ENTRY))


class TestMetricProperties(unittest.TestCase):
    """Hilbert distance on the positive orthant."""

    @seed(1)
    @given(x=positive_states, y=positive_states)
    def test_symmetric_and_nonnegative(self, x, y):
        d = hilbert_distance(x, y)
        self.assertGreaterEqual(d, 0.0)
        self.assertAlmostEqual(d, hilbert_distance(y, x), delta=ABS_TOLERANCE)

    @seed(2)
    @given(x=positive_states, y=positive_states, scale=st.floats(min_value=1e-2, max_value=1e2))
    def test_scale_invariant(self, x, y, scale):
        self.assertAlmostEqual(hilbert_distance(scale * x, y), hilbert_distance(x, y), delta=ABS_TOLERANCE)

    @seed(3)
    @given(x=positive_states, y=positive_states, z=positive_states)
    def test_triangle_inequality(self, x, y, z):
        self.assertLessEqual(hilbert_distance(x, z),
                             hilbert_distance(x, y) + hilbert_distance(y, z) + ABS_TOLERANCE)


class TestConeProperties(unittest.TestCase):
    """Minimal cone parameter of positive states."""

    @seed(4)
    @given(x=positive_states)
    def test_minimal_gamma_range(self, x):
        gamma = minimal_gamma(x)
        self.assertGreaterEqual(gamma, 0.0)
        self.assertLess(gamma, 1.0 / math.sqrt(DIMENSION))

    @seed(5)
    @given(x=positive_states, scale=st.floats(min_value=1e-2, max_value=1e2))
    def test_minimal_gamma_scale_invariant(self, x, scale):
        self.assertAlmostEqual(minimal_gamma(scale * x), minimal_gamma(x), delta=ABS_TOLERANCE)


class TestGraphProperties(unittest.TestCase):
    """Correspondence between weighted digraphs and Laplacian-form matrices."""

    @seed(6)
    @given(weights=arrays(np.float64, (DIMENSION, DIMENSION), elements=st.floats(min_value=0.0, max_value=10.0)))
    def test_metzler_round_trip(self, weights):
        weights = weights.copy()
        np.fill_diagonal(weights, 0.0)
        G = WeightedDigraph(weights)
        A = validate_metzler(metzler_of_digraph(G))
        self.assertEqual(digraph_of_metzler(A), G)


class TestContractionProperties(unittest.TestCase):
    """Inclusion of the box rays over random parameters and seeds."""

    @seed(7)
    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(min_value=2, max_value=6), delta=st.floats(min_value=0.05, max_value=1.0),
           fraction=st.floats(min_value=0.1, max_value=0.9), draw_seed=st.integers(min_value=0, max_value=2 ** 16))
    def test_no_violations(self, n, delta, fraction, draw_seed):
        report = verify_lemma_contraction(n, delta, fraction / math.sqrt(n), samples=200, seed=draw_seed)
        self.assertEqual(report.violations, 0)


if __name__ == "__main__":
    unittest.main()
