"""
Tests for the SVG figures.
"""

import os
import shutil
import tempfile
import unittest

import numpy as np

from hilbert_consensus import ParameterError, certify_consensus, read_signal_trace
from hilbert_consensus.plotting import plot_metric, plot_signal
from test_fixtures import SCENARIO_DIR, create_fig1_trajectory, create_synthetic_trajectory


class TestMetricPlot(unittest.TestCase):
    """Test the plot of ln d(x(t), 1)."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_fitted_line(self):
        """Test a decaying trajectory with its fitted rate."""
        traj = create_fig1_trajectory(t_end=2.0)
        path = plot_metric(traj, os.path.join(self.test_dir, "fig1.svg"), certify_consensus(traj))
        self.assertIn("<svg", path.read_text(encoding="utf-8"))

    def test_flat_trajectory(self):
        """Test that d = 0 at every sample is drawn as a flat line."""
        traj = create_synthetic_trajectory(np.linspace(0.0, 1.0, 20), np.full((20, 3), 2.0))
        path = plot_metric(traj, os.path.join(self.test_dir, "flat.svg"), certify_consensus(traj))
        self.assertTrue(path.exists())

    def test_same_input_same_bytes(self):
        """Test that repeated plots are byte-identical."""
        traj = create_synthetic_trajectory(np.linspace(0.0, 1.0, 20), np.full((20, 3), 2.0))
        a = plot_metric(traj, os.path.join(self.test_dir, "a.svg")).read_bytes()
        b = plot_metric(traj, os.path.join(self.test_dir, "b.svg")).read_bytes()
        self.assertEqual(a, b)

    def test_infinite_distance_raises(self):
        """Test that states outside the positive orthant at every sample are refused."""
        traj = create_synthetic_trajectory([0.0, 1.0, 2.0], [[-1.0, 1.0], [-0.5, 0.5], [-0.25, 0.25]])
        with self.assertRaises(ParameterError):
            plot_metric(traj, os.path.join(self.test_dir, "bad.svg"))


class TestSignalPlot(unittest.TestCase):
    """Test the edge-weight trace."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.signal = read_signal_trace(SCENARIO_DIR / "adversarial_single_link.signal.csv")

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_edge_trace(self):
        """Test the trace of the single link."""
        path = plot_signal(self.signal, (0, 1), os.path.join(self.test_dir, "link.svg"))
        self.assertTrue(path.exists())

    def test_invalid_edge(self):
        """Test rejection of self-loops and nodes outside the graph."""
        for edge in ((0, 0), (0, 2), (-1, 1)):
            with self.assertRaises(ParameterError):
                plot_signal(self.signal, edge, os.path.join(self.test_dir, "bad.svg"))


if __name__ == "__main__":
    unittest.main()
