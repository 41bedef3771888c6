"""
Tests for scenario parsing and the artifact readers and writers.

Tests line-anchored scenario errors, the trajectory CSV, the signal trace
and graph snapshots.
"""

import os
import shutil
import tempfile
import unittest

import numpy as np

from hilbert_consensus import (
    DimensionMismatchError,
    ParameterError,
    ScenarioError,
    SwitchingSignal,
    WeightedDigraph,
    parse_scenario_dict,
    parse_scenario_file,
    read_graph_snapshot,
    read_signal_trace,
    read_trajectory_csv,
    write_graph_snapshot,
    write_signal_trace,
    write_trajectory_csv,
)
from hilbert_consensus.dynamics import ModelKind, Scheme
from hilbert_consensus.parser import key_lines, parse_scenario_text
from test_fixtures import FIG1_SCENARIO, SCENARIO_DIR, create_fig1_trajectory, write_scenario


class TestKeyLines(unittest.TestCase):
    """Test the key path to line mapping."""

    def test_tables_and_keys(self):
        """Test top-level keys, table headers and table members."""
        lines = key_lines(FIG1_SCENARIO)
        self.assertEqual(lines["name"], 1)
        self.assertEqual(lines["model"], 3)
        self.assertEqual(lines["model.kind"], 4)
        self.assertEqual(lines["integrator.h"], 13)

    def test_arrays_of_tables(self):
        """Test that repeated tables are indexed."""
        text = "[[topology.pattern]]\nduration = 1.0\n\n[[topology.pattern]]\nduration = 2.0\n"
        lines = key_lines(text)
        self.assertEqual(lines["topology.pattern.0.duration"], 2)
        self.assertEqual(lines["topology.pattern.1.duration"], 5)


class TestScenarioParsing(unittest.TestCase):
    """Test scenario validation."""

    def test_valid_scenario(self):
        """Test the fields of a valid scenario."""
        scenario = parse_scenario_text(FIG1_SCENARIO)
        self.assertEqual(scenario.name, "two_agents")
        self.assertEqual(scenario.model.kind, ModelKind.LTV)
        self.assertEqual(scenario.model.n, 2)
        self.assertEqual(scenario.integrator.scheme, Scheme.EULER)
        self.assertEqual(scenario.integrator.h, 0.01)
        self.assertEqual(scenario.t_end, 10.0)
        self.assertEqual(scenario.checkpoint_spacing, 1.0)
        self.assertEqual(scenario.certification.bound_edges, [[1, 0, 0.5]])
        self.assertTrue(scenario.certification.transition_check)
        self.assertEqual(scenario.outputs.csv, "two_agents.csv")

    def test_line_anchored_value_error(self):
        """Test that a bad value reports the line of its key."""
        text = FIG1_SCENARIO.replace("h = 0.01", "h = -1.0")
        with self.assertRaises(ScenarioError) as ctx:
            parse_scenario_text(text, source="bad.toml")
        self.assertEqual(ctx.exception.line, 13)
        self.assertIn("integrator.h", str(ctx.exception))
        self.assertTrue(str(ctx.exception).startswith("bad.toml:13:"))

    def test_unknown_key(self):
        """Test that unknown keys are rejected with their line."""
        text = FIG1_SCENARIO.replace("h = 0.01", "h = 0.01\nstep = 0.5")
        with self.assertRaises(ScenarioError) as ctx:
            parse_scenario_text(text)
        self.assertEqual(ctx.exception.line, 14)
        self.assertIn("integrator.step", str(ctx.exception))

    def test_unknown_section(self):
        """Test that unknown top-level tables are rejected."""
        with self.assertRaises(ScenarioError):
            parse_scenario_text(FIG1_SCENARIO + "\n[plots]\nwidth = 3\n")

    def test_toml_syntax_error(self):
        """Test that malformed TOML becomes a scenario error."""
        with self.assertRaises(ScenarioError) as ctx:
            parse_scenario_text('name = "x"\n[model\nkind = "ltv"\n')
        self.assertIn("invalid TOML", str(ctx.exception))

    def test_missing_horizon(self):
        """Test that t_end is required."""
        text = FIG1_SCENARIO.replace("t_end = 10.0\n", "")
        with self.assertRaises(ScenarioError) as ctx:
            parse_scenario_text(text)
        self.assertIn("horizon.t_end", str(ctx.exception))

    def test_seed_required_for_random_initial_state(self):
        """Test that a random initial state needs a seed."""
        text = FIG1_SCENARIO.replace("x0 = [1.0, 2.0]", "low = 0.0\nhigh = 1.0")
        with self.assertRaises(ScenarioError):
            parse_scenario_text(text)
        scenario = parse_scenario_text("seed = 3\n" + text)
        self.assertEqual(scenario.seed, 3)

    def test_transition_check_needs_euler(self):
        """Test that the transition contract is refused for rk4."""
        text = FIG1_SCENARIO.replace('scheme = "euler"', 'scheme = "rk4"')
        with self.assertRaises(ScenarioError) as ctx:
            parse_scenario_text(text)
        self.assertIn("transition_check", str(ctx.exception))

    def test_bad_edge_indices(self):
        """Test that bound edges must use distinct 0-based indices."""
        text = FIG1_SCENARIO.replace("[[1, 0, 0.5]]", "[[1, 2, 0.5]]")
        with self.assertRaises(ScenarioError):
            parse_scenario_text(text)

    def test_overrides(self):
        """Test dotted-path overrides and rejection of unknown paths."""
        scenario = parse_scenario_text(FIG1_SCENARIO, overrides={"integrator.h": 0.02})
        self.assertEqual(scenario.integrator.h, 0.02)
        with self.assertRaises(ScenarioError):
            parse_scenario_text(FIG1_SCENARIO, overrides={"integrator.width": 1})

    def test_hash_ignores_outputs(self):
        """Test that the scenario hash depends on the resolved scenario only."""
        base = parse_scenario_text(FIG1_SCENARIO)
        renamed = parse_scenario_text(FIG1_SCENARIO + '\n[outputs]\ncsv = "other.csv"\n')
        changed = parse_scenario_text(FIG1_SCENARIO, overrides={"integrator.h": 0.02})
        self.assertEqual(base.hash, renamed.hash)
        self.assertNotEqual(base.hash, changed.hash)
        self.assertEqual(len(base.hash), 16)

    def test_parse_dict(self):
        """Test validation of an in-memory mapping."""
        scenario = parse_scenario_dict({
            "name": "pair",
            "model": {"kind": "kuramoto", "n": 2, "edges": [[0, 1, 1.0]]},
            "initial": {"x0": [0.0, 1.0]},
            "horizon": {"t_end": 2.0},
        })
        self.assertEqual(scenario.model.kind, ModelKind.KURAMOTO)
        self.assertIsNone(scenario.topology)

    def test_bundled_scenarios_parse(self):
        """Test that every shipped scenario validates."""
        paths = sorted(SCENARIO_DIR.glob("*.toml"))
        self.assertGreaterEqual(len(paths), 7)
        for path in paths:
            scenario = parse_scenario_file(path)
            self.assertEqual(scenario.source, str(path))


class TestArtifacts(unittest.TestCase):
    """Test the CSV, trace and snapshot formats."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_trajectory_round_trip(self):
        """Test that a written trajectory reads back exactly."""
        traj = create_fig1_trajectory(h=0.1, t_end=2.0)
        path = write_trajectory_csv(traj, os.path.join(self.test_dir, "traj.csv"), scenario_hash="abc123")
        with open(path, encoding="utf-8") as handle:
            self.assertEqual(handle.readline().strip(), "# scenario=abc123")
        loaded, metadata = read_trajectory_csv(path)
        np.testing.assert_array_equal(loaded.times, traj.times)
        np.testing.assert_array_equal(loaded.states, traj.states)
        self.assertEqual(metadata["scenario"], "abc123")
        self.assertEqual(loaded.scheme, "euler")

    def test_trajectory_header(self):
        """Test the column layout of the trajectory CSV."""
        traj = create_fig1_trajectory(h=0.5, t_end=1.0)
        path = write_trajectory_csv(traj, os.path.join(self.test_dir, "traj.csv"))
        with open(path, encoding="utf-8") as handle:
            header = [line for line in handle if not line.startswith("#")][0].strip()
        self.assertEqual(header, "t,x_1,x_2,d_hilbert,spread,gamma")

    def test_trajectory_rejects_other_files(self):
        """Test that a file with the wrong header raises."""
        path = os.path.join(self.test_dir, "other.csv")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("a,b,c\n1,2,3\n")
        with self.assertRaises(ParameterError):
            read_trajectory_csv(path)

    def test_signal_trace_round_trip(self):
        """Test that a trace with an empty interval reads back."""
        graphs = (WeightedDigraph.from_edges(3, {(0, 1): 0.5}), WeightedDigraph.empty(3),
                  WeightedDigraph.from_edges(3, {(1, 2): 1.0, (2, 0): 0.25}))
        signal = SwitchingSignal([0.0, 0.5, 1.25, 2.0], graphs)
        path = write_signal_trace(signal, os.path.join(self.test_dir, "signal.csv"))
        loaded = read_signal_trace(path)
        np.testing.assert_array_equal(loaded.breakpoints, signal.breakpoints)
        self.assertEqual(loaded.values, signal.values)

    def test_signal_trace_rejects_index_payloads(self):
        """Test that index-valued signals cannot be written as traces."""
        with self.assertRaises(ParameterError):
            write_signal_trace(SwitchingSignal([0.0, 1.0], (0,)), os.path.join(self.test_dir, "s.csv"))

    def test_signal_trace_gap(self):
        """Test that intervals which do not tile time raise."""
        path = os.path.join(self.test_dir, "gap.csv")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("t_start,t_end,i,j,weight\n0,1,0,1,1.0\n2,3,1,0,1.0\n")
        with self.assertRaises(ParameterError):
            read_signal_trace(path)

    def test_bundled_trace(self):
        """Test the shipped adversarial trace."""
        signal = read_signal_trace(SCENARIO_DIR / "adversarial_single_link.signal.csv")
        self.assertEqual(len(signal), 12)
        self.assertAlmostEqual(signal.accumulated(signal.start, signal.end).weights[0, 1], 0.5 * (1 - 0.5 ** 12),
                               places=12)

    def test_graph_snapshot_round_trip(self):
        """Test that a snapshot reads back the same graph."""
        G = WeightedDigraph.from_edges(3, {(0, 1): 0.5, (2, 1): 1.0 / 3.0})
        path = write_graph_snapshot(G, os.path.join(self.test_dir, "g.txt"))
        self.assertEqual(read_graph_snapshot(path), G)

    def test_graph_snapshot_size_mismatch(self):
        """Test that a row count different from n raises."""
        path = os.path.join(self.test_dir, "bad.txt")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("n=3\n0 1 0\n0 0 1\n")
        with self.assertRaises(DimensionMismatchError):
            read_graph_snapshot(path)

    def test_graph_snapshot_header(self):
        """Test that a snapshot without a header raises."""
        path = os.path.join(self.test_dir, "bad.txt")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("0 1\n0 0\n")
        with self.assertRaises(ParameterError):
            read_graph_snapshot(path)


if __name__ == "__main__":
    unittest.main()
