"""
Tests for command-line interface functionality.

Tests agent count parsing, the exit codes of each subcommand and the files
written under --out.
"""

import io
import os
import shutil
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

from cli import EXIT_ERROR, EXIT_FAILED, EXIT_OK, main, output_dir, parse_sizes, parse_value
from hilbert_consensus import write_trajectory_csv
from test_fixtures import SCENARIO_DIR, create_synthetic_trajectory, write_scenario

REPO_ROOT = Path(__file__).resolve().parent.parent


def run_cli(argv):
    """Run main with captured stdout and stderr; returns (exit code, stdout)."""
    with patch('sys.stdout', new_callable=io.StringIO) as out, patch('sys.stderr', new_callable=io.StringIO):
        code = main(argv)
    return code, out.getvalue()


class TestSizeParsing(unittest.TestCase):
    """Test agent count parsing for --n."""

    def test_single(self):
        """Test a single count."""
        self.assertEqual(parse_sizes("4"), [4])

    def test_range(self):
        """Test an inclusive range."""
        self.assertEqual(parse_sizes("2..6"), [2, 3, 4, 5, 6])

    def test_list(self):
        """Test a comma-separated list."""
        self.assertEqual(parse_sizes("2,3,8"), [2, 3, 8])

    def test_invalid(self):
        """Test rejection of malformed text and counts below 2."""
        for text in ("abc", "1", "1..3", "2..x"):
            with self.assertRaises(ValueError):
                parse_sizes(text)


class TestValueParsing(unittest.TestCase):
    """Test sweep values read as TOML."""

    def test_values(self):
        """Test numbers, booleans, arrays and bare strings."""
        self.assertEqual(parse_value("0.5"), 0.5)
        self.assertEqual(parse_value("3"), 3)
        self.assertEqual(parse_value("true"), True)
        self.assertEqual(parse_value("[1, 2]"), [1, 2])
        self.assertEqual(parse_value("rk4"), "rk4")


class TestOutputDirectory(unittest.TestCase):
    """Test the output directory precedence."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_flag_wins(self):
        """Test that --out beats the configured directory and the environment."""
        flag = os.path.join(self.test_dir, "flag")
        with patch.dict(os.environ, {"HILBERT_CONSENSUS_OUT": os.path.join(self.test_dir, "env")}):
            self.assertEqual(output_dir(flag, os.path.join(self.test_dir, "cfg")), Path(flag))
        self.assertTrue(os.path.isdir(flag))

    def test_environment_fallback(self):
        """Test that the environment variable is used without flag or configuration."""
        env = os.path.join(self.test_dir, "env")
        with patch.dict(os.environ, {"HILBERT_CONSENSUS_OUT": env}):
            self.assertEqual(output_dir(None), Path(env))


class TestCommands(unittest.TestCase):
    """Test subcommands through main."""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_verify_two_cone(self):
        """Test that the two-agent demo passes."""
        code, out = run_cli(["verify", "two_cone"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Overall: PASS", out)

    def test_verify_contraction(self):
        """Test the contraction suite on small sizes."""
        code, out = run_cli(["verify", "contraction", "--n", "2..3", "--samples", "500"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Violations: 0", out)

    def test_simulate_writes_reproducible_csv(self):
        """Test that simulate writes the trajectory and reruns give identical bytes."""
        scenario = str(SCENARIO_DIR / "fig1.toml")
        first = os.path.join(self.test_dir, "first")
        second = os.path.join(self.test_dir, "second")
        self.assertEqual(run_cli(["simulate", "--scenario", scenario, "--out", first])[0], EXIT_OK)
        self.assertEqual(run_cli(["simulate", "--scenario", scenario, "--out", second])[0], EXIT_OK)
        with open(os.path.join(first, "fig1.csv"), "rb") as handle:
            content = handle.read()
        with open(os.path.join(second, "fig1.csv"), "rb") as handle:
            self.assertEqual(content, handle.read())
        self.assertTrue(content.startswith(b"# scenario="))
        self.assertTrue(os.path.exists(os.path.join(first, "fig1.meta.json")))

    def test_certify_pass(self):
        """Test that the two-agent scenario certifies and writes its reports."""
        code, out = run_cli(["certify", "--scenario", str(SCENARIO_DIR / "fig1.toml"), "--out", self.test_dir])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Overall: PASS", out)
        self.assertTrue(os.path.exists(os.path.join(self.test_dir, "fig1.report.txt")))
        self.assertTrue(os.path.exists(os.path.join(self.test_dir, "fig1.report.json")))

    def test_certify_trajectory(self):
        """Test certification of a trajectory CSV alone."""
        run_cli(["simulate", "--scenario", str(SCENARIO_DIR / "fig1.toml"), "--out", self.test_dir])
        code, out = run_cli(["certify", "--trajectory", os.path.join(self.test_dir, "fig1.csv")])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("exponential", out)

    def test_certify_fail(self):
        """Test that the decaying single link fails its checks."""
        code, out = run_cli(["certify", "--scenario", str(SCENARIO_DIR / "adversarial_single_link.toml"),
                             "--out", self.test_dir])
        self.assertEqual(code, EXIT_FAILED)
        self.assertIn("Overall: FAIL", out)

    def test_certify_needs_input(self):
        """Test that certify without scenario or trajectory is an error."""
        self.assertEqual(run_cli(["certify"])[0], EXIT_ERROR)

    def test_invalid_scenario(self):
        """Test that a scenario error exits with 2."""
        path = write_scenario(self.test_dir, "bad.toml", 'name = "bad"\n[model]\nkind = "unknown"\n')
        self.assertEqual(run_cli(["certify", "--scenario", str(path), "--out", self.test_dir])[0], EXIT_ERROR)

    def test_missing_file(self):
        """Test that a missing scenario file exits with 2."""
        missing = os.path.join(self.test_dir, "missing.toml")
        self.assertEqual(run_cli(["simulate", "--scenario", missing, "--out", self.test_dir])[0], EXIT_ERROR)

    def test_empty_sweep(self):
        """Test that a sweep without values prints an empty table."""
        code, out = run_cli(["sweep", "--scenario", str(SCENARIO_DIR / "fig1.toml"), "--param", "integrator.h"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("Sweep over integrator.h", out)

    def test_plot_states(self):
        """Test that plot writes an SVG next to the requested output."""
        run_cli(["simulate", "--scenario", str(SCENARIO_DIR / "fig1.toml"), "--out", self.test_dir])
        code, _ = run_cli(["plot", "states", os.path.join(self.test_dir, "fig1.csv"), "--out", self.test_dir])
        self.assertEqual(code, EXIT_OK)
        with open(os.path.join(self.test_dir, "fig1.states.svg"), encoding="utf-8") as handle:
            self.assertIn("<svg", handle.read())

    def test_plot_metric(self):
        """Test the metric plot of a simulated trajectory."""
        run_cli(["simulate", "--scenario", str(SCENARIO_DIR / "fig1.toml"), "--out", self.test_dir])
        code, _ = run_cli(["plot", "metric", os.path.join(self.test_dir, "fig1.csv"), "--out", self.test_dir])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(self.test_dir, "fig1.metric.svg")))

    def test_plot_metric_flat_trajectory(self):
        """Test that a trajectory at consensus throughout is drawn, not rejected."""
        path = os.path.join(self.test_dir, "flat.csv")
        write_trajectory_csv(create_synthetic_trajectory(np.linspace(0.0, 1.0, 20), np.full((20, 3), 2.0)), path)
        code, _ = run_cli(["plot", "metric", path, "--out", self.test_dir])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(self.test_dir, "flat.metric.svg")))

    def test_plot_signal(self):
        """Test the edge-weight trace of a signal file."""
        trace = str(SCENARIO_DIR / "adversarial_single_link.signal.csv")
        code, _ = run_cli(["plot", "signal", trace, "--edge", "0", "1", "--out", self.test_dir])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(self.test_dir, "adversarial_single_link.signal.signal.svg")))

    def test_plot_signal_edge_out_of_range(self):
        """Test that an edge outside the graph or a self-loop exits with 2."""
        trace = str(SCENARIO_DIR / "adversarial_single_link.signal.csv")
        for edge in (["0", "5"], ["1", "1"]):
            code, _ = run_cli(["plot", "signal", trace, "--edge", *edge, "--out", self.test_dir])
            self.assertEqual(code, EXIT_ERROR)

    def test_unknown_plot_kind(self):
        """Test that argument errors exit with 2."""
        self.assertEqual(run_cli(["plot", "histogram", "x.csv"])[0], EXIT_ERROR)


class TestEntryPoint(unittest.TestCase):
    """Test the script as a subprocess."""

    def test_version(self):
        """Test that --version prints the tool version."""
        try:
            result = subprocess.run([sys.executable, str(REPO_ROOT / "cli.py"), "--version"],
                                    capture_output=True, text=True, timeout=60, cwd=str(REPO_ROOT))
        except (subprocess.TimeoutExpired, FileNotFoundError):
            self.skipTest("CLI not runnable in this environment")
        self.assertEqual(result.returncode, 0)
        self.assertIn("hilbert-consensus", result.stdout)


if __name__ == "__main__":
    unittest.main()
