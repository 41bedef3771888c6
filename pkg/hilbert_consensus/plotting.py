"""
Headless SVG figures: state fans, the metric decay and edge-weight traces.

Figures are built on matplotlib.figure.Figure directly (no pyplot, no
display). The SVG hash salt and metadata are fixed, so identical inputs give
identical files.
"""

import logging
import math
from pathlib import Path
from typing import Optional, Tuple, Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .analysis import ConsensusReport
from .dynamics import Trajectory
from .errors import ParameterError
from .topology import SwitchingSignal

logger = logging.getLogger(__name__)

PLOT_KINDS = ("states", "metric", "signal")
SVG_HASH_SALT = "hilbert-consensus"
FIGSIZE = (7.0, 4.5)


def _save(figure: Figure, path: Union[str, Path], scenario_hash: Optional[str]) -> Path:
    path = Path(path)
    metadata = {"Date": None, "Creator": "hilbert-consensus"}
    if scenario_hash:
        metadata["Description"] = f"scenario={scenario_hash}"
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        figure.savefig(path, format="svg", metadata=metadata)
    logger.info("wrote %s", path)
    return path


def plot_states(traj: Trajectory, path: Union[str, Path], title: str = "",
                scenario_hash: Optional[str] = None) -> Path:
    """All x_i(t) overlaid."""
    figure = Figure(figsize=FIGSIZE)
    ax = figure.add_subplot()
    for i in range(traj.n):
        ax.plot(traj.times, traj.states[:, i], linewidth=1.0, label=f"x_{i + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("x_i(t)")
    ax.set_title(title or "States")
    if traj.n <= 10:
        ax.legend(loc="best", fontsize="small", ncol=2)
    ax.grid(True, alpha=0.3)
    return _save(figure, path, scenario_hash)


def plot_metric(traj: Trajectory, path: Union[str, Path], report: Optional[ConsensusReport] = None,
                title: str = "", scenario_hash: Optional[str] = None) -> Path:
    """
    ln d(x(t), 1) with the fitted line of report over its window.

    Samples where d is zero or infinite are left out. A trajectory at
    consensus throughout (d = 0 everywhere) is drawn as the flat line
    d(x(t), 1) = 0 on a linear axis.

    Raises:
        ParameterError: If d(x, 1) is infinite at every sample
    """
    d = traj.hilbert_to_ones
    finite = np.isfinite(d)
    if not finite.any():
        raise ParameterError("d(x, 1) is infinite at every sample; shift the states to the positive orthant")
    usable = finite & (d > 0)
    figure = Figure(figsize=FIGSIZE)
    ax = figure.add_subplot()
    if not usable.any():
        ax.plot(traj.times[finite], d[finite], linewidth=1.2, label="d(x(t), 1)")
        ax.text(0.5, 0.6, "consensus at every sample", transform=ax.transAxes, ha="center")
        ax.set_ylabel("d(x(t), 1)")
    else:
        ax.plot(traj.times[usable], np.log(d[usable]), linewidth=1.2, label="ln d(x(t), 1)")
        if report is not None and math.isfinite(report.rate_lambda) and report.prefactor_K > 0:
            t0, d0 = traj.times[finite][0], d[finite][0]
            t = np.linspace(report.window[0], report.window[1], 50)
            ax.plot(t, math.log(report.prefactor_K * d0) - report.rate_lambda * (t - t0), linestyle="--",
                    linewidth=1.0, label=f"fit, lambda = {report.rate_lambda:.4g}")
        ax.set_ylabel("ln d(x(t), 1)")
    ax.set_xlabel("t")
    ax.set_title(title or "Hilbert distance to consensus")
    ax.legend(loc="best", fontsize="small")
    ax.grid(True, alpha=0.3)
    return _save(figure, path, scenario_hash)


def plot_signal(signal: SwitchingSignal, edge: Tuple[int, int], path: Union[str, Path], title: str = "",
                scenario_hash: Optional[str] = None) -> Path:
    """Weight of link edge = (i, j) against t as a step function."""
    i, j = edge
    n = signal.graphs()[0].n
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ParameterError(f"edge {edge} is not a link of a {n}-node graph")
    times, weights = signal.edge_trace(i, j)
    figure = Figure(figsize=FIGSIZE)
    ax = figure.add_subplot()
    ax.stairs(weights, times, linewidth=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel(f"a_{i},{j}(t)")
    ax.set_title(title or f"Signal a_{i},{j}(t)")
    ax.grid(True, alpha=0.3)
    return _save(figure, path, scenario_hash)
