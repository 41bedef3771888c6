"""
Readers and writers for scenario files and run artifacts.

Scenario files are TOML. Artifacts are plain text: the trajectory CSV, the
sparse signal-trace CSV and graph snapshots. CSV artifacts start with
``# key=value`` comment lines (scenario hash, offset, agent count) which
readers collect and otherwise skip. Node indices are 0-based throughout.
"""

import csv
import io
import re
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import Trajectory
from .errors import DimensionMismatchError, ParameterError, ScenarioError
from .graph import WeightedDigraph
from .topology import SwitchingSignal

PathLike = Union[str, Path]

_HEADER = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
_KEY = re.compile(r"^\s*([A-Za-z0-9_.\-]+)\s*=")
_DECODE_LINE = re.compile(r"line (\d+)")


def key_lines(text: str) -> Dict[str, int]:
    """
    Map dotted key paths of a TOML document to their 1-based line numbers.

    Tables map to their header line; members of arrays of tables are
    addressed as ``section.name.<index>``.
    """
    lines: Dict[str, int] = {}
    counters: Dict[str, int] = {}
    prefix = ""
    for number, line in enumerate(text.splitlines(), start=1):
        header = _HEADER.match(line)
        if header:
            brackets, name = header.groups()
            if brackets == "[[":
                index = counters.get(name, 0)
                counters[name] = index + 1
                lines.setdefault(name, number)
                prefix = f"{name}.{index}"
            else:
                prefix = name
            lines.setdefault(prefix, number)
            continue
        key = _KEY.match(line)
        if key:
            path = f"{prefix}.{key.group(1)}" if prefix else key.group(1)
            lines.setdefault(path, number)
    return lines


def parse_scenario_text(text: str, source: Optional[str] = None,
                        overrides: Optional[Mapping[str, Any]] = None):
    """
    Parse TOML scenario text into a validated Scenario.

    Args:
        text: TOML document
        source: File name used in error messages
        overrides: Dotted path -> value replacements applied before validation
            (the CLI's --seed)

    Raises:
        ScenarioError: On TOML syntax errors or invalid content, line-anchored
    """
    from .scenario import Scenario, set_path

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = _DECODE_LINE.search(str(exc))
        raise ScenarioError(f"invalid TOML: {exc}", line=int(match.group(1)) if match else None, source=source)
    lines = key_lines(text)
    for path, value in (overrides or {}).items():
        data = set_path(data, path, value, lines, source)
    return Scenario.from_dict(data, lines, source)


def parse_scenario_file(path: PathLike, overrides: Optional[Mapping[str, Any]] = None):
    """
    Parse a scenario file.

    Args:
        path: Path to the TOML scenario
        overrides: Dotted path -> value replacements applied before validation

    Returns:
        Scenario with source set to path, so relative trace paths resolve
        against the scenario's directory

    Raises:
        FileNotFoundError: If the file cannot be found
        ScenarioError: If the scenario is invalid
    """
    path = Path(path)
    return parse_scenario_text(path.read_text(encoding="utf-8"), str(path), overrides)


def parse_scenario_dict(data: Mapping[str, Any]):
    """Validate an in-memory scenario mapping (no line information)."""
    from .scenario import Scenario

    return Scenario.from_dict(data)


def _comment_lines(metadata: Mapping[str, Any]) -> List[str]:
    return [f"# {key}={value}" for key, value in metadata.items() if value is not None]


def _split_comments(handle: Iterable[str]) -> Tuple[Dict[str, str], List[str]]:
    metadata: Dict[str, str] = {}
    rows = []
    for line in handle:
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                metadata[key.strip()] = value.strip()
            continue
        if line.strip():
            rows.append(line)
    return metadata, rows


def _g(value: float) -> str:
    return format(float(value), ".17g")


def format_trajectory_csv(traj: Trajectory, scenario_hash: Optional[str] = None) -> str:
    """
    Trajectory as CSV text.

    Header ``t,x_1,...,x_n,d_hilbert,spread,gamma`` with one row per grid
    point and 17 significant digits, so the text round-trips exactly.
    """
    buffer = io.StringIO()
    for line in _comment_lines({"scenario": scenario_hash, "offset": _g(traj.offset), "scheme": traj.scheme}):
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t", *[f"x_{i + 1}" for i in range(traj.n)], "d_hilbert", "spread", "gamma"])
    for k in range(len(traj)):
        writer.writerow([_g(traj.times[k]), *map(_g, traj.states[k]), _g(traj.hilbert_to_ones[k]),
                         _g(traj.spread[k]), _g(traj.minimal_gamma[k])])
    return buffer.getvalue()


def write_trajectory_csv(traj: Trajectory, path: PathLike, scenario_hash: Optional[str] = None) -> Path:
    path = Path(path)
    path.write_text(format_trajectory_csv(traj, scenario_hash), encoding="utf-8")
    return path


def read_trajectory_csv(path: PathLike) -> Tuple[Trajectory, Dict[str, str]]:
    """
    Read a trajectory CSV written by write_trajectory_csv.

    Diagnostics are recomputed from the states and the recorded offset.

    Returns:
        (trajectory, metadata from the comment lines)

    Raises:
        FileNotFoundError: If the file cannot be found
        ParameterError: If the header or a row is malformed
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as file:
        metadata, rows = _split_comments(file)
    reader = csv.reader(rows)
    header = next(reader, None)
    if not header or header[0] != "t" or header[-3:] != ["d_hilbert", "spread", "gamma"]:
        raise ParameterError(f"{path}: not a trajectory CSV (header {header!r})")
    n = len(header) - 4
    if n < 2:
        raise ParameterError(f"{path}: trajectory CSV needs at least two state columns")
    try:
        values = np.array([[float(v) for v in row[:n + 1]] for row in reader if row], dtype=float)
    except ValueError as exc:
        raise ParameterError(f"{path}: malformed row: {exc}")
    if values.shape[0] < 2:
        raise ParameterError(f"{path}: trajectory CSV has fewer than two rows")
    offset = float(metadata.get("offset", 0.0))
    scheme = metadata.get("scheme")
    return Trajectory.from_states(values[:, 0], values[:, 1:], offset=offset, scheme=scheme), metadata


def write_signal_trace(signal: SwitchingSignal, path: PathLike, scenario_hash: Optional[str] = None,
                       tol: float = 0.0) -> Path:
    """
    Write a graph-valued signal as ``t_start,t_end,i,j,weight`` rows.

    One row per link with weight > tol; an interval without links gets a
    single row with empty i, j and weight.

    Raises:
        ParameterError: If a payload is not a WeightedDigraph
    """
    graphs = signal.graphs()
    if not all(isinstance(g, WeightedDigraph) for g in graphs):
        raise ParameterError("only graph-valued signals can be written as traces")
    buffer = io.StringIO()
    for line in _comment_lines({"scenario": scenario_hash, "n": graphs[0].n}):
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["t_start", "t_end", "i", "j", "weight"])
    for start, end, graph in signal.intervals():
        links = graph.edges(tol)
        if not links:
            writer.writerow([_g(start), _g(end), "", "", ""])
        for (i, j), weight in sorted(links.items()):
            writer.writerow([_g(start), _g(end), i, j, _g(weight)])
    path = Path(path)
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def read_signal_trace(path: PathLike, n: Optional[int] = None) -> SwitchingSignal:
    """
    Read a signal trace into a SwitchingSignal of WeightedDigraph payloads.

    The agent count comes from n, else from the ``# n=`` comment, else from
    the largest index in the file.

    Raises:
        ParameterError: Malformed rows, gaps between intervals or bad indices
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as file:
        metadata, rows = _split_comments(file)
    reader = csv.DictReader(rows)
    if reader.fieldnames != ["t_start", "t_end", "i", "j", "weight"]:
        raise ParameterError(f"{path}: not a signal trace (header {reader.fieldnames!r})")

    intervals: Dict[Tuple[float, float], Dict[Tuple[int, int], float]] = {}
    try:
        for row in reader:
            key = (float(row["t_start"]), float(row["t_end"]))
            links = intervals.setdefault(key, {})
            if row["i"]:
                links[(int(row["i"]), int(row["j"]))] = float(row["weight"])
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"{path}: malformed row: {exc}")
    if not intervals:
        raise ParameterError(f"{path}: signal trace has no intervals")

    if n is None:
        n = int(metadata["n"]) if "n" in metadata else 1 + max(
            (max(i, j) for links in intervals.values() for i, j in links), default=1)
    ordered = sorted(intervals)
    for (_, end), (start, _) in zip(ordered[:-1], ordered[1:]):
        if end != start:
            raise ParameterError(f"{path}: intervals do not tile time ({end} != {start})")
    try:
        graphs = tuple(WeightedDigraph.from_edges(n, intervals[key]) for key in ordered)
    except (IndexError, ValueError) as exc:
        raise ParameterError(f"{path}: {exc}")
    return SwitchingSignal([ordered[0][0]] + [end for _, end in ordered], graphs)


def write_graph_snapshot(G: WeightedDigraph, path: PathLike) -> Path:
    """Write ``n=<int>`` followed by the weight rows, whitespace-separated."""
    lines = [f"n={G.n}"] + [" ".join(_g(v) for v in row) for row in G.weights]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_graph_snapshot(path: PathLike) -> WeightedDigraph:
    """
    Read a graph snapshot.

    Raises:
        ParameterError: Missing header or non-numeric rows
        DimensionMismatchError: Row count or row length differs from n
    """
    path = Path(path)
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines or not lines[0].startswith("n="):
        raise ParameterError(f"{path}: graph snapshot must start with n=<int>")
    try:
        n = int(lines[0][2:])
        rows = [[float(v) for v in line.split()] for line in lines[1:]]
    except ValueError as exc:
        raise ParameterError(f"{path}: {exc}")
    if len(rows) != n or any(len(row) != n for row in rows):
        raise DimensionMismatchError(f"{path}: expected {n} rows of {n} weights")
    return WeightedDigraph(rows)
