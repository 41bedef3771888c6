"""
Scenario configuration and run orchestration.

A scenario is a nested mapping (normally read from TOML by parser) with the
sections model, initial, integrator, horizon, checkpoints, topology,
certification and outputs. Scenario.from_dict validates it and anchors
errors to the file line of the offending key. Every scalar can be addressed
by a dotted path ("topology.delta") for sweeps.

All randomness derives from the scenario seed through labelled substreams,
so adding a component never perturbs the draws of another.
"""

import copy
import hashlib
import json
import logging
import math
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .analysis import ConsensusReport, certify_consensus
from .dynamics import (
    AnimalGroupModel,
    Box,
    CuckerSmaleVelocityModel,
    CustomSwitchingModel,
    HegselmannKrauseModel,
    KuramotoModel,
    LTVModel,
    ModelKind,
    Scheme,
    SystemModel,
    Trajectory,
    factorize_transition,
    lower_bound_transition,
    shift_to_positive,
    simulate,
)
from .errors import ConsensusToolError, ScenarioError
from .graph import WeightedDigraph
from .topology import (
    AccumulatedBoundReport,
    ChainActivationConfig,
    CheckpointSequence,
    SwitchingSignal,
    chain_random_activation,
    dwell_time_signal,
    periodic_signal,
    verify_accumulated_lower_bound,
)

logger = logging.getLogger(__name__)

DEFAULT_SHIFT_MARGIN = 1.0
# |P x(t_k) - x(t_k1)| relative to max(1, |x(t_k1)|)
PRODUCT_TOL = 1e-10

SCHEMA: Dict[str, Tuple[str, ...]] = {
    "model": ("kind", "n", "matrix", "weights", "edges", "gain", "strength", "sigma", "beta", "radius",
              "radius_schedule", "attraction_radius", "repulsion_radius", "attraction_strength",
              "repulsion_strength", "family"),
    "initial": ("x0", "low", "high", "shift_margin"),
    "integrator": ("scheme", "h", "strict"),
    "horizon": ("t0", "t_end"),
    "checkpoints": ("spacing",),
    "topology": ("kind", "delta", "edges_per_step", "step", "outer_min", "outer_max", "pieces_min",
                 "pieces_max", "weight_spread", "tau", "graphs", "pattern", "path", "edges", "weights"),
    "certification": ("fit_window_fraction", "residual_tol", "bound_edges", "mode", "resolution",
                      "transition_check"),
    "outputs": ("dir", "csv", "report", "plots", "trace"),
}
TOP_LEVEL = ("name", "seed")
TOPOLOGY_KINDS = ("constant", "chain", "dwell", "periodic", "trace")
STOCHASTIC_TOPOLOGIES = ("chain", "dwell")


def derive_seed(seed: int, label: str) -> int:
    """Seed of the substream named label: SeedSequence(seed, spawn_key=(crc32(label),))."""
    sequence = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(label.encode()),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


class _Section:
    """Typed access to one scenario section with line-anchored errors."""

    def __init__(self, name: str, data: Mapping[str, Any], lines: Mapping[str, int], source: Optional[str]):
        self.name = name
        self.data = data
        self.lines = lines
        self.source = source

    def error(self, key: Optional[str], message: str) -> ScenarioError:
        path = ".".join(part for part in (self.name, key) if part)
        return ScenarioError(f"{path} {message}", line=line_of(self.lines, path), source=self.source)

    def has(self, key: str) -> bool:
        return key in self.data

    def number(self, key: str, default: Any = None, positive: bool = False, minimum: Optional[float] = None,
               maximum: Optional[float] = None) -> Optional[float]:
        if key not in self.data:
            if default is None:
                return None
            return float(default)
        value = self.data[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(key, f"must be a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise self.error(key, "must be finite")
        if positive and not value > 0:
            raise self.error(key, f"must be > 0, got {value:g}")
        if minimum is not None and value < minimum:
            raise self.error(key, f"must be >= {minimum:g}, got {value:g}")
        if maximum is not None and value > maximum:
            raise self.error(key, f"must be <= {maximum:g}, got {value:g}")
        return value

    def integer(self, key: str, default: Optional[int] = None, minimum: Optional[int] = None) -> Optional[int]:
        if key not in self.data:
            return default
        value = self.data[key]
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(key, f"must be an integer, got {value!r}")
        if minimum is not None and value < minimum:
            raise self.error(key, f"must be >= {minimum}, got {value}")
        return value

    def string(self, key: str, default: Optional[str] = None, choices: Sequence[str] = ()) -> Optional[str]:
        if key not in self.data:
            return default
        value = self.data[key]
        if not isinstance(value, str):
            raise self.error(key, f"must be a string, got {value!r}")
        if choices and value not in choices:
            raise self.error(key, f"must be one of {', '.join(choices)}; got {value!r}")
        return value

    def boolean(self, key: str, default: bool) -> bool:
        if key not in self.data:
            return default
        value = self.data[key]
        if not isinstance(value, bool):
            raise self.error(key, f"must be true or false, got {value!r}")
        return value

    def vector(self, key: str, n: Optional[int] = None) -> Optional[List[float]]:
        if key not in self.data:
            return None
        value = self.data[key]
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                  for v in value):
            raise self.error(key, "must be a list of numbers")
        if n is not None and len(value) != n:
            raise self.error(key, f"must have {n} entries, got {len(value)}")
        return [float(v) for v in value]

    def matrix(self, key: str, n: int, value: Any = None) -> List[List[float]]:
        value = self.data[key] if value is None else value
        if (not isinstance(value, list) or len(value) != n
                or not all(isinstance(row, list) and len(row) == n for row in value)):
            raise self.error(key, f"must be a {n} x {n} matrix")
        try:
            return [[float(v) for v in row] for row in value]
        except (TypeError, ValueError):
            raise self.error(key, "must contain numbers only")

    def edges(self, key: str, n: int, value: Any = None) -> List[List[float]]:
        value = self.data[key] if value is None else value
        if not isinstance(value, list):
            raise self.error(key, "must be a list of [i, j, weight] triples")
        parsed = []
        for entry in value:
            if not isinstance(entry, list) or len(entry) != 3:
                raise self.error(key, f"entry {entry!r} is not an [i, j, weight] triple")
            i, j, weight = entry
            if not (isinstance(i, int) and isinstance(j, int) and 0 <= i < n and 0 <= j < n and i != j):
                raise self.error(key, f"entry {entry!r} needs distinct 0-based indices below {n}")
            if isinstance(weight, bool) or not isinstance(weight, (int, float)) or weight < 0:
                raise self.error(key, f"entry {entry!r} needs a nonnegative weight")
            parsed.append([i, j, float(weight)])
        return parsed

    def reject_unknown(self, allowed: Sequence[str]):
        for key in self.data:
            if key not in allowed:
                raise self.error(key, "is not a known key")


def line_of(lines: Mapping[str, int], path: str) -> Optional[int]:
    """Line of path in the source file, falling back to its closest enclosing section."""
    while path:
        if path in lines:
            return lines[path]
        path = path.rpartition(".")[0]
    return None


def graph_of_edges(n: int, edges: Sequence[Sequence[float]]) -> WeightedDigraph:
    return WeightedDigraph.from_edges(n, {(int(i), int(j)): float(w) for i, j, w in edges})


@dataclass
class ModelSpec:
    kind: ModelKind
    n: int
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class InitialSpec:
    """Initial state: explicit x0, or uniform in [low, high]^n from the "initial" substream."""
    x0: Optional[List[float]] = None
    low: Optional[float] = None
    high: Optional[float] = None
    shift_margin: Optional[float] = None


@dataclass
class IntegratorSpec:
    scheme: Scheme = Scheme.EULER
    h: float = 0.01
    strict: bool = True


@dataclass
class TopologySpec:
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class CertificationSpec:
    fit_window_fraction: float = 0.5
    residual_tol: float = 0.05
    bound_edges: Optional[List[List[float]]] = None
    mode: str = "trajectory"
    resolution: int = 3
    transition_check: bool = False


@dataclass
class OutputSpec:
    directory: Optional[str]
    csv: str
    report: str
    plots: str
    trace: str


@dataclass
class Scenario:
    """
    Validated scenario.

    Attributes:
        name: Scenario name, also the stem of output files
        seed: Root seed; required when any stochastic generator is used
        model: Model kind, size and kind-specific parameters
        initial: Initial state specification
        integrator: Scheme, step size and strictness
        t0: Start time
        t_end: End time
        checkpoint_spacing: Spacing T of the checkpoint sequence
        topology: Switching-signal specification, if any
        certification: Fit and lower-bound settings
        outputs: Output file names
        raw: The mapping the scenario was built from
        source: File the scenario was read from, if any
        lines: Dotted key path -> 1-based line in source
    """
    name: str
    seed: Optional[int]
    model: ModelSpec
    initial: InitialSpec
    integrator: IntegratorSpec
    t0: float
    t_end: float
    checkpoint_spacing: float
    topology: Optional[TopologySpec]
    certification: CertificationSpec
    outputs: OutputSpec
    raw: Dict[str, Any] = field(repr=False, default_factory=dict)
    source: Optional[str] = None
    lines: Dict[str, int] = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], lines: Optional[Mapping[str, int]] = None,
                  source: Optional[str] = None) -> "Scenario":
        """
        Validate a scenario mapping.

        Raises:
            ScenarioError: On any invalid or unknown key, with the file line when known
        """
        lines = dict(lines or {})
        top = _Section("", data, lines, source)
        for key in data:
            if key not in TOP_LEVEL and key not in SCHEMA:
                raise ScenarioError(f"unknown key {key!r}", line=line_of(lines, key), source=source)
        name = data.get("name")
        if not isinstance(name, str) or not name:
            raise ScenarioError("name must be a nonempty string", line=line_of(lines, "name"), source=source)
        seed = data.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise ScenarioError(f"seed must be a nonnegative integer, got {seed!r}", line=line_of(lines, "seed"),
                                source=source)

        sections = {}
        for section_name, allowed in SCHEMA.items():
            raw = data.get(section_name, {})
            if not isinstance(raw, Mapping):
                raise top.error(section_name, "must be a table")
            section = _Section(section_name, raw, lines, source)
            section.reject_unknown(allowed)
            sections[section_name] = section

        horizon = sections["horizon"]
        if not horizon.has("t_end"):
            raise horizon.error("t_end", "is required")
        t0 = horizon.number("t0", default=0.0)
        t_end = horizon.number("t_end")
        if not t_end > t0:
            raise horizon.error("t_end", f"must exceed t0={t0:g}")

        integrator = _integrator(sections["integrator"])
        model = _model(sections["model"])
        initial = _initial(sections["initial"], model.n)
        topology = _topology(sections["topology"], model, integrator)
        spacing = sections["checkpoints"].number("spacing", default=min(1.0, t_end - t0), positive=True)
        if spacing > t_end - t0:
            raise sections["checkpoints"].error("spacing", "is longer than the horizon")
        certification = _certification(sections["certification"], model.n)
        if certification.transition_check and integrator.scheme is not Scheme.EULER:
            raise sections["certification"].error("transition_check", "requires the euler scheme")
        outputs = _outputs(sections["outputs"], name)

        stochastic = (topology is not None and topology.kind in STOCHASTIC_TOPOLOGIES) or initial.x0 is None
        if stochastic and seed is None:
            raise ScenarioError("seed is required when a random generator is used", line=line_of(lines, "name"),
                                source=source)
        _check_model_topology(sections["model"], model, topology)

        return cls(name, seed, model, initial, integrator, t0, t_end, spacing, topology, certification, outputs,
                   raw=copy.deepcopy(dict(data)), source=source, lines=lines)

    def resolved(self) -> Dict[str, Any]:
        """Scenario with every default filled in; outputs excluded."""
        resolved = {
            "name": self.name,
            "seed": self.seed,
            "model": {"kind": self.model.kind.value, "n": self.model.n, **self.model.params},
            "initial": asdict(self.initial),
            "integrator": {"scheme": self.integrator.scheme.value, "h": self.integrator.h,
                           "strict": self.integrator.strict},
            "horizon": {"t0": self.t0, "t_end": self.t_end},
            "checkpoints": {"spacing": self.checkpoint_spacing},
            "certification": asdict(self.certification),
        }
        if self.topology is not None:
            resolved["topology"] = {"kind": self.topology.kind, **self.topology.params}
        return resolved

    @property
    def hash(self) -> str:
        canonical = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def with_override(self, path: str, value: Any) -> "Scenario":
        """Copy of the scenario with one dotted path replaced, revalidated."""
        return Scenario.from_dict(set_path(self.raw, path, value, self.lines, self.source), self.lines, self.source)

    def checkpoints(self) -> CheckpointSequence:
        return CheckpointSequence.uniform(self.t0, self.t_end, self.checkpoint_spacing)


def set_path(data: Mapping[str, Any], path: str, value: Any, lines: Optional[Mapping[str, int]] = None,
             source: Optional[str] = None) -> Dict[str, Any]:
    """
    Copy of data with the dotted path set to value.

    Raises:
        ScenarioError: If path does not name a key of the scenario schema
    """
    section, _, key = path.partition(".")
    known = (section in TOP_LEVEL and not key) or (section in SCHEMA and key in SCHEMA[section])
    if not known:
        raise ScenarioError(f"unknown parameter path {path!r}", line=line_of(lines or {}, path), source=source)
    updated = copy.deepcopy(dict(data))
    if key:
        updated.setdefault(section, {})[key] = value
    else:
        updated[section] = value
    return updated


def _integrator(section: _Section) -> IntegratorSpec:
    scheme = section.string("scheme", default="euler", choices=[s.value for s in Scheme])
    return IntegratorSpec(Scheme(scheme), section.number("h", default=0.01, positive=True),
                          section.boolean("strict", True))


def _model(section: _Section) -> ModelSpec:
    if not section.has("kind"):
        raise section.error("kind", "is required")
    kind = ModelKind(section.string("kind", choices=[k.value for k in ModelKind]))
    n = section.integer("n")
    if n is None and section.has("matrix") and isinstance(section.data["matrix"], list):
        n = len(section.data["matrix"])
    if n is None:
        raise section.error("n", "is required")
    if n < 2:
        raise section.error("n", f"must be >= 2, got {n}")

    params: Dict[str, Any] = {}
    if section.has("matrix"):
        params["matrix"] = section.matrix("matrix", n)
    if section.has("weights"):
        params["weights"] = section.matrix("weights", n)
    if section.has("edges"):
        params["edges"] = section.edges("edges", n)
    if kind is ModelKind.CUCKER_SMALE_VELOCITY:
        params["gain"] = section.number("gain", default=1.0, positive=True)
        params["strength"] = section.number("strength", default=1.0, positive=True)
        params["sigma"] = section.number("sigma", default=1.0, positive=True)
        params["beta"] = section.number("beta", default=0.5, minimum=0.0)
    elif kind is ModelKind.HEGSELMANN_KRAUSE:
        params["gain"] = section.number("gain", default=1.0, positive=True)
        if section.has("radius_schedule"):
            params["radius_schedule"] = _radius_schedule(section)
        else:
            params["radius"] = section.number("radius", default=1.0, minimum=0.0)
    elif kind is ModelKind.ANIMAL_GROUP:
        params["attraction_radius"] = section.number("attraction_radius", default=1.0, positive=True)
        params["repulsion_radius"] = section.number("repulsion_radius", default=0.0, minimum=0.0)
        params["attraction_strength"] = section.number("attraction_strength", default=1.0, minimum=0.0)
        params["repulsion_strength"] = section.number("repulsion_strength", default=0.0, minimum=0.0)
    elif kind is ModelKind.CUSTOM_SWITCHING:
        family = section.data.get("family")
        if not isinstance(family, list) or not family:
            raise section.error("family", "must be a nonempty list of matrices")
        params["family"] = [section.matrix("family", n, member) for member in family]
    return ModelSpec(kind, n, params)


def _radius_schedule(section: _Section) -> Dict[str, List[float]]:
    schedule = section.data["radius_schedule"]
    if not isinstance(schedule, Mapping) or set(schedule) != {"times", "values"}:
        raise section.error("radius_schedule", "must have keys times and values")
    times, values = schedule["times"], schedule["values"]
    if (not isinstance(times, list) or not isinstance(values, list) or len(times) != len(values) + 1
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in times + values)):
        raise section.error("radius_schedule", "needs numeric times with one more entry than values")
    if any(v < 0 for v in values):
        raise section.error("radius_schedule", "radii must be nonnegative")
    return {"times": [float(t) for t in times], "values": [float(v) for v in values]}


def _initial(section: _Section, n: int) -> InitialSpec:
    x0 = section.vector("x0", n)
    low, high = section.number("low"), section.number("high")
    if x0 is None and (low is None or high is None):
        raise section.error("x0", "is required unless low and high are given")
    if x0 is None and not high >= low:
        raise section.error("high", "must be >= low")
    return InitialSpec(x0, low, high, section.number("shift_margin", positive=True))


def _topology(section: _Section, model: ModelSpec, integrator: IntegratorSpec) -> Optional[TopologySpec]:
    if not section.data:
        return None
    if not section.has("kind"):
        raise section.error("kind", "is required")
    kind = section.string("kind", choices=TOPOLOGY_KINDS)
    n = model.n
    params: Dict[str, Any] = {}
    if kind == "constant":
        if section.has("weights"):
            params["weights"] = section.matrix("weights", n)
        elif section.has("edges"):
            params["edges"] = section.edges("edges", n)
        else:
            raise section.error("edges", "or weights is required for a constant topology")
    elif kind == "chain":
        params["delta"] = section.number("delta", positive=True)
        if params["delta"] is None:
            raise section.error("delta", "is required")
        params["edges_per_step"] = section.integer("edges_per_step", default=3, minimum=1)
        params["step"] = section.number("step", default=integrator.h, positive=True)
        defaults = ChainActivationConfig()
        params["outer_min"] = section.number("outer_min", default=defaults.outer_min, positive=True)
        params["outer_max"] = section.number("outer_max", default=defaults.outer_max, positive=True)
        params["pieces_min"] = section.integer("pieces_min", default=defaults.pieces_min, minimum=1)
        params["pieces_max"] = section.integer("pieces_max", default=defaults.pieces_max, minimum=1)
        params["weight_spread"] = section.number("weight_spread", default=defaults.weight_spread, minimum=1.0)
        if params["outer_max"] < params["outer_min"]:
            raise section.error("outer_max", "must be >= outer_min")
        if params["pieces_max"] < params["pieces_min"]:
            raise section.error("pieces_max", "must be >= pieces_min")
    elif kind == "dwell":
        params["tau"] = section.number("tau", positive=True)
        if params["tau"] is None:
            raise section.error("tau", "is required")
        if model.kind is not ModelKind.CUSTOM_SWITCHING:
            graphs = section.data.get("graphs")
            if not isinstance(graphs, list) or not graphs:
                raise section.error("graphs", "must be a nonempty list of edge lists")
            params["graphs"] = [section.edges("graphs", n, g) for g in graphs]
    elif kind == "periodic":
        pattern = section.data.get("pattern")
        if not isinstance(pattern, list) or not pattern:
            raise section.error("pattern", "must be a nonempty array of tables")
        parsed = []
        for index, piece in enumerate(pattern):
            entry = _Section(f"topology.pattern.{index}", piece if isinstance(piece, Mapping) else {},
                             section.lines, section.source)
            entry.reject_unknown(("duration", "edges", "index"))
            duration = entry.number("duration", positive=True)
            if duration is None:
                raise entry.error("duration", "is required")
            if model.kind is ModelKind.CUSTOM_SWITCHING:
                payload = entry.integer("index", minimum=0)
                if payload is None or payload >= len(model.params["family"]):
                    raise entry.error("index", "must index the model family")
                parsed.append({"duration": duration, "index": payload})
            else:
                parsed.append({"duration": duration, "edges": entry.edges("edges", n)})
        params["pattern"] = parsed
    elif kind == "trace":
        params["path"] = section.string("path")
        if params["path"] is None:
            raise section.error("path", "is required")
    return TopologySpec(kind, params)


def _check_model_topology(section: _Section, model: ModelSpec, topology: Optional[TopologySpec]):
    needs_coupling = model.kind in (ModelKind.LTV, ModelKind.KURAMOTO)
    has_constant = any(key in model.params for key in ("matrix", "weights", "edges"))
    if needs_coupling and topology is None and not has_constant:
        raise section.error("kind", f"{model.kind.value} needs a matrix, weights, edges or a [topology] section")
    if model.kind is ModelKind.CUSTOM_SWITCHING and (topology is None or topology.kind not in ("dwell", "periodic")):
        raise section.error("family", "custom_switching needs a dwell or periodic topology")


def _certification(section: _Section, n: int) -> CertificationSpec:
    bound = section.edges("bound_edges", n) if section.has("bound_edges") else None
    return CertificationSpec(
        fit_window_fraction=section.number("fit_window_fraction", default=0.5, positive=True, maximum=1.0),
        residual_tol=section.number("residual_tol", default=0.05, positive=True),
        bound_edges=bound,
        mode=section.string("mode", default="trajectory", choices=("trajectory", "sampled")),
        resolution=section.integer("resolution", default=3, minimum=2),
        transition_check=section.boolean("transition_check", False),
    )


def _outputs(section: _Section, name: str) -> OutputSpec:
    return OutputSpec(
        directory=section.string("dir"),
        csv=section.string("csv", default=f"{name}.csv"),
        report=section.string("report", default=f"{name}.report.txt"),
        plots=section.string("plots", default=name),
        trace=section.string("trace", default=f"{name}.signal.csv"),
    )


def build_topology(scenario: Scenario) -> Optional[SwitchingSignal]:
    """Switching signal of the scenario, or None for constant-coupling models."""
    spec = scenario.topology
    if spec is None:
        return None
    n = scenario.model.n
    horizon = scenario.t_end - scenario.t0
    p = spec.params
    if spec.kind == "constant":
        graph = WeightedDigraph(p["weights"]) if "weights" in p else graph_of_edges(n, p["edges"])
        return SwitchingSignal([scenario.t0, scenario.t_end], (graph,))
    if spec.kind == "chain":
        config = ChainActivationConfig(p["outer_min"], p["outer_max"], p["pieces_min"], p["pieces_max"],
                                       p["weight_spread"])
        return chain_random_activation(n, p["delta"], horizon, derive_seed(scenario.seed, "topology"),
                                       p["edges_per_step"], p["step"], scenario.t0, config)
    if spec.kind == "dwell":
        if scenario.model.kind is ModelKind.CUSTOM_SWITCHING:
            payloads = list(range(len(scenario.model.params["family"])))
        else:
            payloads = [graph_of_edges(n, edges) for edges in p["graphs"]]
        return dwell_time_signal(payloads, p["tau"], horizon, derive_seed(scenario.seed, "topology"), scenario.t0)
    if spec.kind == "periodic":
        pattern = [(piece["duration"], piece["index"] if "index" in piece else graph_of_edges(n, piece["edges"]))
                   for piece in p["pattern"]]
        return periodic_signal(pattern, horizon, scenario.t0)
    from .parser import read_signal_trace

    path = Path(p["path"])
    if not path.is_absolute() and scenario.source:
        path = Path(scenario.source).parent / path
    signal = read_signal_trace(path)
    if signal.graphs()[0].n != n:
        raise ScenarioError(f"signal trace has {signal.graphs()[0].n} agents, model has {n}",
                            line=line_of(scenario.lines, "topology.path"), source=scenario.source)
    return signal


def build_model(scenario: Scenario, signal: Optional[SwitchingSignal] = None) -> SystemModel:
    """Instantiate the scenario's model, coupled through signal when the kind takes one."""
    spec = scenario.model
    p = spec.params
    n = spec.n
    constant = None
    if "matrix" in p:
        constant = np.array(p["matrix"])
    elif "weights" in p:
        constant = WeightedDigraph(p["weights"])
    elif "edges" in p:
        constant = graph_of_edges(n, p["edges"])

    if spec.kind is ModelKind.LTV:
        return LTVModel(signal if signal is not None else constant)
    if spec.kind is ModelKind.KURAMOTO:
        coupling = signal if signal is not None else constant
        if not isinstance(coupling, (WeightedDigraph, SwitchingSignal)):
            coupling = WeightedDigraph(np.where(np.eye(n, dtype=bool), 0.0, coupling))
        return KuramotoModel(coupling)
    if spec.kind is ModelKind.CUCKER_SMALE_VELOCITY:
        return CuckerSmaleVelocityModel(n, p["gain"], p["strength"], p["sigma"], p["beta"])
    if spec.kind is ModelKind.HEGSELMANN_KRAUSE:
        if "radius_schedule" in p:
            radius = SwitchingSignal(p["radius_schedule"]["times"], tuple(p["radius_schedule"]["values"]))
        else:
            radius = p["radius"]
        return HegselmannKrauseModel(n, radius, p["gain"])
    if spec.kind is ModelKind.ANIMAL_GROUP:
        return AnimalGroupModel(n, p["attraction_radius"], p["repulsion_radius"], p["attraction_strength"],
                                p["repulsion_strength"], neighbours=signal)
    return CustomSwitchingModel([np.array(member) for member in p["family"]], signal, n)


def initial_state(scenario: Scenario) -> Tuple[np.ndarray, float]:
    """
    Initial state and diagnostic offset.

    The offset comes from shift_to_positive with initial.shift_margin, or with
    DEFAULT_SHIFT_MARGIN when the state has a nonpositive entry.
    """
    spec = scenario.initial
    n = scenario.model.n
    if spec.x0 is not None:
        x0 = np.array(spec.x0)
        target: Any = x0
    else:
        box = Box(spec.low, spec.high, n)
        x0 = box.sample(1, np.random.default_rng(derive_seed(scenario.seed, "initial")))[0]
        target = box
    margin = spec.shift_margin
    if margin is None and x0.min() <= 0:
        margin = DEFAULT_SHIFT_MARGIN
        logger.info("initial state has nonpositive entries; shifting diagnostics by margin %g", margin)
    if margin is None:
        return x0, 0.0
    alpha, _ = shift_to_positive(target, margin)
    return x0, alpha


@dataclass
class TransitionCheck:
    """
    Transition-factor contract on one checkpoint interval.

    endpoint_matches compares the factor's own stepping with the trajectory
    bit for bit; product_error is max |P x(t_k) - x(t_k1)| scaled by
    max(1, max |x(t_k1)|), which exercises P itself.
    """
    interval: Tuple[float, float]
    row_sum_error: float
    min_entry: float
    endpoint_matches: bool
    product_error: float
    lower_bound_holds: bool

    @property
    def passed(self) -> bool:
        return self.row_sum_error <= 1e-8 and self.min_entry >= 0.0 and self.endpoint_matches \
            and self.product_error <= PRODUCT_TOL and self.lower_bound_holds


@dataclass
class RunMetadata:
    """Provenance of one run; the only artifact that carries wall-clock time."""
    scenario_hash: str
    tool_version: str
    resolved: Dict[str, Any]
    wall_clock: float
    verdicts: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class RunResult:
    scenario: Scenario
    model: SystemModel
    signal: Optional[SwitchingSignal]
    trajectory: Trajectory
    metadata: RunMetadata
    report: Optional[ConsensusReport] = None
    bound_report: Optional[AccumulatedBoundReport] = None
    transition_checks: List[TransitionCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Consensus reached and every declared check passed."""
        if self.report is None or not self.report.reached_consensus:
            return False
        if self.bound_report is not None and not self.bound_report.passed:
            return False
        return all(check.passed for check in self.transition_checks)


def simulate_scenario(scenario: Scenario) -> RunResult:
    """Build and integrate the scenario's model; checkpoints lie on the integration grid."""
    started = time.perf_counter()
    signal = build_topology(scenario)
    model = build_model(scenario, signal)
    x0, offset = initial_state(scenario)
    trajectory = simulate(model, x0, scenario.t0, scenario.t_end, scenario.integrator.h,
                          scenario.integrator.scheme, scenario.integrator.strict, offset,
                          extra_breakpoints=scenario.checkpoints().times)
    metadata = RunMetadata(scenario.hash, __version__, scenario.resolved(), time.perf_counter() - started)
    return RunResult(scenario, model, signal, trajectory, metadata)


def _product_error(P: np.ndarray, start: np.ndarray, end: np.ndarray) -> float:
    scale = max(1.0, float(np.abs(end).max()))
    return float(np.abs(P @ start - end).max()) / scale


def _transition_checks(model: SystemModel, trajectory: Trajectory, checkpoints: CheckpointSequence,
                       strict: bool) -> List[TransitionCheck]:
    checks = []
    for t1, t2 in checkpoints.intervals():
        first = int(np.searchsorted(trajectory.times, t1))
        last = int(np.searchsorted(trajectory.times, t2))
        grid = trajectory.times[first:last + 1]
        factor = factorize_transition(model, grid[0], grid[-1], trajectory.states[first], len(grid) - 1,
                                      strict=strict, grid=grid)
        checks.append(TransitionCheck(
            interval=(t1, t2),
            row_sum_error=float(np.abs(factor.P.sum(axis=1) - 1.0).max()),
            min_entry=float(factor.P.min()),
            endpoint_matches=bool(np.array_equal(factor.endpoint, trajectory.states[last])),
            product_error=_product_error(factor.P, trajectory.states[first], trajectory.states[last]),
            lower_bound_holds=lower_bound_transition(factor, factor.accumulated, factor.lambda_shift,
                                                     grid=factor.times),
        ))
    return checks


def certify_scenario(scenario: Scenario, trajectory: Optional[Trajectory] = None) -> RunResult:
    """
    Simulate (unless a trajectory is given) and certify the scenario.

    Runs verify_accumulated_lower_bound when certification.bound_edges is
    declared and the transition-factor contract when transition_check is set.
    Both need the model, so a supplied trajectory must come from the same scenario.
    """
    started = time.perf_counter()
    if trajectory is None:
        result = simulate_scenario(scenario)
    else:
        signal = build_topology(scenario)
        metadata = RunMetadata(scenario.hash, __version__, scenario.resolved(), 0.0)
        result = RunResult(scenario, build_model(scenario, signal), signal, trajectory, metadata)
    spec = scenario.certification
    result.report = certify_consensus(result.trajectory, spec.fit_window_fraction, spec.residual_tol)
    checkpoints = scenario.checkpoints()
    if spec.bound_edges is not None:
        bound = graph_of_edges(scenario.model.n, spec.bound_edges)
        result.bound_report = verify_accumulated_lower_bound(
            result.model, result.trajectory, checkpoints, bound, mode=spec.mode, resolution=spec.resolution,
            seed=derive_seed(scenario.seed or 0, "verification"))
    if spec.transition_check:
        result.transition_checks = _transition_checks(result.model, result.trajectory, checkpoints,
                                                      scenario.integrator.strict)

    verdicts: Dict[str, Any] = {"consensus": result.report.verdict.value, "rate_lambda": result.report.rate_lambda}
    if result.bound_report is not None:
        verdicts["lower_bound"] = result.bound_report.label
    if result.transition_checks:
        verdicts["transition"] = all(check.passed for check in result.transition_checks)
    result.metadata.verdicts = verdicts
    result.metadata.wall_clock += time.perf_counter() - started
    return result


@dataclass
class SweepRow:
    value: Any
    verdict: str
    rate_lambda: float
    spread_final: float
    error: Optional[str] = None


def _sweep_point(raw: Dict[str, Any], lines: Dict[str, int], source: Optional[str], path: str,
                 value: Any) -> SweepRow:
    scenario = Scenario.from_dict(set_path(raw, path, value, lines, source), lines, source)
    try:
        report = certify_scenario(scenario).report
    except ConsensusToolError as exc:
        return SweepRow(value, "error", math.nan, math.nan, str(exc))
    return SweepRow(value, report.verdict.value, report.rate_lambda, report.spread_final)


def sweep(scenario: Scenario, path: str, values: Sequence[Any], n_jobs: int = 1) -> List[SweepRow]:
    """
    Certify one scenario instance per value of the dotted parameter path.

    Raises:
        ScenarioError: If path is not addressable or a value fails validation
    """
    set_path(scenario.raw, path, None, scenario.lines, scenario.source)
    for value in values:
        # validate every instance before fanning out
        scenario.with_override(path, value)
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_sweep_point)(scenario.raw, scenario.lines, scenario.source, path, value) for value in values)
    logger.info("sweep over %s: %d runs", path, len(rows))
    return list(rows)
