"""
Hilbert Consensus

Simulation and certification of consensus in nonlinear multi-agent systems
x' = A(t, x) x with Metzler, zero-row-sum A, measured in Hilbert's projective
metric.

Example usage:
    >>> import numpy as np
    >>> from hilbert_consensus import LTVModel, simulate, certify_consensus
    >>>
    >>> # x1' = 0, x2' = x1 - x2
    >>> model = LTVModel(np.array([[0.0, 0.0], [1.0, -1.0]]))
    >>> traj = simulate(model, [1.0, 2.0], 0.0, 10.0, h=0.01)
    >>>
    >>> report = certify_consensus(traj)
    >>> print(report.verdict, report.rate_lambda)
"""

__version__ = "1.0.0"

from .errors import (
    ConsensusToolError,
    CoverageError,
    DimensionMismatchError,
    DomainError,
    GridMismatchError,
    MetzlerViolationError,
    NotCertifiableError,
    ParameterError,
    ScenarioError,
    StepSizeError,
)

from .hilbert import (
    Cone,
    DiameterBounds,
    NormMetricBounds,
    an_bn,
    box_floor,
    box_vertex_rays,
    comparison_constant,
    cone_diameter,
    cone_membership,
    contraction_constant,
    diameter_linear_bounds,
    distance_to_consensus,
    extreme_rays,
    hilbert_distance,
    minimal_gamma,
    norm_metric_bounds,
    pairwise_hilbert,
    sample_box_rays,
    sample_cone_rays,
)

from .graph import (
    ConnectivityCertificate,
    ConnectivityKind,
    WeightedDigraph,
    accumulate,
    digraph_of_metzler,
    graph_geq,
    is_delta_connected,
    is_qsc,
    is_single_hop,
    metzler_of_digraph,
    power_delta_bound,
    union,
    validate_metzler,
)

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
    ShiftedModel,
    SystemModel,
    Trajectory,
    TransitionFactor,
    evaluate_model,
    factorize_transition,
    integrate_positions,
    internal_dynamics_transform,
    lower_bound_transition,
    shift_to_positive,
    simulate,
    step,
    time_grid,
)

from .topology import (
    AccumulatedBoundReport,
    ChainActivationConfig,
    CheckpointSequence,
    SwitchingSignal,
    accumulate_along,
    chain_random_activation,
    dwell_time_signal,
    periodic_signal,
    verify_accumulated_lower_bound,
)

from .analysis import (
    ConsensusReport,
    ConsensusVerdict,
    certify_consensus,
    metric_norm_consistency,
    two_cone_demo,
    verify_cone_diameter,
    verify_diameter_decay,
    verify_lemma_contraction,
    verify_sandwich,
)

from .parser import (
    parse_scenario_dict,
    parse_scenario_file,
    read_graph_snapshot,
    read_signal_trace,
    read_trajectory_csv,
    write_graph_snapshot,
    write_signal_trace,
    write_trajectory_csv,
)

from .scenario import (
    RunMetadata,
    RunResult,
    Scenario,
    certify_scenario,
    simulate_scenario,
    sweep,
)

__all__ = [
    "ConsensusToolError",
    "CoverageError",
    "DimensionMismatchError",
    "DomainError",
    "GridMismatchError",
    "MetzlerViolationError",
    "NotCertifiableError",
    "ParameterError",
    "ScenarioError",
    "StepSizeError",
    "Cone",
    "DiameterBounds",
    "NormMetricBounds",
    "an_bn",
    "box_floor",
    "box_vertex_rays",
    "comparison_constant",
    "cone_diameter",
    "cone_membership",
    "contraction_constant",
    "diameter_linear_bounds",
    "distance_to_consensus",
    "extreme_rays",
    "hilbert_distance",
    "minimal_gamma",
    "norm_metric_bounds",
    "pairwise_hilbert",
    "sample_box_rays",
    "sample_cone_rays",
    "ConnectivityCertificate",
    "ConnectivityKind",
    "WeightedDigraph",
    "accumulate",
    "digraph_of_metzler",
    "graph_geq",
    "is_delta_connected",
    "is_qsc",
    "is_single_hop",
    "metzler_of_digraph",
    "power_delta_bound",
    "union",
    "validate_metzler",
    "AnimalGroupModel",
    "Box",
    "CuckerSmaleVelocityModel",
    "CustomSwitchingModel",
    "HegselmannKrauseModel",
    "KuramotoModel",
    "LTVModel",
    "ModelKind",
    "Scheme",
    "ShiftedModel",
    "SystemModel",
    "Trajectory",
    "TransitionFactor",
    "evaluate_model",
    "factorize_transition",
    "integrate_positions",
    "internal_dynamics_transform",
    "lower_bound_transition",
    "shift_to_positive",
    "simulate",
    "step",
    "time_grid",
    "AccumulatedBoundReport",
    "ChainActivationConfig",
    "CheckpointSequence",
    "SwitchingSignal",
    "accumulate_along",
    "chain_random_activation",
    "dwell_time_signal",
    "periodic_signal",
    "verify_accumulated_lower_bound",
    "ConsensusReport",
    "ConsensusVerdict",
    "certify_consensus",
    "metric_norm_consistency",
    "two_cone_demo",
    "verify_cone_diameter",
    "verify_diameter_decay",
    "verify_lemma_contraction",
    "verify_sandwich",
    "parse_scenario_dict",
    "parse_scenario_file",
    "read_graph_snapshot",
    "read_signal_trace",
    "read_trajectory_csv",
    "write_graph_snapshot",
    "write_signal_trace",
    "write_trajectory_csv",
    "RunMetadata",
    "RunResult",
    "Scenario",
    "certify_scenario",
    "simulate_scenario",
    "sweep",
]
