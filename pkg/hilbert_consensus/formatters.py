"""
Output formatting for consensus runs and verification suites.

Text reports are fixed-width tables for the terminal and the report file;
report_document builds the JSON-compatible form of a run. Neither carries
wall-clock time, so reruns produce identical bytes.
"""

import json
import math
from typing import Any, Dict, List, Optional, Sequence

from .analysis import (
    ConeDiameterReport,
    ConsensusReport,
    ContractionReport,
    DiameterDecayReport,
    SandwichReport,
    TwoConeReport,
)
from .graph import ConnectivityCertificate
from .topology import AccumulatedBoundReport


def _num(value: Optional[float], spec: str = ".6g") -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return format(value, spec)


def format_certificate(certificate: Optional[ConnectivityCertificate]) -> str:
    if certificate is None:
        return "not QSC"
    return f"{certificate.kind.value}, center {certificate.center}, margin {_num(certificate.margin)}"


def format_consensus_report(report: ConsensusReport, name: str = "", scenario_hash: Optional[str] = None) -> str:
    """
    Format a consensus verdict with its fit.

    Args:
        report: Result of certify_consensus
        name: Scenario name for the title
        scenario_hash: Embedded in the header when given

    Returns:
        Formatted report
    """
    lines = []
    lines.append(f"Consensus Report{': ' + name if name else ''}")
    lines.append("=" * 80)
    if scenario_hash:
        lines.append(f"{'Scenario hash':<22} {scenario_hash}")
    lines.append(f"{'Verdict':<22} {report.verdict.value}")
    lines.append(f"{'Rate lambda':<22} {_num(report.rate_lambda)}")
    lines.append(f"{'Prefactor K':<22} {_num(report.prefactor_K)}")
    lines.append(f"{'Fit residual (1-r^2)':<22} {_num(report.fit_residual, '.3e')}")
    lines.append(f"{'Spread rate':<22} {_num(report.spread_rate)}")
    lines.append(f"{'Fit window':<22} [{_num(report.window[0])}, {_num(report.window[1])}] ({report.samples} samples)")
    lines.append(f"{'Spread initial':<22} {_num(report.spread_initial, '.6e')}")
    lines.append(f"{'Spread final':<22} {_num(report.spread_final, '.6e')}")
    lines.append(f"{'Method':<22} {report.method}")
    lines.append("")
    return "\n".join(lines)


def format_bound_report(report: AccumulatedBoundReport) -> str:
    """Per-interval margins of the accumulated lower-bound check."""
    lines = []
    lines.append(f"Accumulated Lower Bound ({report.mode})")
    lines.append("-" * 80)
    lines.append(f"Bound B: {format_certificate(report.bound_certificate)}")
    if report.mode == "sampled":
        lines.append(f"Frozen states per interval: {report.points}")
    lines.append(f"{'Interval':<28} {'Margin':>14} {'Entry':>10} {'Status':>8}")
    for item in report.intervals:
        interval = f"[{_num(item.interval[0])}, {_num(item.interval[1])}]"
        entry = f"({item.entry[0]}, {item.entry[1]})" if item.entry else "-"
        status = "ok" if item.passed else "FAIL"
        lines.append(f"{interval:<28} {_num(item.margin, '.6e'):>14} {entry:>10} {status:>8}")
    binding = report.binding
    lines.append("-" * 80)
    lines.append(f"Result: {report.label}; binding interval [{_num(binding.interval[0])}, "
                 f"{_num(binding.interval[1])}] margin {_num(binding.margin, '.6e')}")
    lines.append("")
    return "\n".join(lines)


def format_transition_checks(checks: Sequence[Any]) -> str:
    """Row sums, minimum entry, endpoint agreement, product error and lower bound per checkpoint interval."""
    lines = []
    lines.append("Transition Factors")
    lines.append("-" * 80)
    lines.append(f"{'Interval':<28} {'|P1 - 1|':>12} {'min P':>12} {'Endpoint':>9} {'|Px - x|':>10} {'Bound':>7}")
    for check in checks:
        interval = f"[{_num(check.interval[0])}, {_num(check.interval[1])}]"
        lines.append(f"{interval:<28} {_num(check.row_sum_error, '.3e'):>12} {_num(check.min_entry, '.3e'):>12} "
                     f"{'exact' if check.endpoint_matches else 'DIFF':>9} {_num(check.product_error, '.2e'):>10} "
                     f"{'ok' if check.lower_bound_holds else 'FAIL':>7}")
    lines.append("")
    return "\n".join(lines)


def format_run_report(result) -> str:
    """Full certification report of a scenario run (consensus, bound, transitions)."""
    sections = [format_consensus_report(result.report, result.scenario.name, result.metadata.scenario_hash)]
    if result.bound_report is not None:
        sections.append(format_bound_report(result.bound_report))
    if result.transition_checks:
        sections.append(format_transition_checks(result.transition_checks))
    sections.append(f"Overall: {'PASS' if result.passed else 'FAIL'}\n")
    return "\n".join(sections)


def format_contraction_reports(reports: Sequence[ContractionReport]) -> str:
    """Table of cone-inclusion checks, one row per (n, delta, epsilon)."""
    lines = []
    lines.append("Cone Contraction")
    lines.append("=" * 80)
    lines.append(f"{'n':>3} {'delta':>7} {'epsilon':>9} {'C':>10} {'C observed':>11} {'K(eps) obs.':>12} "
                 f"{'samples':>8} {'viol.':>6}")
    lines.append("-" * 80)
    for r in reports:
        lines.append(f"{r.n:>3} {r.delta:>7.3g} {r.epsilon:>9.4g} {r.C_theoretical:>10.6f} "
                     f"{r.C_observed:>11.6f} {r.C_cone_observed:>12.6f} {r.samples:>8} {r.violations:>6}")
    lines.append("-" * 80)
    lines.append(f"Violations: {sum(r.violations for r in reports)}")
    lines.append("")
    return "\n".join(lines)


def format_diameter_reports(cones: Sequence[ConeDiameterReport], decay: Sequence[DiameterDecayReport]) -> str:
    lines = []
    lines.append("Cone Diameter")
    lines.append("=" * 80)
    lines.append(f"{'n':>3} {'gamma':>7} {'sampled':>12} {'formula':>12} {'gap':>10} {'status':>7}")
    for r in cones:
        lines.append(f"{r.n:>3} {r.gamma:>7.3g} {r.estimate:>12.6f} {r.formula:>12.6f} {r.relative_gap:>10.2%} "
                     f"{'ok' if r.passed else 'FAIL':>7}")
    for report in decay:
        lines.append("")
        lines.append(f"Diameter decay: epsilon={_num(report.epsilon)} delta={_num(report.delta)} "
                     f"C={_num(report.C)} c={_num(report.c)} eta={_num(report.eta)}")
        lines.append(f"{'m':>4} {'estimate':>14} {'c^m alpha':>14} {'alpha(C^m eps)':>15}")
        for row in report.rows:
            lines.append(f"{row.m:>4} {row.estimate:>14.6e} {row.bound:>14.6e} {row.cone_bound:>15.6e}"
                         f"{'' if row.passed else '  FAIL'}")
    lines.append("")
    return "\n".join(lines)


def format_sandwich_reports(reports: Sequence[SandwichReport], sizes: Sequence[int]) -> str:
    lines = []
    lines.append("A_n / B_n Sandwich")
    lines.append("=" * 80)
    lines.append(f"{'n':>3} {'draws':>8} {'viol.':>6} {'min lower slack':>16} {'min upper slack':>16}")
    for n, r in zip(sizes, reports):
        lines.append(f"{n:>3} {r.steps:>8} {r.sandwich_violations:>6} {r.worst_lower_slack:>16.6e} "
                     f"{r.worst_upper_slack:>16.6e}")
    lines.append("")
    return "\n".join(lines)


def format_two_cone_report(report: TwoConeReport) -> str:
    lines = []
    lines.append("Two-Agent Cone Demo: x1' = 0, x2' = x1 - x2")
    lines.append("=" * 80)
    lines.append(f"Boundary ray (0, 1) stays on the boundary: {'yes' if report.boundary_preserved else 'no'}")
    lines.append(f"Consensus (1, 1) fixed: {'yes' if report.consensus_fixed else 'no'}")
    lines.append(f"{'gamma':>8} {'image gamma at t=' + _num(report.horizon):>22} {'contracts':>10}")
    for gamma, image in report.cone_images:
        lines.append(f"{gamma:>8.4g} {image:>22.6f} {'yes' if image < gamma else 'no':>10}")
    lines.append("")
    return "\n".join(lines)


def format_sweep_table(path: str, rows: Sequence[Any]) -> str:
    """Table of (value, verdict, rate) rows of a parameter sweep."""
    lines = []
    lines.append(f"Sweep over {path}")
    lines.append("=" * 80)
    lines.append(f"{'Value':<16} {'Verdict':<12} {'Rate lambda':>14} {'Spread final':>14}")
    lines.append("-" * 80)
    for row in rows:
        lines.append(f"{str(row.value):<16} {row.verdict:<12} {_num(row.rate_lambda):>14} "
                     f"{_num(row.spread_final, '.3e'):>14}")
        if row.error:
            lines.append(f"  {row.error}")
    lines.append("")
    return "\n".join(lines)


def report_document(result) -> Dict[str, Any]:
    """JSON-compatible document of a certified run, without wall-clock time."""
    report: ConsensusReport = result.report
    document: Dict[str, Any] = {
        "scenario": result.scenario.name,
        "scenario_hash": result.metadata.scenario_hash,
        "tool_version": result.metadata.tool_version,
        "consensus": {
            "verdict": report.verdict.value,
            "rate_lambda": report.rate_lambda,
            "prefactor_K": report.prefactor_K,
            "fit_residual": report.fit_residual,
            "spread_initial": report.spread_initial,
            "spread_final": report.spread_final,
            "spread_rate": report.spread_rate,
            "window": list(report.window),
            "samples": report.samples,
            "method": report.method,
        },
        "passed": result.passed,
    }
    if result.bound_report is not None:
        bound = result.bound_report
        certificate = bound.bound_certificate
        document["lower_bound"] = {
            "mode": bound.mode,
            "result": bound.label,
            "bound_center": certificate.center if certificate else None,
            "intervals": [{"interval": list(item.interval), "margin": item.margin,
                           "entry": list(item.entry) if item.entry else None} for item in bound.intervals],
        }
    if result.transition_checks:
        document["transition"] = [
            {"interval": list(c.interval), "row_sum_error": c.row_sum_error, "min_entry": c.min_entry,
             "endpoint_matches": c.endpoint_matches, "product_error": c.product_error,
             "lower_bound_holds": c.lower_bound_holds}
            for c in result.transition_checks]
    return document


def format_json(document: Any) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + "\n"
