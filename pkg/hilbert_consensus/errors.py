"""
Exception hierarchy for the consensus toolkit.

Every error derives from ValueError as well as ConsensusToolError, so callers
that only catch ValueError for bad input keep working.
"""

from typing import Optional


class ConsensusToolError(Exception):
    """Base class for all errors raised by hilbert_consensus."""


class DimensionMismatchError(ConsensusToolError, ValueError):
    """Two operands do not have the same number of agents."""


class ParameterError(ConsensusToolError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class MetzlerViolationError(ConsensusToolError, ValueError):
    """
    A model evaluation broke the Metzler contract.

    Attributes:
        t: Time of the offending evaluation
        i: Row index of the offending entry
        j: Column index of the offending entry
        value: Offending entry (negative off-diagonal or row-sum residual)
    """

    def __init__(self, t: float, i: int, j: int, value: float, reason: str = "negative off-diagonal entry"):
        self.t = t
        self.i = i
        self.j = j
        self.value = value
        super().__init__(f"{reason} at t={t:.17g}, (i, j)=({i}, {j}): {value:.6g}")


class DomainError(ConsensusToolError, ValueError):
    """The state left the domain on which a model keeps its Metzler form."""


class StepSizeError(ConsensusToolError, ValueError):
    """An Euler step would break positivity of the transition factor (h*lambda too large)."""


class NotCertifiableError(ConsensusToolError, ValueError):
    """The model cannot enter Metzler-based certification."""


class CoverageError(ConsensusToolError, ValueError):
    """Samples or a trajectory do not cover the requested time interval."""


class GridMismatchError(ConsensusToolError, ValueError):
    """Two quantities were computed on different integration grids."""


class ScenarioError(ConsensusToolError, ValueError):
    """
    Invalid scenario configuration.

    Attributes:
        line: 1-based line of the offending key in the scenario file, if known
        source: Path of the scenario file, if known
    """

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        self.detail = message
        location = ""
        if source is not None:
            location = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")
