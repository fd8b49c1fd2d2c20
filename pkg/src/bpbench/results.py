"""Result container shared by both blood-pressure estimators."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidPressurePair

#: estimator identifiers used in results and reports
METHOD_OSCILLOMETRIC = "oscillometric"
METHOD_TACHO = "tacho"


@dataclass(frozen=True)
class BpQuality:
    """Flags describing how much the estimator had to work around.

    transient_excluded
        Early samples inside a filter settling region were dropped.
    extrapolated
        A threshold crossing had to be clamped at the edge of the data
        instead of being bracketed by two points.
    low_signal
        Non-pulsatile stretches were found where pulsation was expected.
    recrossings
        How many times the detection statistic re-crossed its first
        threshold after the accepted crossing (artifact indicator).
    """

    transient_excluded: bool = False
    extrapolated: bool = False
    low_signal: bool = False
    recrossings: int = 0


@dataclass(frozen=True)
class BpResult:
    """One systolic/diastolic estimate with its provenance.

    ``t_sys_s`` and ``t_dias_s`` are the times during deflation at which
    the method's systolic and diastolic criteria fired; the pressures are
    the cuff readings at those times.
    """

    sbp_mmhg: float
    dbp_mmhg: float
    t_sys_s: float
    t_dias_s: float
    method: str
    quality: BpQuality = field(default_factory=BpQuality)

    def __post_init__(self) -> None:
        if not (self.sbp_mmhg > self.dbp_mmhg > 0.0):
            raise InvalidPressurePair(
                f"need sbp > dbp > 0, got sbp={self.sbp_mmhg:.2f} dbp={self.dbp_mmhg:.2f}"
            )
        if not self.t_sys_s < self.t_dias_s:
            raise InvalidPressurePair(
                f"systolic event must precede diastolic: {self.t_sys_s} vs {self.t_dias_s}"
            )
