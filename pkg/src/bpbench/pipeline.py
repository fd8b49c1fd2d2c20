"""One-record analysis: preprocess, run both estimators, collect outcomes."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .errors import BpbenchError
from .frontend import PPG_BAND, BandpassSpec, FilterRealization, apply_filter, design_bandpass
from .oscillometric import CcfConfig, CcfTrack, correlation_track, detect_bp_oscillometric
from .results import BpResult
from .signals import SampledSignal
from .simulator import MeasurementRecord
from .tacho import OscEnvelope, TachoConfig, build_envelope, detect_bp_tacho, extract_oscillations


@lru_cache(maxsize=32)
def _bandpass(spec: BandpassSpec, sample_rate_hz: float) -> FilterRealization:
    return design_bandpass(spec, sample_rate_hz)


def preprocess_ppg(sig: SampledSignal, band: BandpassSpec = PPG_BAND) -> SampledSignal:
    """Clean a raw PPG channel down to its pulsatile band.

    Removes DC level, baseline wander below the band and broadband noise
    above it; the result carries the filter settling metadata used by
    the estimators to skip the warm-up region.
    """
    return apply_filter(_bandpass(band, sig.sample_rate_hz), sig)


@dataclass(frozen=True)
class AnalysisOutcome:
    """Results of both estimators on one record, failures included.

    A failed method leaves its result ``None`` and stores the failure
    class name in the corresponding error field; intermediate products
    (correlation track, oscillation envelope) are kept whenever they
    could be built, so failures can still be plotted and inspected.
    """

    osc_result: BpResult | None = None
    osc_error: str = ""
    tacho_result: BpResult | None = None
    tacho_error: str = ""
    track: CcfTrack | None = None
    envelope: OscEnvelope | None = None


def analyze_record(
    record: MeasurementRecord,
    ccf_config: CcfConfig | None = None,
    tacho_config: TachoConfig | None = None,
) -> AnalysisOutcome:
    """Run the reference-correlation and cuff-oscillation estimators.

    Never raises for per-method detection problems; those end up on the
    outcome. Programming errors and invalid configuration still raise.
    """
    osc_result = None
    osc_error = ""
    track = None
    try:
        main_f = preprocess_ppg(record.main)
        ref_f = preprocess_ppg(record.ref)
        track = correlation_track(main_f, ref_f, record.cuff, ccf_config)
        osc_result = detect_bp_oscillometric(track, record.cuff, ccf_config)
    except BpbenchError as exc:
        osc_error = type(exc).__name__

    tacho_result = None
    tacho_error = ""
    envelope = None
    try:
        cfg = tacho_config or TachoConfig()
        osc_sig = extract_oscillations(record.cuff, cfg.band)
        envelope = build_envelope(osc_sig, record.cuff, cfg)
        tacho_result = detect_bp_tacho(envelope, cfg)
    except BpbenchError as exc:
        tacho_error = type(exc).__name__

    return AnalysisOutcome(
        osc_result=osc_result,
        osc_error=osc_error,
        tacho_result=tacho_result,
        tacho_error=tacho_error,
        track=track,
        envelope=envelope,
    )


def _result_dict(res: BpResult | None, error: str) -> dict:
    if res is None:
        return {"ok": False, "error": error}
    return {
        "ok": True,
        "sbp_mmhg": res.sbp_mmhg,
        "dbp_mmhg": res.dbp_mmhg,
        "t_sys_s": res.t_sys_s,
        "t_dias_s": res.t_dias_s,
        "quality": {
            "transient_excluded": res.quality.transient_excluded,
            "extrapolated": res.quality.extrapolated,
            "low_signal": res.quality.low_signal,
            "recrossings": res.quality.recrossings,
        },
    }


def outcome_as_dict(outcome: AnalysisOutcome, record: MeasurementRecord | None = None) -> dict:
    """JSON-ready view of an analysis, with truth deviations when known."""
    out = {
        "oscillometric": _result_dict(outcome.osc_result, outcome.osc_error),
        "tacho": _result_dict(outcome.tacho_result, outcome.tacho_error),
    }
    if record is not None:
        truth = {"sbp_mmhg": record.truth.sbp_mmhg, "dbp_mmhg": record.truth.dbp_mmhg}
        out["truth"] = truth
        for key, res in (("oscillometric", outcome.osc_result), ("tacho", outcome.tacho_result)):
            if res is not None:
                out[key]["sbp_dev_mmhg"] = res.sbp_mmhg - record.truth.sbp_mmhg
                out[key]["dbp_dev_mmhg"] = res.dbp_mmhg - record.truth.dbp_mmhg
    return out
