"""Cuff blood-pressure estimation testbench.

Simulates cuff measurements with exact ground truth and compares two
automatic estimation methods on them: reference-channel correlation
tracking and cuff-oscillation envelope analysis.
"""

from .errors import (
    AlignmentError,
    BpbenchError,
    ConfigInvalid,
    DegenerateSegment,
    EmptySignal,
    FormatError,
    InsufficientData,
    InvalidCutoff,
    InvalidParams,
    InvalidPressurePair,
    InvalidRate,
    MissingCrossing,
    NoOcclusionObserved,
    NoRecoveryObserved,
    NoUniquePeak,
    ProtocolViolation,
    RateMismatch,
    RateTooLow,
    TimeOutOfRange,
    TooFewBeats,
    UnrealizableSpec,
    WindowOutOfRange,
)
from .experiment import (
    ExperimentConfig,
    ExperimentResult,
    config_from_dict,
    config_from_json,
    config_to_dict,
    default_subject_grid,
    run_experiment,
)
from .frontend import (
    OSC_BAND,
    PPG_BAND,
    BandpassSpec,
    FilterRealization,
    apply_filter,
    design_bandpass,
    design_lowpass2,
    frequency_response,
    measure_tone_gain,
    modulate_carrier,
    synchronous_demodulate,
)
from .oscillometric import (
    CcfConfig,
    CcfCurve,
    CcfTrack,
    correlation_track,
    detect_bp_oscillometric,
    normalized_ccf,
)
from .pipeline import AnalysisOutcome, analyze_record, preprocess_ppg
from .report import emit_report
from .results import BpQuality, BpResult
from .signals import (
    CuffTrace,
    SampledSignal,
    Window,
    interpolate_at,
    load_signal_csv,
    moving_average,
    remove_mean,
    resample,
    save_signal_csv,
    slice_signal,
)
from .simulator import (
    ArtifactSpec,
    KorotkoffMarkers,
    MeasurementRecord,
    ProtocolParams,
    SubjectParams,
    cuff_oscillation_amplitude,
    export_record,
    frontend_pass,
    load_record,
    occlusion_transfer,
    pulse_waveform,
    simulate_measurement,
)
from .tacho import (
    OscEnvelope,
    TachoConfig,
    build_envelope,
    detect_bp_tacho,
    extract_oscillations,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "AnalysisOutcome",
    "ArtifactSpec",
    "BandpassSpec",
    "BpQuality",
    "BpResult",
    "BpbenchError",
    "CcfConfig",
    "CcfCurve",
    "CcfTrack",
    "ConfigInvalid",
    "CuffTrace",
    "DegenerateSegment",
    "EmptySignal",
    "ExperimentConfig",
    "ExperimentResult",
    "FilterRealization",
    "FormatError",
    "InsufficientData",
    "InvalidCutoff",
    "InvalidParams",
    "InvalidPressurePair",
    "InvalidRate",
    "KorotkoffMarkers",
    "MeasurementRecord",
    "MissingCrossing",
    "NoOcclusionObserved",
    "NoRecoveryObserved",
    "NoUniquePeak",
    "OSC_BAND",
    "OscEnvelope",
    "PPG_BAND",
    "ProtocolParams",
    "ProtocolViolation",
    "RateMismatch",
    "RateTooLow",
    "SampledSignal",
    "SubjectParams",
    "TachoConfig",
    "TimeOutOfRange",
    "TooFewBeats",
    "UnrealizableSpec",
    "Window",
    "WindowOutOfRange",
    "analyze_record",
    "apply_filter",
    "build_envelope",
    "config_from_dict",
    "config_from_json",
    "config_to_dict",
    "correlation_track",
    "cuff_oscillation_amplitude",
    "default_subject_grid",
    "design_bandpass",
    "design_lowpass2",
    "detect_bp_oscillometric",
    "detect_bp_tacho",
    "emit_report",
    "export_record",
    "extract_oscillations",
    "frequency_response",
    "frontend_pass",
    "interpolate_at",
    "load_record",
    "load_signal_csv",
    "measure_tone_gain",
    "modulate_carrier",
    "moving_average",
    "normalized_ccf",
    "occlusion_transfer",
    "preprocess_ppg",
    "pulse_waveform",
    "remove_mean",
    "resample",
    "run_experiment",
    "save_signal_csv",
    "simulate_measurement",
    "slice_signal",
    "synchronous_demodulate",
]
