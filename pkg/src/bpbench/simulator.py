"""Synthetic cuff measurements with exact ground truth.

Everything downstream is judged against this model, so it is built from
closed-form pieces whose behaviour at the blood-pressure landmarks is
known exactly:

* a band-limited periodic pulse waveform (sum of two raised cosines,
  projected onto a finite harmonic series),
* an occlusion transfer that attenuates, delays and reshapes the distal
  pulse as cuff pressure moves through the systolic-diastolic band,
* a pressure-dependent oscillation amplitude coupled into the cuff,
* optional artifact processes (motion spikes, baseline wander) and
  additive broadband sensor noise.

All randomness flows from one integer seed through independent
substreams, so a record is a pure function of its parameters.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import special

from .errors import FormatError, InvalidParams, ProtocolViolation
from .frontend import CARRIER_HZ, CARRIER_RATE_HZ, modulate_carrier, synchronous_demodulate
from .signals import (
    WORKING_RATE_HZ,
    CuffTrace,
    SampledSignal,
    load_signal_csv,
    save_signal_csv,
)

#: pulse harmonics are kept strictly below this frequency
PULSE_BAND_LIMIT_HZ = 15.0
#: steepness warp of the reopening gain; 1 would be a plain S-curve,
#: smaller values steepen the take-off at both pressure ends so the
#: emerging pulse clears the measurement noise within a couple of mmHg
GAIN_STEEPNESS = 0.15
#: waveform similarity to the free pulse at full occlusion
SHAPE_FLOOR = 0.05
#: end exponents of the similarity rise (regularized incomplete beta)
SHAPE_RISE_A = 0.50
SHAPE_RISE_B = 0.20
#: cuff oscillation peak amplitude at mean arterial pressure
OSC_PEAK_MMHG = 2.0
#: oscillation amplitude ratio anchored at diastolic pressure (low side)
OSC_DIAS_RATIO = 0.85
#: oscillation amplitude ratio anchored at systolic pressure (high side)
OSC_SYS_RATIO = 0.60
#: decay scale of the supra-systolic oscillation tail
OSC_TAIL_SIGMA_MMHG = 4.5
#: duration of one motion spike bump
SPIKE_DURATION_S = 0.3
#: mechanical coupling of a unit-magnitude motion spike into the cuff;
#: arm motion shakes the bladder directly, so these excursions dwarf
#: the physiological oscillation ripple
SPIKE_CUFF_COUPLING_MMHG = 2.5
#: baseline wander frequency (slow respiratory-like drift)
WANDER_FREQ_HZ = 0.2

ARTIFACT_KINDS = ("motion_spike", "baseline_wander")
ARTIFACT_TARGETS = ("main_only", "both_in_phase")


@dataclass(frozen=True)
class SubjectParams:
    """Ground-truth physiology for one simulated arm."""

    sbp_mmhg: float
    dbp_mmhg: float
    heart_rate_bpm: float
    ppg_amp_mv: float = 1.0
    transit_delay_max_s: float = 0.15

    def __post_init__(self) -> None:
        if not 40.0 <= self.dbp_mmhg < self.sbp_mmhg <= 250.0:
            raise InvalidParams(
                f"need 40 <= dbp < sbp <= 250, got sbp={self.sbp_mmhg}, dbp={self.dbp_mmhg}"
            )
        if not 30.0 <= self.heart_rate_bpm <= 200.0:
            raise InvalidParams(f"heart rate {self.heart_rate_bpm} bpm outside [30, 200]")
        if self.ppg_amp_mv <= 0.0:
            raise InvalidParams("pulse amplitude must be positive")
        if not 0.0 <= self.transit_delay_max_s <= 1.0:
            raise InvalidParams("transit delay must lie in [0, 1] s")


@dataclass(frozen=True)
class ProtocolParams:
    """Inflate-hold-deflate-release schedule of the cuff."""

    inflate_to_mmhg: float = 160.0
    deflation_rate_mmhg_s: float = 2.0
    pre_deflation_hold_s: float = 3.0
    post_deflation_s: float = 5.0
    release_floor_offset_mmhg: float = 25.0
    sample_rate_hz: float = WORKING_RATE_HZ

    def __post_init__(self) -> None:
        if self.inflate_to_mmhg <= 0.0:
            raise InvalidParams("inflation target must be positive")
        if not 0.2 <= self.deflation_rate_mmhg_s <= 10.0:
            raise InvalidParams(
                f"deflation rate {self.deflation_rate_mmhg_s} mmHg/s outside [0.2, 10]"
            )
        if self.pre_deflation_hold_s < 0.0 or self.post_deflation_s < 0.0:
            raise InvalidParams("hold and post-release durations cannot be negative")
        if self.release_floor_offset_mmhg < 0.0:
            raise InvalidParams("release floor offset cannot be negative")
        if self.sample_rate_hz < 20.0:
            raise InvalidParams("sample rate must be at least 20 Hz")


@dataclass(frozen=True)
class ArtifactSpec:
    """One artifact process to superimpose on the measurement."""

    kind: str
    rate_per_min: float = 6.0
    magnitude: float = 1.0
    affects: str = "main_only"

    def __post_init__(self) -> None:
        if self.kind not in ARTIFACT_KINDS:
            raise InvalidParams(f"unknown artifact kind {self.kind!r}, know {ARTIFACT_KINDS}")
        if self.affects not in ARTIFACT_TARGETS:
            raise InvalidParams(f"unknown artifact target {self.affects!r}, know {ARTIFACT_TARGETS}")
        if self.rate_per_min < 0.0 or self.magnitude < 0.0:
            raise InvalidParams("artifact rate and magnitude cannot be negative")


@dataclass(frozen=True)
class KorotkoffMarkers:
    """Times at which the falling cuff pressure crosses the true values."""

    t_sbp_s: float
    t_dbp_s: float

    def __post_init__(self) -> None:
        if not self.t_sbp_s < self.t_dbp_s:
            raise InvalidParams("systolic marker must precede diastolic marker")


@dataclass(frozen=True)
class MeasurementRecord:
    """One complete simulated measurement plus its ground truth."""

    main: SampledSignal
    ref: SampledSignal
    cuff: CuffTrace
    truth: SubjectParams
    markers: KorotkoffMarkers
    protocol: ProtocolParams
    artifacts: tuple[ArtifactSpec, ...]
    noise_rms: float
    seed: int
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# pulse waveform basis


def _raised_cosine(phase: np.ndarray, center: float, width: float) -> np.ndarray:
    d = (phase - center + 0.5) % 1.0 - 0.5
    return np.where(np.abs(d) < width / 2.0, 0.5 * (1.0 + np.cos(2.0 * np.pi * d / width)), 0.0)


def _base_shape(phase: np.ndarray) -> np.ndarray:
    # systolic upstroke plus a smaller dicrotic bump later in the cycle
    return _raised_cosine(phase, 0.18, 0.28) + 0.35 * _raised_cosine(phase, 0.50, 0.45)


def _occluded_shape(phase: np.ndarray) -> np.ndarray:
    # what little couples through a nearly shut artery: a narrow,
    # flat-topped percussion snap with no dicrotic structure
    return np.minimum(_raised_cosine(phase, 0.16, 0.15), 0.75)


def harmonics_for_rate(heart_rate_bpm: float) -> int:
    """Number of harmonics that keeps every component below the band limit."""
    f0 = heart_rate_bpm / 60.0
    k = int(math.ceil(PULSE_BAND_LIMIT_HZ / f0 - 1e-9)) - 1
    return max(k, 3)


def _project(values: np.ndarray, n_harmonics: int) -> np.ndarray:
    """First Fourier coefficients of a periodic sample grid (DC dropped)."""
    n = values.size
    phase = np.arange(n) / n
    k = np.arange(1, n_harmonics + 1)
    return 2.0 / n * (values[None, :] * np.exp(-2j * np.pi * np.outer(k, phase))).sum(axis=1)


def _eval_harmonics(coeffs: np.ndarray, phase: np.ndarray) -> np.ndarray:
    k = np.arange(1, coeffs.size + 1)
    return np.exp(2j * np.pi * np.outer(np.asarray(phase, dtype=np.float64), k)).dot(coeffs).real


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    # period-mean inner product of two real harmonic series
    return 0.5 * float(np.real(np.vdot(a, b)))


@dataclass(frozen=True)
class _WaveBasis:
    w0: np.ndarray          # free pulse, zero mean, positive peak 1
    w_hat: np.ndarray       # w0 scaled to unit norm
    q_hat: np.ndarray       # unit-norm component orthogonal to w_hat
    blend_c: np.ndarray     # similarity grid for the span table
    blend_ptp: np.ndarray   # peak-to-peak span of the unit-norm blend
    w0_ptp: float


@lru_cache(maxsize=64)
def _basis(n_harmonics: int) -> _WaveBasis:
    grid = np.arange(4096) / 4096.0
    w = _project(_base_shape(grid), n_harmonics)
    w_vals = _eval_harmonics(w, grid)
    w = w / float(w_vals.max())
    w_vals = _eval_harmonics(w, grid)

    # The blend pair lives on disjoint harmonic sets: pulse body below
    # the split, percussion snap above it. Disjointness makes their
    # cross-correlation vanish at EVERY lag, so a lag-searching detector
    # sees exactly the designed similarity, not some re-aligned echo of
    # the snap. The pulse body loses only ~1e-3 of its energy.
    split = min(6, n_harmonics)
    w_low = w.copy()
    w_low[split - 1 :] = 0.0
    w_hat = w_low / math.sqrt(_inner(w_low, w_low))
    d = _project(_occluded_shape(grid), n_harmonics)
    d[: split - 1] = 0.0
    q_norm = math.sqrt(_inner(d, d))
    if q_norm < 1e-9:
        raise InvalidParams("occluded shape has no energy above the harmonic split")
    q_hat = d / q_norm

    wh_vals = _eval_harmonics(w_hat, grid)
    qh_vals = _eval_harmonics(q_hat, grid)
    cs = np.linspace(0.0, 1.0, 129)
    mix = cs[:, None] * wh_vals[None, :] + np.sqrt(1.0 - cs**2)[:, None] * qh_vals[None, :]
    ptp = mix.max(axis=1) - mix.min(axis=1)
    return _WaveBasis(
        w0=w,
        w_hat=w_hat,
        q_hat=q_hat,
        blend_c=cs,
        blend_ptp=ptp,
        w0_ptp=float(w_vals.max() - w_vals.min()),
    )


def pulse_waveform(t_s, heart_rate_bpm: float) -> np.ndarray:
    """Free (unoccluded) pulse waveform sampled at the given times.

    Zero mean over a period, positive peak 1, and band-limited: every
    harmonic sits strictly below ``PULSE_BAND_LIMIT_HZ`` so the shape
    survives the working sample rate and the measurement passband
    untouched.
    """
    if not 30.0 <= heart_rate_bpm <= 200.0:
        raise InvalidParams(f"heart rate {heart_rate_bpm} bpm outside [30, 200]")
    basis = _basis(harmonics_for_rate(heart_rate_bpm))
    phase = np.asarray(t_s, dtype=np.float64) * (heart_rate_bpm / 60.0)
    return _eval_harmonics(basis.w0, phase)


# ---------------------------------------------------------------------------
# occlusion transfer and cuff coupling


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


def _steepen(x, gamma: float):
    # monotone warp of [0, 1]; gamma < 1 steepens both ends, 1 is identity
    x = np.asarray(x, dtype=np.float64)
    lo = np.power(x, gamma)
    return lo / (lo + np.power(1.0 - x, gamma))


def _reopening_fraction(cuff_p, sbp: float, dbp: float):
    return (sbp - np.asarray(cuff_p, dtype=np.float64)) / (sbp - dbp)


def occlusion_transfer(
    cuff_p,
    sbp_mmhg: float,
    dbp_mmhg: float,
    transit_delay_max_s: float = 0.15,
):
    """Amplitude gain, transit delay and shape distortion at a cuff pressure.

    The reopening fraction ``x`` runs 0 at systolic pressure to 1 at
    diastolic (clipped outside). Gain follows a smooth S-curve in a
    steepness-warped ``x``: exactly 0 above systolic, exactly 1 below
    diastolic, 1/2 in the middle. The warp (``GAIN_STEEPNESS``) makes the
    take-off near systolic fast enough that the emerging pulse rises past
    the sensor noise floor within a couple of mmHg, which is what lets a
    threshold detector localize systole at all. Delay decays linearly
    from ``transit_delay_max_s`` to 0; distortion is ``1 - x``.

    Returns ``(gain, delay_s, distortion)`` as arrays (or floats for
    scalar input).
    """
    if not dbp_mmhg < sbp_mmhg:
        raise InvalidParams("need dbp < sbp")
    scalar = np.isscalar(cuff_p)
    x = np.clip(_reopening_fraction(cuff_p, sbp_mmhg, dbp_mmhg), 0.0, 1.0)
    gain = _smoothstep(_steepen(x, GAIN_STEEPNESS))
    delay = transit_delay_max_s * (1.0 - x)
    distortion = 1.0 - x
    if scalar:
        return float(gain), float(delay), float(distortion)
    return gain, delay, distortion


def _shape_similarity(x) -> np.ndarray:
    """Correlation of the transmitted pulse with the free pulse shape.

    A regularized-incomplete-beta rise from ``SHAPE_FLOOR`` at full
    occlusion to exactly 1 at full reopening. The end exponents
    (``SHAPE_RISE_A``, ``SHAPE_RISE_B``) are calibrated so the
    correlation thresholds of the downstream detector line up with the
    true pressures under nominal measurement noise: a < 1 gives a fast
    take-off right below systolic, b < 1 pins the approach to 1 tightly
    against diastolic.
    """
    w = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    rise = special.betainc(SHAPE_RISE_A, SHAPE_RISE_B, w)
    return SHAPE_FLOOR + (1.0 - SHAPE_FLOOR) * rise


def cuff_oscillation_amplitude(
    cuff_p,
    sbp_mmhg: float,
    dbp_mmhg: float,
    peak_mmhg: float = OSC_PEAK_MMHG,
):
    """Pulse-synchronous pressure amplitude coupled into the cuff.

    A piecewise-Gaussian bell in cuff pressure, anchored where the ratio
    criteria expect it: the maximum sits at mean arterial pressure
    (dbp + pp/3), the low-pressure side passes ``OSC_DIAS_RATIO`` of the
    peak exactly at diastolic pressure, the high-pressure side passes
    ``OSC_SYS_RATIO`` exactly at systolic pressure, and above systolic a
    short Gaussian tail (scale ``OSC_TAIL_SIGMA_MMHG``) dies off.
    """
    if not dbp_mmhg < sbp_mmhg:
        raise InvalidParams("need dbp < sbp")
    scalar = np.isscalar(cuff_p)
    p = np.asarray(cuff_p, dtype=np.float64)
    map_mmhg = dbp_mmhg + (sbp_mmhg - dbp_mmhg) / 3.0
    sig_lo = (map_mmhg - dbp_mmhg) / math.sqrt(-2.0 * math.log(OSC_DIAS_RATIO))
    sig_hi = (sbp_mmhg - map_mmhg) / math.sqrt(-2.0 * math.log(OSC_SYS_RATIO))
    amp = np.where(
        p <= map_mmhg,
        peak_mmhg * np.exp(-((p - map_mmhg) ** 2) / (2.0 * sig_lo**2)),
        np.where(
            p <= sbp_mmhg,
            peak_mmhg * np.exp(-((p - map_mmhg) ** 2) / (2.0 * sig_hi**2)),
            peak_mmhg * OSC_SYS_RATIO * np.exp(-((p - sbp_mmhg) ** 2) / (2.0 * OSC_TAIL_SIGMA_MMHG**2)),
        ),
    )
    return float(amp) if scalar else amp


# ---------------------------------------------------------------------------
# measurement assembly


def _hann_bump(t: np.ndarray, t0: float, duration: float) -> np.ndarray:
    tau = t - t0
    inside = (tau >= 0.0) & (tau <= duration)
    out = np.zeros_like(t)
    out[inside] = np.sin(np.pi * tau[inside] / duration) ** 2
    return out


def _first_downward_crossing(t: np.ndarray, y: np.ndarray, level: float) -> float:
    hits = np.nonzero((y[:-1] >= level) & (y[1:] < level))[0]
    if hits.size == 0:
        raise ProtocolViolation(f"cuff pressure never fell through {level} mmHg")
    i = int(hits[0])
    frac = (y[i] - level) / (y[i] - y[i + 1])
    return float(t[i] + frac * (t[i + 1] - t[i]))


def simulate_measurement(
    subject: SubjectParams,
    protocol: ProtocolParams | None = None,
    noise_rms: float = 0.05,
    artifacts: tuple[ArtifactSpec, ...] = (),
    seed: int = 0,
) -> MeasurementRecord:
    """Run the full protocol for one subject and return the raw record.

    The cuff inflates, holds, deflates linearly to well below diastolic
    pressure and releases. Both PPG channels and the cuff trace are
    sampled on a common clock; marker times record where the raw cuff
    pressure truly crossed the subject's systolic and diastolic values.

    Noise is white Gaussian with RMS ``noise_rms`` times the pulse
    amplitude, drawn independently per channel. The same ``(subject,
    protocol, noise_rms, artifacts, seed)`` tuple always yields a
    bit-identical record.

    Raises
    ------
    ProtocolViolation
        If the inflation target is not at least 10 mmHg above the
        subject's systolic pressure.
    """
    proto = protocol or ProtocolParams()
    if proto.inflate_to_mmhg <= subject.sbp_mmhg + 10.0:
        raise ProtocolViolation(
            f"inflation to {proto.inflate_to_mmhg} mmHg does not clear systolic "
            f"{subject.sbp_mmhg} mmHg by 10 mmHg"
        )
    if noise_rms < 0.0:
        raise InvalidParams("noise level cannot be negative")
    arts = tuple(artifacts)

    fs = proto.sample_rate_hz
    floor = max(10.0, subject.dbp_mmhg - proto.release_floor_offset_mmhg)
    defl_start = proto.pre_deflation_hold_s
    defl_dur = (proto.inflate_to_mmhg - floor) / proto.deflation_rate_mmhg_s
    defl_end = defl_start + defl_dur
    total = defl_end + proto.post_deflation_s
    n = int(round(total * fs)) + 1
    t = np.arange(n) / fs

    ramp = np.empty(n)
    hold_mask = t < defl_start
    defl_mask = (t >= defl_start) & (t <= defl_end)
    post_mask = t > defl_end
    ramp[hold_mask] = proto.inflate_to_mmhg
    ramp[defl_mask] = proto.inflate_to_mmhg - proto.deflation_rate_mmhg_s * (t[defl_mask] - defl_start)
    ramp[post_mask] = 2.0 + (floor - 2.0) * np.exp(-(t[post_mask] - defl_end) / 0.8)

    ss = np.random.SeedSequence(entropy=int(seed))
    rng_main, rng_ref, rng_art = (np.random.default_rng(c) for c in ss.spawn(3))

    f0 = subject.heart_rate_bpm / 60.0
    basis = _basis(harmonics_for_rate(subject.heart_rate_bpm))
    phase = t * f0
    free_pulse = _eval_harmonics(basis.w0, phase)

    gain, delay, _ = occlusion_transfer(
        ramp, subject.sbp_mmhg, subject.dbp_mmhg, subject.transit_delay_max_s
    )
    x = _reopening_fraction(ramp, subject.sbp_mmhg, subject.dbp_mmhg)
    c = _shape_similarity(x)
    phase_delayed = (t - delay) * f0
    blend = c * _eval_harmonics(basis.w_hat, phase_delayed) + np.sqrt(
        1.0 - c**2
    ) * _eval_harmonics(basis.q_hat, phase_delayed)
    span_fix = basis.w0_ptp / np.interp(c, basis.blend_c, basis.blend_ptp)

    amp = subject.ppg_amp_mv
    main = amp * gain * span_fix * blend
    ref = amp * free_pulse
    if noise_rms > 0.0:
        main = main + rng_main.normal(0.0, noise_rms * amp, n)
        ref = ref + rng_ref.normal(0.0, noise_rms * amp, n)

    cuff_extra = np.zeros(n)
    for art in arts:
        if art.kind == "motion_spike":
            if art.rate_per_min <= 0.0 or art.magnitude == 0.0:
                continue
            t_next = float(rng_art.exponential(60.0 / art.rate_per_min))
            while t_next < total:
                bump = _hann_bump(t, t_next, SPIKE_DURATION_S)
                main = main + art.magnitude * amp * bump
                if art.affects == "both_in_phase":
                    ref = ref + art.magnitude * amp * bump
                # motion shakes the cuff as well, whatever the optics see
                cuff_extra += SPIKE_CUFF_COUPLING_MMHG * art.magnitude * bump
                t_next += float(rng_art.exponential(60.0 / art.rate_per_min))
        else:  # baseline_wander
            phi = float(rng_art.uniform(0.0, 2.0 * np.pi))
            wave = art.magnitude * amp * np.sin(2.0 * np.pi * WANDER_FREQ_HZ * t + phi)
            main = main + wave
            if art.affects == "both_in_phase":
                ref = ref + wave

    osc = cuff_oscillation_amplitude(ramp, subject.sbp_mmhg, subject.dbp_mmhg) * free_pulse
    cuff_total = ramp + osc + cuff_extra

    # markers follow the deflation ramp, not the raw cuff channel: the
    # oscillation ripple riding on the ramp would shift the crossing by
    # up to its own amplitude, which is measurement texture rather than
    # the occlusion boundary itself
    markers = KorotkoffMarkers(
        t_sbp_s=_first_downward_crossing(t, ramp, subject.sbp_mmhg),
        t_dbp_s=_first_downward_crossing(t, ramp, subject.dbp_mmhg),
    )

    main_sig = SampledSignal(main, fs, 0.0, "millivolt", meta={"channel": "ppg_main"})
    ref_sig = SampledSignal(ref, fs, 0.0, "millivolt", meta={"channel": "ppg_ref"})
    cuff = CuffTrace(
        SampledSignal(cuff_total, fs, 0.0, "mmHg", meta={"channel": "cuff"}),
        deflation_start_s=defl_start,
        deflation_end_s=defl_end,
    )
    return MeasurementRecord(
        main=main_sig,
        ref=ref_sig,
        cuff=cuff,
        truth=subject,
        markers=markers,
        protocol=proto,
        artifacts=arts,
        noise_rms=noise_rms,
        seed=int(seed),
        meta={"frontend_pass": False},
    )


def frontend_pass(record: MeasurementRecord) -> MeasurementRecord:
    """Route both PPG channels through the analog-style carrier chain.

    Each channel is modulated onto the measurement carrier, then
    synchronously demodulated back to the working rate, as a hardware
    front end would do. The returned record notes the pass and the
    worst-channel round-trip error (RMS, settling region excluded) in
    its metadata.
    """
    worst = 0.0
    outs = []
    for sig in (record.main, record.ref):
        carried = modulate_carrier(sig, CARRIER_HZ, CARRIER_RATE_HZ)
        back = synchronous_demodulate(carried, CARRIER_HZ, working_rate_hz=sig.sample_rate_hz)
        n = min(len(sig.samples), len(back.samples))
        skip = int(float(back.meta.get("usable_after_s", 0.0)) * sig.sample_rate_hz)
        a = sig.samples[skip:n]
        b = back.samples[skip:n]
        denom = math.sqrt(float(np.mean(a * a))) or 1.0
        worst = max(worst, math.sqrt(float(np.mean((a - b) ** 2))) / denom)
        outs.append(back.with_samples(back.samples, channel=sig.meta.get("channel", "")))
    meta = dict(record.meta)
    meta.update({"frontend_pass": True, "frontend_roundtrip_rms_frac": worst})
    return dataclasses.replace(record, main=outs[0], ref=outs[1], meta=meta)


# ---------------------------------------------------------------------------
# record persistence

_MANIFEST_NAME = "manifest.json"
_CHANNEL_FILES = {"main": "ppg_main.csv", "ref": "ppg_ref.csv", "cuff": "cuff.csv"}


def _from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise FormatError(f"{where}: expected an object, got {type(data).__name__}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def export_record(record: MeasurementRecord, out_dir) -> Path:
    """Write a record as three channel CSVs plus a manifest.

    The manifest carries everything needed to rebuild the record object:
    ground truth, markers, protocol, artifact list, noise level, seed
    and the deflation window.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_signal_csv(record.main, out / _CHANNEL_FILES["main"])
    save_signal_csv(record.ref, out / _CHANNEL_FILES["ref"])
    save_signal_csv(record.cuff.pressure, out / _CHANNEL_FILES["cuff"])
    manifest = {
        "version": 1,
        "truth": dataclasses.asdict(record.truth),
        "markers": dataclasses.asdict(record.markers),
        "protocol": dataclasses.asdict(record.protocol),
        "artifacts": [dataclasses.asdict(a) for a in record.artifacts],
        "noise_rms": record.noise_rms,
        "seed": record.seed,
        "deflation": {
            "start_s": record.cuff.deflation_start_s,
            "end_s": record.cuff.deflation_end_s,
        },
        "meta": record.meta,
    }
    (out / _MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return out


def load_record(in_dir) -> MeasurementRecord:
    """Rebuild a record previously written by :func:`export_record`.

    Raises
    ------
    FormatError
        If the manifest or any channel file is missing or malformed.
    """
    src = Path(in_dir)
    mpath = src / _MANIFEST_NAME
    if not mpath.is_file():
        raise FormatError(f"{mpath}: manifest not found")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{mpath}: not valid JSON ({exc})") from exc
    for key in ("truth", "markers", "protocol", "artifacts", "noise_rms", "seed", "deflation"):
        if key not in manifest:
            raise FormatError(f"{mpath}: missing key {key!r}")

    main = load_signal_csv(src / _CHANNEL_FILES["main"])
    ref = load_signal_csv(src / _CHANNEL_FILES["ref"])
    cuff_sig = load_signal_csv(src / _CHANNEL_FILES["cuff"])
    deflation = manifest["deflation"]
    try:
        cuff = CuffTrace(cuff_sig, float(deflation["start_s"]), float(deflation["end_s"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{mpath}: bad deflation window ({exc})") from exc

    return MeasurementRecord(
        main=main,
        ref=ref,
        cuff=cuff,
        truth=_from_dict(SubjectParams, manifest["truth"], f"{mpath}: truth"),
        markers=_from_dict(KorotkoffMarkers, manifest["markers"], f"{mpath}: markers"),
        protocol=_from_dict(ProtocolParams, manifest["protocol"], f"{mpath}: protocol"),
        artifacts=tuple(
            _from_dict(ArtifactSpec, a, f"{mpath}: artifacts[{i}]")
            for i, a in enumerate(manifest["artifacts"])
        ),
        noise_rms=float(manifest["noise_rms"]),
        seed=int(manifest["seed"]),
        meta=dict(manifest.get("meta", {})),
    )
