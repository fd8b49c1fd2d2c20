"""Digital front end: filter design, filtering, carrier modulation.

The acquisition chain drives the photoplethysmogram LEDs with a sine
carrier and recovers the slow pulse envelope by synchronous detection,
which pushes lamp flicker and similar interference out of band. All
filters here are causal IIR cascades of second-order sections; what is
promised about them is their measured response, not their coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import (
    EmptySignal,
    InvalidCutoff,
    InvalidParams,
    RateMismatch,
    RateTooLow,
    UnrealizableSpec,
)
from .signals import SampledSignal, WORKING_RATE_HZ, resample

#: largest acceptable realized order (biquad cascade equivalent)
MAX_FILTER_ORDER = 16

#: carrier frequency used by the optical front end, Hz
CARRIER_HZ = 1500.0

#: sample rate of the modulated domain, Hz (8 samples per carrier cycle)
CARRIER_RATE_HZ = 12000.0

#: demodulator low-pass cutoff, Hz; the pulse spectrum lives below 30 Hz
DEMOD_CUTOFF_HZ = 30.0

#: default additive bias so the modulated light flux stays positive
MODULATION_BIAS = 1.0

# impulse-response decay levels (relative to peak)
_STABLE_LEVEL = 1e-9
_SETTLED_LEVEL = 1e-6
_USABLE_LEVEL = 1e-3

# design margins so the measured response clears the spec with room
_RIPPLE_DESIGN_FRACTION = 0.8
_ATTEN_DESIGN_MARGIN_DB = 1.5


@dataclass(frozen=True)
class BandpassSpec:
    """Requested band-pass response.

    Gain must stay within ``passband_ripple_db`` of 0 dB between
    ``pass_lo_hz`` and ``pass_hi_hz`` and at least ``stopband_atten_db``
    below 0 dB at and beyond the stop edges.
    """

    pass_lo_hz: float
    pass_hi_hz: float
    stop_lo_hz: float
    stop_hi_hz: float
    passband_ripple_db: float = 1.0
    stopband_atten_db: float = 80.0

    def __post_init__(self) -> None:
        if not (0.0 < self.stop_lo_hz < self.pass_lo_hz < self.pass_hi_hz < self.stop_hi_hz):
            raise InvalidParams(
                "need 0 < stop_lo < pass_lo < pass_hi < stop_hi, got "
                f"{self.stop_lo_hz}, {self.pass_lo_hz}, {self.pass_hi_hz}, {self.stop_hi_hz}"
            )
        if self.passband_ripple_db <= 0.0 or self.stopband_atten_db <= 0.0:
            raise InvalidParams("ripple and attenuation must be positive")


#: the cuff-oscillation band from the tachooscillography chain
OSC_BAND = BandpassSpec(0.5, 2.0, 0.1, 5.0, 1.0, 80.0)

#: gentler cleanup band for PPG channels (keeps pulse harmonics to 15 Hz,
#: rejects baseline wander at 0.2 Hz and wideband noise above 30 Hz)
PPG_BAND = BandpassSpec(0.5, 18.0, 0.25, 30.0, 0.5, 40.0)


@dataclass(frozen=True)
class FilterRealization:
    """A designed filter plus its measured timing properties.

    ``settling_time_s`` is when the impulse response has fallen below
    1e-6 of its peak; ``usable_after_s`` is the looser 1e-3 level that
    estimators use to drop the startup transient without discarding most
    of a recording. Application is stateless (initial conditions are
    derived per call), so one realization may be shared across threads.
    """

    sos: np.ndarray
    sample_rate_hz: float
    label: str
    settling_time_s: float
    usable_after_s: float
    group_delay_s: float
    spec: BandpassSpec | None = None

    def __post_init__(self) -> None:
        arr = np.asarray(self.sos, dtype=np.float64).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "sos", arr)

    @property
    def order(self) -> int:
        return 2 * self.sos.shape[0]


def _impulse_decay_times(sos: np.ndarray, fs: float) -> tuple[float, float]:
    """Times for the impulse response to decay to 1e-6 and 1e-3 of peak.

    Raises ``UnrealizableSpec`` if the response has not decayed below
    1e-9 of its peak within a generous horizon (instability guard).
    """
    n = max(1024, int(4 * fs))
    cap = int(1200 * fs)
    while True:
        x = np.zeros(n)
        x[0] = 1.0
        h = np.abs(sps.sosfilt(sos, x))
        peak = h.max()
        tail = h[int(0.95 * n):].max()
        if peak > 0 and tail < _STABLE_LEVEL * peak:
            break
        if n >= cap:
            raise UnrealizableSpec("impulse response does not decay; filter unstable")
        n *= 2
    settled = np.nonzero(h >= _SETTLED_LEVEL * peak)[0][-1] + 1
    usable = np.nonzero(h >= _USABLE_LEVEL * peak)[0][-1] + 1
    return settled / fs, usable / fs


def _group_delay_s(sos: np.ndarray, fs: float, f0: float) -> float:
    df = f0 * 1e-3
    w, h = sps.sosfreqz(sos, worN=np.array([f0 - df, f0 + df]), fs=fs)
    phase = np.unwrap(np.angle(h))
    return float(-(phase[1] - phase[0]) / (2 * np.pi * (2 * df)))


def design_bandpass(spec: BandpassSpec, sample_rate_hz: float) -> FilterRealization:
    """Design a causal band-pass meeting ``spec`` at ``sample_rate_hz``.

    A Chebyshev type II cascade is used: its flat passband settles several
    times faster than an elliptic of equal attenuation, which matters
    because estimators must discard the startup transient. The design
    targets slightly tighter numbers than the spec so that the measured
    response clears the spec itself.

    Raises
    ------
    UnrealizableSpec
        If the stop edge reaches Nyquist or the required order exceeds
        ``MAX_FILTER_ORDER``.
    """
    nyq = sample_rate_hz / 2.0
    if spec.stop_hi_hz >= nyq:
        raise UnrealizableSpec(
            f"stop edge {spec.stop_hi_hz} Hz not below Nyquist {nyq} Hz"
        )
    rp = _RIPPLE_DESIGN_FRACTION * spec.passband_ripple_db
    rs = spec.stopband_atten_db + _ATTEN_DESIGN_MARGIN_DB
    wp = [spec.pass_lo_hz, spec.pass_hi_hz]
    ws = [spec.stop_lo_hz, spec.stop_hi_hz]
    order, wn = sps.cheb2ord(wp, ws, rp, rs, fs=sample_rate_hz)
    if 2 * order > MAX_FILTER_ORDER:
        raise UnrealizableSpec(
            f"spec needs order {2 * order}, above the cap of {MAX_FILTER_ORDER}"
        )
    sos = sps.cheby2(order, rs, wn, btype="bandpass", fs=sample_rate_hz, output="sos")

    # normalize so the passband tops out at exactly 0 dB
    grid = np.geomspace(spec.pass_lo_hz, spec.pass_hi_hz, 256)
    _, h = sps.sosfreqz(sos, worN=grid, fs=sample_rate_hz)
    sos[0, :3] /= np.abs(h).max()

    realization = FilterRealization(
        sos=sos,
        sample_rate_hz=sample_rate_hz,
        label=f"bandpass {spec.pass_lo_hz:g}-{spec.pass_hi_hz:g} Hz",
        settling_time_s=0.0,
        usable_after_s=0.0,
        group_delay_s=_group_delay_s(sos, sample_rate_hz, math.sqrt(spec.pass_lo_hz * spec.pass_hi_hz)),
        spec=spec,
    )
    settled, usable = _impulse_decay_times(sos, sample_rate_hz)
    realization = replace(realization, settling_time_s=settled, usable_after_s=usable)

    problems = check_bandpass_response(realization)
    if problems:
        raise UnrealizableSpec("; ".join(problems))
    return realization


def design_lowpass2(cutoff_hz: float, sample_rate_hz: float) -> FilterRealization:
    """Second-order Butterworth low-pass (-3 dB at the cutoff).

    Raises
    ------
    InvalidCutoff
        If the cutoff is not strictly between 0 and Nyquist.
    """
    if not (0.0 < cutoff_hz < sample_rate_hz / 2.0):
        raise InvalidCutoff(
            f"cutoff {cutoff_hz!r} Hz outside (0, {sample_rate_hz / 2.0}) Hz"
        )
    sos = sps.butter(2, cutoff_hz, btype="lowpass", fs=sample_rate_hz, output="sos")
    settled, usable = _impulse_decay_times(sos, sample_rate_hz)
    return FilterRealization(
        sos=sos,
        sample_rate_hz=sample_rate_hz,
        label=f"lowpass2 {cutoff_hz:g} Hz",
        settling_time_s=settled,
        usable_after_s=usable,
        group_delay_s=_group_delay_s(sos, sample_rate_hz, cutoff_hz / 10.0),
        spec=None,
    )


def apply_filter(filt: FilterRealization, signal: SampledSignal) -> SampledSignal:
    """Run a signal through a realized filter, causally.

    Initial conditions are seeded with the steady state for the first
    sample's level, which suppresses the artificial step at switch-on
    while keeping the operation exactly linear. Output metadata carries
    ``settling_time_s`` and ``usable_after_s`` so estimators can skip the
    startup transient.

    Raises
    ------
    RateMismatch
        If the filter was designed for a different sample rate.
    EmptySignal
        If the signal has no samples.
    """
    if abs(filt.sample_rate_hz - signal.sample_rate_hz) > 1e-9 * filt.sample_rate_hz:
        raise RateMismatch(
            f"filter designed for {filt.sample_rate_hz} Hz, signal is {signal.sample_rate_hz} Hz"
        )
    if len(signal) == 0:
        raise EmptySignal("cannot filter an empty signal")
    x = np.array(signal.samples)  # sosfilt rejects the read-only view
    zi = sps.sosfilt_zi(np.array(filt.sos)) * x[0]
    out, _ = sps.sosfilt(np.array(filt.sos), x, zi=zi)
    return signal.with_samples(
        out,
        settling_time_s=filt.settling_time_s,
        usable_after_s=filt.usable_after_s,
        filter_label=filt.label,
    )


def frequency_response(filt: FilterRealization, freqs_hz) -> tuple[np.ndarray, np.ndarray]:
    """Realized gain (dB) and phase (degrees) at the given frequencies."""
    freqs = np.asarray(freqs_hz, dtype=np.float64)
    _, h = sps.sosfreqz(filt.sos, worN=freqs, fs=filt.sample_rate_hz)
    mag = np.abs(h)
    gain_db = 20.0 * np.log10(np.maximum(mag, 1e-300))
    phase_deg = np.degrees(np.angle(h))
    return gain_db, phase_deg


def sweep_frequencies(filt: FilterRealization, n_tones: int = 40) -> np.ndarray:
    """Log-spaced validation tones from stop_lo/4 up to min(4*stop_hi, 0.95*Nyquist)."""
    if filt.spec is not None:
        lo = filt.spec.stop_lo_hz / 4.0
        hi = min(4.0 * filt.spec.stop_hi_hz, 0.475 * filt.sample_rate_hz)
    else:
        lo = filt.sample_rate_hz * 1e-4
        hi = 0.475 * filt.sample_rate_hz
    return np.geomspace(lo, hi, n_tones)


def check_bandpass_response(filt: FilterRealization, n_tones: int = 40) -> list[str]:
    """Validate the realized response against its spec on a tone sweep.

    Returns a list of violation descriptions; empty means the filter
    passes. Passband tones must sit within the ripple of 0 dB, tones at
    or beyond the stop edges must be attenuated by at least the stopband
    figure, and nothing anywhere may exceed the ripple bound.
    """
    spec = filt.spec
    if spec is None:
        raise InvalidParams("response check requires a filter with a band-pass spec")
    freqs = np.sort(np.unique(np.concatenate([
        sweep_frequencies(filt, n_tones),
        [spec.stop_lo_hz, spec.pass_lo_hz, spec.pass_hi_hz, spec.stop_hi_hz],
    ])))
    gain_db, _ = frequency_response(filt, freqs)
    problems = []
    for f, g in zip(freqs, gain_db):
        if spec.pass_lo_hz <= f <= spec.pass_hi_hz:
            if abs(g) > spec.passband_ripple_db:
                problems.append(f"{f:.4g} Hz: passband gain {g:.2f} dB")
        elif f <= spec.stop_lo_hz or f >= spec.stop_hi_hz:
            if g > -spec.stopband_atten_db:
                problems.append(f"{f:.4g} Hz: stopband gain {g:.2f} dB")
        elif g > spec.passband_ripple_db:
            problems.append(f"{f:.4g} Hz: transition gain {g:.2f} dB")
    return problems


def measure_tone_gain(filt: FilterRealization, freq_hz: float) -> float:
    """Measured steady-state gain (dB) for a unit tone, by actually filtering it.

    The tone runs for the filter's settling time plus at least two full
    periods; amplitude is recovered by quadrature projection over an
    integer number of periods, so the measurement is exact for an LTI
    system up to float precision.
    """
    fs = filt.sample_rate_hz
    n_periods = max(2, int(math.ceil(2.0 * freq_hz)))
    measure_s = n_periods / freq_hz
    total = int(round((filt.settling_time_s + measure_s) * fs)) + 1
    t = np.arange(total) / fs
    y = sps.sosfilt(np.array(filt.sos), np.sin(2 * np.pi * freq_hz * t))
    n_meas = int(round(measure_s * fs))
    seg = y[-n_meas:]
    ts = t[-n_meas:]
    z = np.exp(-2j * np.pi * freq_hz * ts)
    amp = 2.0 * np.abs(np.mean(seg * z))
    return 20.0 * math.log10(max(amp, 1e-300))


def export_response_csv(filt: FilterRealization, csv_path, freqs_hz=None) -> None:
    """Write ``freq_hz,gain_db,phase_deg`` rows for inspection."""
    if freqs_hz is None:
        freqs_hz = sweep_frequencies(filt, 160)
    gain_db, phase_deg = frequency_response(filt, freqs_hz)
    with open(Path(csv_path), "w", encoding="utf-8") as fh:
        fh.write("freq_hz,gain_db,phase_deg\n")
        for f, g, p in zip(np.asarray(freqs_hz), gain_db, phase_deg):
            fh.write(f"{f:.9g},{g:.6f},{p:.6f}\n")


def modulate_carrier(
    envelope: SampledSignal,
    carrier_hz: float = CARRIER_HZ,
    carrier_rate_hz: float = CARRIER_RATE_HZ,
    bias: float = MODULATION_BIAS,
) -> SampledSignal:
    """Amplitude-modulate an envelope onto a sine carrier.

    The envelope is resampled up to the carrier rate and shifted by
    ``max(0, -min(envelope)) + bias`` so the transmitted flux is never
    negative, then multiplied by ``sin(2*pi*carrier*t)`` with phase zero
    at t = 0 (the demodulator relies on that shared phase reference).
    The applied offset is recorded in the output metadata.

    Raises
    ------
    RateTooLow
        If the carrier rate gives fewer than 8 samples per carrier cycle.
    EmptySignal
        If the envelope has no samples.
    """
    if carrier_rate_hz < 8.0 * carrier_hz:
        raise RateTooLow(
            f"carrier rate {carrier_rate_hz} Hz below 8 samples per cycle of {carrier_hz} Hz"
        )
    if len(envelope) == 0:
        raise EmptySignal("cannot modulate an empty envelope")
    up = resample(envelope, carrier_rate_hz)
    offset = max(0.0, -float(np.min(up.samples))) + bias
    t = up.times()
    out = (up.samples + offset) * np.sin(2 * np.pi * carrier_hz * t)
    return SampledSignal(
        out,
        carrier_rate_hz,
        envelope.start_time_s,
        envelope.unit,
        {
            "modulation_bias": offset,
            "carrier_hz": carrier_hz,
            "envelope_rate_hz": envelope.sample_rate_hz,
        },
    )


def synchronous_demodulate(
    raw: SampledSignal,
    carrier_hz: float = CARRIER_HZ,
    working_rate_hz: float = WORKING_RATE_HZ,
    bias: float | None = None,
    lowpass_cutoff_hz: float = DEMOD_CUTOFF_HZ,
) -> SampledSignal:
    """Recover the envelope from a carrier-modulated signal.

    Multiplies by a phase-locked reference (phase zero at t = 0, matching
    :func:`modulate_carrier`), low-passes at ``lowpass_cutoff_hz`` to
    reject the double-carrier image, advances the result by the low-pass
    group delay (a known, deterministic lag that would otherwise shift
    the whole envelope), decimates to the working rate and removes the
    modulation bias. If ``bias`` is None it is taken from the input
    metadata (set by the modulator) and defaults to zero.

    Raises
    ------
    RateTooLow
        If the input rate gives fewer than 8 samples per carrier cycle.
    EmptySignal
        If the input has no samples.
    """
    if raw.sample_rate_hz < 8.0 * carrier_hz:
        raise RateTooLow(
            f"sample rate {raw.sample_rate_hz} Hz below 8 samples per cycle of {carrier_hz} Hz"
        )
    if len(raw) == 0:
        raise EmptySignal("cannot demodulate an empty signal")
    if bias is None:
        bias = float(raw.meta.get("modulation_bias", 0.0))
    t = raw.times()
    mixed = raw.samples * (2.0 * np.sin(2 * np.pi * carrier_hz * t))
    lp = design_lowpass2(lowpass_cutoff_hz, raw.sample_rate_hz)
    filtered = apply_filter(lp, SampledSignal(mixed, raw.sample_rate_hz, raw.start_time_s, raw.unit))
    shift = int(round(lp.group_delay_s * raw.sample_rate_hz))
    if 0 < shift < len(filtered):
        filtered = SampledSignal(
            filtered.samples[shift:], raw.sample_rate_hz, raw.start_time_s, raw.unit
        )
    down = resample(filtered, working_rate_hz)
    out = down.samples - bias
    meta = {
        "settling_time_s": lp.settling_time_s,
        "usable_after_s": lp.usable_after_s,
        "demodulated": True,
    }
    return SampledSignal(out, working_rate_hz, raw.start_time_s, raw.unit, meta)
