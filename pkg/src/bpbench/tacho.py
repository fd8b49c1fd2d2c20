"""Tacho-oscillographic estimation from the cuff pressure itself.

Arterial pulsation couples tiny pressure oscillations into the cuff.
Band-passing the cuff trace around the cardiac band isolates them; their
beat-to-beat amplitude plotted against cuff pressure forms a bell whose
maximum sits at mean arterial pressure. Fixed-ratio criteria then place
systolic pressure where the rising (high-pressure) side crosses
``ratio_sys`` of the maximum and diastolic pressure where the falling
side crosses ``ratio_dias``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParams, MissingCrossing, NoUniquePeak, TooFewBeats
from .frontend import OSC_BAND, BandpassSpec, apply_filter, design_bandpass
from .results import METHOD_TACHO, BpQuality, BpResult
from .signals import CuffTrace, SampledSignal

#: plateau of the envelope maximum wider than this is ambiguous
PEAK_PLATEAU_LIMIT_MMHG = 10.0


@dataclass(frozen=True)
class TachoConfig:
    ratio_sys: float = 0.55
    ratio_dias: float = 0.85
    min_envelope_mmhg: float = 0.05
    min_beats: int = 5
    band: BandpassSpec = OSC_BAND

    def __post_init__(self) -> None:
        if not 0.0 < self.ratio_sys < 1.0 or not 0.0 < self.ratio_dias < 1.0:
            raise InvalidParams("amplitude ratios must lie in (0, 1)")
        if self.min_envelope_mmhg < 0.0:
            raise InvalidParams("minimum envelope amplitude cannot be negative")
        if self.min_beats < 3:
            raise InvalidParams("need at least 3 beats for an envelope")


def extract_oscillations(cuff: CuffTrace, band: BandpassSpec = OSC_BAND) -> SampledSignal:
    """Band-pass the raw cuff trace down to its cardiac oscillations.

    The deflation ramp and DC offset fall well below the passband and
    are removed along with sensor drift; what remains is the pulsatile
    component. The result carries the filter's settling metadata so
    downstream steps can skip the warm-up region.
    """
    realization = design_bandpass(band, cuff.pressure.sample_rate_hz)
    return apply_filter(realization, cuff.pressure)


@dataclass(frozen=True)
class OscEnvelope:
    """Per-beat oscillation amplitude against cuff pressure.

    Ordered by time, which during a deflation means cuff pressure runs
    high to low.
    """

    times_s: np.ndarray
    cuff_mmhg: np.ndarray
    amp_mmhg: np.ndarray
    transient_excluded: bool = False

    def __post_init__(self) -> None:
        t = np.asarray(self.times_s, dtype=np.float64).copy()
        p = np.asarray(self.cuff_mmhg, dtype=np.float64).copy()
        a = np.asarray(self.amp_mmhg, dtype=np.float64).copy()
        if not (t.shape == p.shape == a.shape) or t.ndim != 1:
            raise InvalidParams("envelope arrays must be matching 1-d arrays")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidParams("envelope times must be strictly increasing")
        if a.size and a.min() < 0.0:
            raise InvalidParams("oscillation amplitudes cannot be negative")
        for arr in (t, p, a):
            arr.setflags(write=False)
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "cuff_mmhg", p)
        object.__setattr__(self, "amp_mmhg", a)

    def __len__(self) -> int:
        return self.times_s.size


def build_envelope(
    osc: SampledSignal,
    cuff: CuffTrace,
    config: TachoConfig | None = None,
) -> OscEnvelope:
    """Collapse the oscillation signal into one amplitude point per beat.

    Beats are delimited by upward zero crossings of the (near-sinusoidal)
    band-passed signal; each beat contributes its peak-to-peak span,
    stamped with the beat's midpoint time and the smoothed cuff pressure
    there. Beats inside the filter settling region or outside the
    deflation are discarded. Leading and trailing points below
    ``min_envelope_mmhg`` are trimmed so that pre-oscillation noise does
    not enter the envelope; interior points are kept as-is.

    Raises
    ------
    TooFewBeats
        If fewer than ``min_beats`` beats survive the trimming.
    """
    cfg = config or TachoConfig()
    x = osc.samples
    t = osc.times()
    usable_from = osc.start_time_s + float(osc.meta.get("usable_after_s", 0.0))
    start = max(cuff.deflation_start_s, usable_from)
    transient_excluded = usable_from > cuff.deflation_start_s + 1e-9

    up = np.nonzero((x[:-1] <= 0.0) & (x[1:] > 0.0))[0]
    times, pressures, amps = [], [], []
    for a_i, b_i in zip(up[:-1], up[1:]):
        mid = 0.5 * (t[a_i] + t[b_i])
        if mid < start or mid > cuff.deflation_end_s:
            continue
        beat = x[a_i : b_i + 1]
        times.append(mid)
        pressures.append(cuff.pressure_at(mid))
        amps.append(float(beat.max() - beat.min()))

    amps_arr = np.asarray(amps)
    keep = amps_arr >= cfg.min_envelope_mmhg
    if not np.any(keep):
        raise TooFewBeats("no beat rose above the minimum envelope amplitude")
    first = int(np.argmax(keep))
    last = int(len(keep) - 1 - np.argmax(keep[::-1]))
    times = times[first : last + 1]
    pressures = pressures[first : last + 1]
    amps = amps[first : last + 1]
    if len(times) < cfg.min_beats:
        raise TooFewBeats(f"only {len(times)} usable beats, need {cfg.min_beats}")
    return OscEnvelope(np.asarray(times), np.asarray(pressures), np.asarray(amps), transient_excluded)


def _median3(a: np.ndarray) -> np.ndarray:
    """3-point running median with edge replication."""
    if a.size < 3:
        return a.copy()
    padded = np.concatenate(([a[0]], a, [a[-1]]))
    stacked = np.stack([padded[:-2], padded[1:-1], padded[2:]])
    return np.median(stacked, axis=0)


def _interp_crossing(p0, p1, a0, a1, level):
    frac = (level - a0) / (a1 - a0)
    return p0 + frac * (p1 - p0)


def detect_bp_tacho(env: OscEnvelope, config: TachoConfig | None = None) -> BpResult:
    """Apply fixed-ratio criteria to an oscillation envelope.

    The envelope is median-smoothed (width 3) to knock out single-beat
    outliers before the maximum is located. Systolic pressure is read at
    the last upward crossing of ``ratio_sys * A_max`` before the peak
    (high-pressure side), diastolic at the first downward crossing of
    ``ratio_dias * A_max`` after it; both are linearly interpolated in
    pressure and time between the bracketing beats.

    Raises
    ------
    TooFewBeats
        If the envelope is shorter than ``min_beats``.
    NoUniquePeak
        If the smoothed maximum is attained on a plateau spanning more
        than 10 mmHg of cuff pressure. Narrower plateaus resolve to
        their midpoint.
    MissingCrossing
        If a required ratio crossing does not exist on its side.
    """
    cfg = config or TachoConfig()
    if len(env) < cfg.min_beats:
        raise TooFewBeats(f"envelope has {len(env)} beats, need {cfg.min_beats}")
    amp = _median3(env.amp_mmhg)
    press = env.cuff_mmhg
    times = env.times_s

    a_max = float(amp.max())
    tie = a_max - 1e-9 * max(a_max, 1.0)
    # contiguous plateau containing the argmax
    i_star = int(np.argmax(amp))
    lo = i_star
    while lo - 1 >= 0 and amp[lo - 1] >= tie:
        lo -= 1
    hi = i_star
    while hi + 1 < amp.size and amp[hi + 1] >= tie:
        hi += 1
    plateau_span = abs(press[lo] - press[hi])
    if plateau_span > PEAK_PLATEAU_LIMIT_MMHG:
        raise NoUniquePeak(
            f"envelope maximum is flat over {plateau_span:.1f} mmHg of cuff pressure"
        )

    level_sys = cfg.ratio_sys * a_max
    level_dias = cfg.ratio_dias * a_max

    i_sys = None
    for i in range(lo - 1, -1, -1):
        if amp[i] < level_sys <= amp[i + 1]:
            i_sys = i
            break
    if i_sys is None:
        raise MissingCrossing(
            f"no {cfg.ratio_sys:.2f} amplitude crossing above the envelope peak"
        )
    sbp = _interp_crossing(press[i_sys], press[i_sys + 1], amp[i_sys], amp[i_sys + 1], level_sys)
    t_sys = _interp_crossing(times[i_sys], times[i_sys + 1], amp[i_sys], amp[i_sys + 1], level_sys)

    i_dias = None
    for i in range(hi, amp.size - 1):
        if amp[i] >= level_dias > amp[i + 1]:
            i_dias = i
            break
    if i_dias is None:
        raise MissingCrossing(
            f"no {cfg.ratio_dias:.2f} amplitude crossing below the envelope peak"
        )
    dbp = _interp_crossing(press[i_dias], press[i_dias + 1], amp[i_dias], amp[i_dias + 1], level_dias)
    t_dias = _interp_crossing(times[i_dias], times[i_dias + 1], amp[i_dias], amp[i_dias + 1], level_dias)

    quality = BpQuality(transient_excluded=env.transient_excluded)
    return BpResult(
        sbp_mmhg=float(sbp),
        dbp_mmhg=float(dbp),
        t_sys_s=float(t_sys),
        t_dias_s=float(t_dias),
        method=METHOD_TACHO,
        quality=quality,
    )


def envelope_to_csv(env: OscEnvelope, csv_path) -> None:
    """Write the envelope as ``time_s,cuff_mmHg,amp_mmHg`` rows."""
    with open(Path(csv_path), "w", encoding="utf-8") as fh:
        fh.write("time_s,cuff_mmHg,amp_mmHg\n")
        for t, p, a in zip(env.times_s, env.cuff_mmhg, env.amp_mmhg):
            fh.write(f"{t:.6f},{p:.6f},{a:.9f}\n")
