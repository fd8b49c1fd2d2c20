"""Sampled-signal primitives shared by every stage of the toolkit.

All channels (photoplethysmogram voltages, cuff pressure) are uniformly
sampled and carried around as immutable :class:`SampledSignal` values.
Estimators slice windows out of signals, remove means, resample between
acquisition and working rates, and read pressures off a cuff trace at
detected event times, so those four operations live here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.signal import resample_poly

from .errors import (
    AlignmentError,
    EmptySignal,
    FormatError,
    InvalidParams,
    InvalidRate,
    TimeOutOfRange,
    WindowOutOfRange,
)

#: units a signal is allowed to carry
UNITS = ("millivolt", "mmHg", "dimensionless")

#: default working sample rate for estimation, Hz
WORKING_RATE_HZ = 100.0

#: width of the moving average used to smooth cuff pressure, s
CUFF_SMOOTHING_S = 1.0

#: a smoothed cuff deflation may locally rise at most this much, mmHg
DEFLATION_MONOTONE_TOL_MMHG = 0.5


def _relative_slack(x: float) -> float:
    return 1e-9 * max(1.0, abs(x))


@dataclass(frozen=True)
class SampledSignal:
    """A uniformly sampled, immutable signal.

    Parameters
    ----------
    samples : array_like
        Sample values. Stored as a read-only float64 array. All values
        must be finite.
    sample_rate_hz : float
        Sampling rate, strictly positive.
    start_time_s : float
        Time of the first sample.
    unit : str
        One of ``millivolt``, ``mmHg``, ``dimensionless``.
    meta : dict
        Free-form annotations (filter settling times, modulation bias).
        Not interpreted by this module.
    """

    samples: np.ndarray
    sample_rate_hz: float
    start_time_s: float = 0.0
    unit: str = "dimensionless"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64).copy()
        if arr.ndim != 1:
            raise InvalidParams(f"samples must be one-dimensional, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise InvalidParams("samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        rate = float(self.sample_rate_hz)
        if not math.isfinite(rate) or rate <= 0.0:
            raise InvalidRate(f"sample rate must be positive, got {rate!r}")
        object.__setattr__(self, "sample_rate_hz", rate)
        object.__setattr__(self, "start_time_s", float(self.start_time_s))
        if self.unit not in UNITS:
            raise InvalidParams(f"unknown unit {self.unit!r}, expected one of {UNITS}")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        """Span covered by the samples, ``n / rate``."""
        return len(self) / self.sample_rate_hz

    @property
    def end_time_s(self) -> float:
        """Time just past the last sample, ``start + n / rate``."""
        return self.start_time_s + self.duration_s

    def times(self) -> np.ndarray:
        """Sample times, ``start + k / rate``."""
        return self.start_time_s + np.arange(len(self)) / self.sample_rate_hz

    def with_samples(self, samples: Iterable[float], **meta) -> "SampledSignal":
        """Copy of this signal with new sample values and merged metadata."""
        merged = dict(self.meta)
        merged.update(meta)
        return SampledSignal(samples, self.sample_rate_hz, self.start_time_s, self.unit, merged)


@dataclass(frozen=True)
class Window:
    """Half-open time interval ``[t0, t0 + duration)``."""

    t0_s: float
    duration_s: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.t0_s):
            raise InvalidParams("window start must be finite")
        if not (math.isfinite(self.duration_s) and self.duration_s > 0.0):
            raise InvalidParams(f"window duration must be positive, got {self.duration_s!r}")

    @property
    def end_s(self) -> float:
        return self.t0_s + self.duration_s


def slice_signal(signal: SampledSignal, window: Window) -> SampledSignal:
    """Extract the samples whose times fall in ``[window.t0, window.end)``.

    The window must lie inside the signal span ``[start, start + n/rate]``;
    a window equal to the full span returns an identical signal.

    Raises
    ------
    WindowOutOfRange
        If any part of the window lies outside the signal span.
    """
    start, end = signal.start_time_s, signal.end_time_s
    if window.t0_s < start - _relative_slack(start) or window.end_s > end + _relative_slack(end):
        raise WindowOutOfRange(
            f"window [{window.t0_s}, {window.end_s}) outside signal span [{start}, {end}]"
        )
    x0 = (window.t0_s - start) * signal.sample_rate_hz
    x1 = (window.end_s - start) * signal.sample_rate_hz
    i0 = max(0, int(math.ceil(x0 - _relative_slack(x0))))
    i1 = min(len(signal), int(math.ceil(x1 - _relative_slack(x1))))
    i1 = max(i0, i1)
    return SampledSignal(
        signal.samples[i0:i1],
        signal.sample_rate_hz,
        start + i0 / signal.sample_rate_hz,
        signal.unit,
        dict(signal.meta),
    )


def remove_mean(signal: SampledSignal) -> SampledSignal:
    """Subtract the sample mean.

    Raises
    ------
    EmptySignal
        If the signal has no samples.
    """
    if len(signal) == 0:
        raise EmptySignal("cannot remove mean of an empty signal")
    return signal.with_samples(signal.samples - signal.samples.mean())


def resample(signal: SampledSignal, new_rate_hz: float) -> SampledSignal:
    """Resample to a new rate with a polyphase anti-aliasing filter.

    Duration is preserved to within one output sample period, and a pure
    tone below both Nyquist limits survives with amplitude error below 1%
    away from the edges.

    Raises
    ------
    InvalidRate
        If ``new_rate_hz`` is not a positive finite number.
    EmptySignal
        If the signal has no samples.
    """
    if not (math.isfinite(new_rate_hz) and new_rate_hz > 0.0):
        raise InvalidRate(f"target rate must be positive, got {new_rate_hz!r}")
    if len(signal) == 0:
        raise EmptySignal("cannot resample an empty signal")
    if abs(new_rate_hz - signal.sample_rate_hz) <= 1e-12 * signal.sample_rate_hz:
        return signal
    ratio = Fraction(new_rate_hz / signal.sample_rate_hz).limit_denominator(1_000_000)
    # line padding keeps the polyphase edges from ringing against the
    # implicit zeros outside the signal, which matters for short records
    out = resample_poly(signal.samples, ratio.numerator, ratio.denominator, padtype="line")
    return SampledSignal(out, new_rate_hz, signal.start_time_s, signal.unit, dict(signal.meta))


def interpolate_at(signal: SampledSignal, t_s):
    """Linearly interpolate the signal value at time ``t_s``.

    Accepts a scalar or an array of times. Times must lie within
    ``[start, start + (n - 1) / rate]``.

    Raises
    ------
    EmptySignal
        If the signal has no samples.
    TimeOutOfRange
        If any requested time lies outside the sampled span.
    """
    if len(signal) == 0:
        raise EmptySignal("cannot interpolate an empty signal")
    t = np.asarray(t_s, dtype=np.float64)
    last = signal.start_time_s + (len(signal) - 1) / signal.sample_rate_hz
    lo_ok = t >= signal.start_time_s - _relative_slack(signal.start_time_s)
    hi_ok = t <= last + _relative_slack(last)
    if not np.all(lo_ok & hi_ok):
        bad = t[~(lo_ok & hi_ok)]
        raise TimeOutOfRange(
            f"time {np.atleast_1d(bad)[0]} outside sampled span [{signal.start_time_s}, {last}]"
        )
    x = np.clip((t - signal.start_time_s) * signal.sample_rate_hz, 0.0, len(signal) - 1.0)
    k = np.minimum(np.floor(x).astype(np.intp), max(len(signal) - 2, 0))
    frac = x - k
    s = signal.samples
    if len(signal) == 1:
        out = np.broadcast_to(s[0], t.shape).copy()
    else:
        out = s[k] * (1.0 - frac) + s[k + 1] * frac
    return float(out) if np.isscalar(t_s) or t.ndim == 0 else out


def moving_average(signal: SampledSignal, width_s: float) -> SampledSignal:
    """Centered moving average with shrinking edges (no phase shift)."""
    if len(signal) == 0:
        raise EmptySignal("cannot smooth an empty signal")
    w = max(1, int(round(width_s * signal.sample_rate_hz)))
    if w % 2 == 0:
        w += 1
    kernel = np.ones(w)
    norm = np.convolve(np.ones(len(signal)), kernel, mode="same")
    smoothed = np.convolve(signal.samples, kernel, mode="same") / norm
    return signal.with_samples(smoothed)


@dataclass(frozen=True)
class CuffTrace:
    """A cuff-pressure recording with an identified deflation segment.

    The deflation segment must be monotone after smoothing: a 1 s moving
    average of the pressure may locally rise by at most
    ``DEFLATION_MONOTONE_TOL_MMHG`` anywhere inside the segment. The raw
    trace is allowed to wiggle (pulse-synchronous oscillations ride on the
    deflation ramp).
    """

    pressure: SampledSignal
    deflation_start_s: float
    deflation_end_s: float

    def __post_init__(self) -> None:
        if self.pressure.unit != "mmHg":
            raise InvalidParams(f"cuff pressure must be in mmHg, got {self.pressure.unit!r}")
        if len(self.pressure) == 0:
            raise EmptySignal("cuff trace has no samples")
        if not self.deflation_start_s < self.deflation_end_s:
            raise InvalidParams("deflation must start before it ends")
        start, end = self.pressure.start_time_s, self.pressure.end_time_s
        if self.deflation_start_s < start - 1e-9 or self.deflation_end_s > end + 1e-9:
            raise InvalidParams("deflation segment outside the recorded span")
        seg = slice_signal(
            self.smoothed, Window(self.deflation_start_s, self.deflation_end_s - self.deflation_start_s)
        )
        rise = float(np.max(seg.samples - np.minimum.accumulate(seg.samples)))
        if rise > DEFLATION_MONOTONE_TOL_MMHG:
            raise InvalidParams(
                f"smoothed deflation rises by {rise:.3f} mmHg, "
                f"more than the allowed {DEFLATION_MONOTONE_TOL_MMHG} mmHg"
            )

    @cached_property
    def smoothed(self) -> SampledSignal:
        """Pressure with beat-scale oscillations averaged out."""
        return moving_average(self.pressure, CUFF_SMOOTHING_S)

    @property
    def deflation_window(self) -> Window:
        return Window(self.deflation_start_s, self.deflation_end_s - self.deflation_start_s)

    def pressure_at(self, t_s) -> float:
        """Deflation-baseline pressure at ``t_s`` (smoothed, interpolated)."""
        return interpolate_at(self.smoothed, t_s)

    @classmethod
    def from_pressure(
        cls,
        pressure: SampledSignal,
        min_rate_mmhg_s: float = 0.2,
        min_span_mmhg: float = 10.0,
    ) -> "CuffTrace":
        """Locate the deflation segment of a raw pressure recording.

        Finds the longest run where the smoothed pressure falls at
        ``min_rate_mmhg_s`` or faster and spans at least ``min_span_mmhg``.

        Raises
        ------
        InvalidParams
            If no qualifying deflation segment exists.
        """
        smoothed = moving_average(pressure, CUFF_SMOOTHING_S)
        rate = pressure.sample_rate_hz
        slope = np.gradient(smoothed.samples) * rate
        falling = slope <= -min_rate_mmhg_s
        best = (0, 0)
        i = 0
        n = len(pressure)
        while i < n:
            if falling[i]:
                j = i
                while j + 1 < n and falling[j + 1]:
                    j += 1
                if j - i > best[1] - best[0]:
                    best = (i, j)
                i = j + 1
            else:
                i += 1
        i0, i1 = best
        span = smoothed.samples[i0] - smoothed.samples[i1]
        if i1 <= i0 or span < min_span_mmhg:
            raise InvalidParams("no deflation segment found in the pressure trace")
        t0 = pressure.start_time_s + i0 / rate
        t1 = pressure.start_time_s + i1 / rate
        return cls(pressure, t0, t1)


# --- CSV persistence -------------------------------------------------------

_CSV_HEADER = "time_s,value"


def sidecar_path(csv_path) -> Path:
    """Metadata file that travels with a signal CSV (same stem, .json)."""
    p = Path(csv_path)
    return p.with_suffix(".json")


def save_signal_csv(signal: SampledSignal, csv_path) -> None:
    """Write a signal as ``time_s,value`` rows plus a JSON sidecar.

    The sidecar records ``sample_rate_hz``, ``unit`` and ``start_time_s``;
    the time column is generated from those, so the pair round-trips.
    """
    p = Path(csv_path)
    times = signal.times()
    with open(p, "w", encoding="utf-8") as fh:
        fh.write(_CSV_HEADER + "\n")
        for t, v in zip(times, signal.samples):
            fh.write(f"{t:.9f},{v:.12g}\n")
    meta = {
        "sample_rate_hz": signal.sample_rate_hz,
        "start_time_s": signal.start_time_s,
        "unit": signal.unit,
    }
    with open(sidecar_path(p), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_signal_csv(csv_path) -> SampledSignal:
    """Read a signal CSV plus its sidecar back into a :class:`SampledSignal`.

    Raises
    ------
    FormatError
        Naming the offending line, if the CSV or sidecar is malformed or
        the time column disagrees with the declared rate by more than 1 ns.
    """
    p = Path(csv_path)
    if not p.exists():
        raise FormatError(f"{p}: missing signal file")
    side = sidecar_path(p)
    if not side.exists():
        raise FormatError(f"{side}: missing sidecar metadata file")
    try:
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{side}: not valid JSON ({exc})") from exc
    for key in ("sample_rate_hz", "start_time_s", "unit"):
        if key not in meta:
            raise FormatError(f"{side}: missing required key {key!r}")
    rate = float(meta["sample_rate_hz"])
    start = float(meta["start_time_s"])
    unit = meta["unit"]

    values = []
    with open(p, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != _CSV_HEADER:
            raise FormatError(f"{p}, line 1: expected header {_CSV_HEADER!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"{p}, line {lineno}: expected 2 fields, got {len(parts)}")
            try:
                t, v = float(parts[0]), float(parts[1])
            except ValueError:
                raise FormatError(f"{p}, line {lineno}: non-numeric field") from None
            expected = start + (lineno - 2) / rate
            if abs(t - expected) > 1e-9:
                raise FormatError(
                    f"{p}, line {lineno}: time {t} inconsistent with "
                    f"sample_rate_hz={rate} (expected {expected})"
                )
            values.append(v)
    try:
        return SampledSignal(values, rate, start, unit)
    except (InvalidParams, InvalidRate) as exc:
        raise FormatError(f"{p}: {exc}") from exc


def check_aligned(signals: Iterable[SampledSignal], tol_s: float = 0.010) -> None:
    """Verify that channels of one record share rate and start time.

    Raises
    ------
    AlignmentError
        If sample rates differ, or start times differ by more than
        ``tol_s`` (default 10 ms).
    """
    sigs = list(signals)
    if not sigs:
        return
    rate0, start0 = sigs[0].sample_rate_hz, sigs[0].start_time_s
    for s in sigs[1:]:
        if abs(s.sample_rate_hz - rate0) > 1e-9 * rate0:
            raise AlignmentError(
                f"sample rates differ across channels: {s.sample_rate_hz} vs {rate0}"
            )
        if abs(s.start_time_s - start0) > tol_s:
            raise AlignmentError(
                f"start times differ by {abs(s.start_time_s - start0) * 1e3:.1f} ms "
                f"(allowed {tol_s * 1e3:.0f} ms)"
            )
