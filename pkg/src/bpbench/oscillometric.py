"""Oscillometric estimation with a reference channel.

The idea: compare the photoplethysmogram distal to the cuff (main
channel) against one from an unoccluded site (reference channel). While
the cuff holds the artery shut the two channels share nothing but noise;
as the cuff deflates through the systolic-to-diastolic band the distal
pulse reappears, grows and sharpens until the channels coincide. A
normalized cross-correlation, maximized over a small lag range, turns
that progression into a monotone track from which threshold crossings
read off systolic and diastolic pressure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSegment,
    InsufficientData,
    InvalidParams,
    NoOcclusionObserved,
    NoRecoveryObserved,
    RateMismatch,
)
from .results import METHOD_OSCILLOMETRIC, BpQuality, BpResult
from .signals import CuffTrace, SampledSignal, Window, slice_signal

#: a segment is degenerate when its variance is below this times peak^2
DEGENERATE_REL_VARIANCE = 1e-12


@dataclass(frozen=True)
class CcfConfig:
    """Windowing and detection settings for the correlation track.

    The window must hold at least one cardiac cycle at the slowest
    supported heart rate; the lag search must stay under half a window
    so every lag keeps a majority overlap. Thresholds are fractions of
    full coincidence: the track crossing ``thresh_sys`` upward marks the
    first reappearance of the distal pulse (systolic), and crossing
    ``thresh_dias`` marks near-total coincidence (diastolic).

    The gate settings control how non-pulsatile windows are recognised:
    window amplitude is summarised by a robust percentile (insensitive to
    brief transients), compared against a noise floor taken as the
    ``gate_floor_percentile`` of all window amplitudes over the deflation
    (the quiet supra-systolic stretch supplies that low quantile, and
    bursts can only push amplitudes up, never drag the floor down), and
    the track is released after the last quiet stretch at least
    ``gate_consecutive`` windows long.
    """

    window_s: float = 2.0
    hop_s: float = 0.25
    # twice the largest plausible transit delay; keeping the search this
    # tight stops the peak picker from drifting onto the neighbouring
    # beat-period side lobe at high heart rates
    max_lag_s: float = 0.3
    thresh_sys: float = 0.10
    thresh_dias: float = 0.90
    # must sit inside the supra-systolic quiet fraction of the track for
    # any protocol this library targets (inflation margin guarantees
    # several seconds above systolic)
    gate_floor_percentile: float = 10.0
    gate_factor: float = 1.5
    gate_percentile: float = 60.0
    # successive hops overlap heavily, so demand persistence across most
    # of a window length before a stretch counts as quiet; the gate is
    # released at the first active window after the last such stretch
    gate_consecutive: int = 5

    def __post_init__(self) -> None:
        if self.window_s <= 0.0 or self.hop_s <= 0.0:
            raise InvalidParams("window and hop must be positive")
        if not 0.0 < self.max_lag_s < self.window_s / 2.0:
            raise InvalidParams(
                f"max lag {self.max_lag_s} s must lie in (0, window/2 = {self.window_s / 2.0} s)"
            )
        if not 0.0 < self.thresh_sys < self.thresh_dias < 1.0:
            raise InvalidParams(
                f"need 0 < thresh_sys < thresh_dias < 1, got {self.thresh_sys}, {self.thresh_dias}"
            )
        if self.gate_consecutive < 1:
            raise InvalidParams("gate run length must be at least 1")
        if not 0.0 < self.gate_percentile < 100.0:
            raise InvalidParams("gate percentile must be in (0, 100)")
        if not 0.0 < self.gate_floor_percentile < 50.0:
            raise InvalidParams("gate floor percentile must be in (0, 50)")
        if self.gate_factor <= 1.0:
            raise InvalidParams("gate factor must exceed 1")


@dataclass(frozen=True)
class CcfCurve:
    """Normalized cross-correlation of one window, over symmetric lags."""

    lags_s: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        lags = np.asarray(self.lags_s, dtype=np.float64).copy()
        vals = np.asarray(self.values, dtype=np.float64).copy()
        if lags.shape != vals.shape or lags.ndim != 1:
            raise InvalidParams("lags and values must be matching 1-d arrays")
        if not np.allclose(lags, -lags[::-1], atol=1e-12):
            raise InvalidParams("lag grid must be symmetric about zero")
        if np.any(np.abs(vals) > 1.0 + 1e-9):
            raise InvalidParams("normalized correlation left [-1, 1]")
        lags.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "lags_s", lags)
        object.__setattr__(self, "values", vals)

    def peak(self) -> tuple[float, float]:
        """Maximum correlation and its lag, refined to sub-sample precision.

        A parabola through the discrete maximum and its neighbours gives
        the refined lag; the raw maximum value is returned unchanged so
        the bound ``|b| <= 1`` is preserved exactly.
        """
        i = int(np.argmax(self.values))
        lag = float(self.lags_s[i])
        if 0 < i < len(self.values) - 1:
            y0, y1, y2 = self.values[i - 1], self.values[i], self.values[i + 1]
            denom = y0 - 2.0 * y1 + y2
            if denom < -1e-15:
                delta = 0.5 * (y0 - y2) / denom
                delta = float(np.clip(delta, -0.5, 0.5))
                step = float(self.lags_s[1] - self.lags_s[0])
                lag += delta * step
        return float(self.values[i]), lag


def _check_segment(seg: np.ndarray, name: str) -> None:
    peak = float(np.max(np.abs(seg))) if seg.size else 0.0
    var = float(np.var(seg)) if seg.size else 0.0
    if var <= DEGENERATE_REL_VARIANCE * peak * peak:
        raise DegenerateSegment(f"{name} segment has no usable variance (peak {peak:g})")


def normalized_ccf(
    s1: SampledSignal,
    s2: SampledSignal,
    window: Window,
    max_lag_s: float,
) -> CcfCurve:
    """Normalized cross-correlation of two channels over one time window.

    Both channels are sliced to the window and mean-removed; for every
    discrete lag ``k`` in ``[-max_lag, +max_lag]`` the estimate is

        b[k] = sum_i a[i] * b[i - k] / sqrt(sum a^2 * sum b^2)

    with all three sums running over the overlapping index range for
    that lag. The per-lag normalization keeps ``|b| <= 1`` exactly
    (Cauchy-Schwarz), regardless of signal amplitudes.

    Raises
    ------
    RateMismatch
        If the channels are sampled at different rates.
    InvalidParams
        If ``max_lag_s`` is not in ``(0, window/2)``.
    WindowOutOfRange
        If the window leaves either channel.
    DegenerateSegment
        If either windowed segment has (numerically) no variance.
    """
    if abs(s1.sample_rate_hz - s2.sample_rate_hz) > 1e-9 * s1.sample_rate_hz:
        raise RateMismatch(
            f"channels sampled at {s1.sample_rate_hz} and {s2.sample_rate_hz} Hz"
        )
    if not 0.0 < max_lag_s < window.duration_s / 2.0:
        raise InvalidParams(
            f"max lag {max_lag_s} s must lie in (0, half-window {window.duration_s / 2.0} s)"
        )
    fs = s1.sample_rate_hz
    a = slice_signal(s1, window).samples
    b = slice_signal(s2, window).samples
    n = min(a.size, b.size)
    a, b = a[:n], b[:n]
    _check_segment(a, "first")
    _check_segment(b, "second")
    a = a - a.mean()
    b = b - b.mean()

    k_max = int(math.floor(max_lag_s * fs + 1e-9))
    k_max = min(k_max, n - 1)
    full = np.correlate(a, b, mode="full")  # full[k + n - 1] = sum_i a[i] b[i-k]
    num = full[(n - 1) - k_max : (n - 1) + k_max + 1]

    ca = np.concatenate(([0.0], np.cumsum(a * a)))
    cb = np.concatenate(([0.0], np.cumsum(b * b)))
    ks = np.arange(-k_max, k_max + 1)
    e_a = np.empty(ks.size)
    e_b = np.empty(ks.size)
    for j, k in enumerate(ks):
        if k >= 0:
            e_a[j] = ca[n] - ca[k]
            e_b[j] = cb[n - k]
        else:
            e_a[j] = ca[n + k]
            e_b[j] = cb[n] - cb[-k]
    den = np.sqrt(e_a * e_b)
    vals = np.divide(num, den, out=np.zeros_like(den), where=den > 0.0)
    vals = np.clip(vals, -1.0, 1.0)
    return CcfCurve(ks / fs, vals)


@dataclass(frozen=True)
class CcfTrack:
    """Correlation peak and its lag for each sliding window of a deflation."""

    times_s: np.ndarray
    peak_corr: np.ndarray
    peak_lag_s: np.ndarray
    low_signal: np.ndarray
    transient_excluded: bool = False

    def __post_init__(self) -> None:
        t = np.asarray(self.times_s, dtype=np.float64).copy()
        pc = np.asarray(self.peak_corr, dtype=np.float64).copy()
        pl = np.asarray(self.peak_lag_s, dtype=np.float64).copy()
        ls = np.asarray(self.low_signal, dtype=bool).copy()
        if not (t.shape == pc.shape == pl.shape == ls.shape) or t.ndim != 1:
            raise InvalidParams("track arrays must be matching 1-d arrays")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidParams("track times must be strictly increasing")
        if pc.size and (pc.min() < -1.0 - 1e-9 or pc.max() > 1.0 + 1e-9):
            raise InvalidParams("peak correlation left [-1, 1]")
        for arr in (t, pc, pl, ls):
            arr.setflags(write=False)
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "peak_corr", pc)
        object.__setattr__(self, "peak_lag_s", pl)
        object.__setattr__(self, "low_signal", ls)

    def __len__(self) -> int:
        return self.times_s.size


def correlation_track(
    main: SampledSignal,
    ref: SampledSignal,
    cuff: CuffTrace,
    config: CcfConfig | None = None,
) -> CcfTrack:
    """Slide a correlation window across the deflation and track its peak.

    Both PPG channels are expected to be band-pass cleaned already (see
    the pipeline module); windows that start inside a filter settling
    region (``usable_after_s`` metadata) are skipped and the track is
    marked ``transient_excluded``.

    Windows with no pulsation in the main channel must read as zero
    coincidence rather than as noise: the lag-maximized correlation of
    pure noise against a periodic reference is far above zero, so each
    window's amplitude is summarised by a robust percentile statistic and
    compared against the floor taken as a low quantile of all window
    amplitudes (the supra-systolic stretch that the inflation protocol
    guarantees supplies that quantile). Because the
    whole record is in hand, the release point is placed after the LAST
    quiet stretch of at least ``gate_consecutive`` windows: a motion
    burst merely punctuates the pre-pulsatile quiet (quiet resumes once
    its ringing decays) and so cannot release the gate, while genuine
    reopening, after which the channel never goes quiet again, releases
    it at the first active window. Windows before the release point are
    recorded as ``peak_corr = 0`` and flagged ``low_signal``, as are
    windows whose segment is outright degenerate.

    Raises
    ------
    InsufficientData
        If the usable deflation interval is shorter than two windows.
    """
    cfg = config or CcfConfig()
    lo = cuff.deflation_start_s
    hi = cuff.deflation_end_s
    usable_from = max(
        (s.start_time_s + float(s.meta.get("usable_after_s", 0.0)) for s in (main, ref)),
        default=lo,
    )
    start = max(lo, usable_from)
    transient_excluded = start > lo + 1e-9
    if hi - start < 2.0 * cfg.window_s:
        raise InsufficientData(
            f"usable deflation span {hi - start:.2f} s is under two windows "
            f"({2 * cfg.window_s:.2f} s)"
        )

    t0s = []
    t = start
    while t + cfg.window_s <= hi + 1e-9:
        t0s.append(t)
        t += cfg.hop_s
    if len(t0s) < 2:
        raise InsufficientData("fewer than two correlation windows fit the deflation")

    n_win = len(t0s)
    stats = np.empty(n_win)
    segments = []
    for i, t0 in enumerate(t0s):
        win = Window(t0, cfg.window_s)
        seg = slice_signal(main, win).samples
        # centered on the median, not the mean: a window that is mostly
        # dead must read ~0 even when a short live or spiky stretch
        # drags the mean away from the resting level
        stats[i] = np.percentile(np.abs(seg - np.median(seg)), cfg.gate_percentile)
        segments.append(win)

    floor = float(np.percentile(stats, cfg.gate_floor_percentile))
    gate_level = cfg.gate_factor * floor + 1e-12 * max(float(stats.max()), 1.0)
    quiet = stats <= gate_level
    # end of the last quiet run at least gate_consecutive long
    open_from = n_win
    run = 0
    last_quiet_end = -1
    for i in range(n_win):
        run = run + 1 if quiet[i] else 0
        if run >= cfg.gate_consecutive:
            last_quiet_end = i
    for i in range(last_quiet_end + 1, n_win):
        if not quiet[i]:
            open_from = i
            break

    times = np.asarray(t0s) + cfg.window_s / 2.0
    peak_corr = np.zeros(n_win)
    peak_lag = np.zeros(n_win)
    low_signal = np.zeros(n_win, dtype=bool)
    for i, win in enumerate(segments):
        if i < open_from:
            low_signal[i] = True
            continue
        try:
            curve = normalized_ccf(main, ref, win, cfg.max_lag_s)
        except DegenerateSegment:
            low_signal[i] = True
            continue
        peak_corr[i], peak_lag[i] = curve.peak()

    return CcfTrack(times, peak_corr, peak_lag, low_signal, transient_excluded)


def _cross_time(t0: float, t1: float, v0: float, v1: float, level: float) -> float:
    if v1 == v0:
        return t1
    return t0 + (level - v0) * (t1 - t0) / (v1 - v0)


def detect_bp_oscillometric(
    track: CcfTrack,
    cuff: CuffTrace,
    config: CcfConfig | None = None,
) -> BpResult:
    """Read systolic and diastolic pressure off a correlation track.

    Systolic: the first time the track, having started below
    ``thresh_sys``, crosses it from below; diastolic: the first
    subsequent crossing of ``thresh_dias``. Both crossing times are
    refined by linear interpolation between track points and converted
    to pressure on the smoothed cuff trace. Later re-crossings of the
    systolic threshold are ignored but counted on the quality record.

    Raises
    ------
    InsufficientData
        If the track has fewer than two points.
    NoOcclusionObserved
        If the track never drops below ``thresh_sys`` (the cuff never
        actually occluded the artery).
    NoRecoveryObserved
        If a required upward crossing never happens before the deflation
        ends (released too early, or no pulsation ever returned).
    """
    cfg = config or CcfConfig()
    pc = track.peak_corr
    times = track.times_s
    if len(track) < 2:
        raise InsufficientData("correlation track has fewer than two points")

    below = np.nonzero(pc < cfg.thresh_sys)[0]
    if below.size == 0:
        raise NoOcclusionObserved(
            f"correlation never fell below {cfg.thresh_sys}; lowest was {pc.min():.3f}"
        )
    i0 = int(below[0])

    i_sys = None
    for i in range(i0, len(pc) - 1):
        if pc[i] < cfg.thresh_sys <= pc[i + 1]:
            i_sys = i
            break
    if i_sys is None:
        raise NoRecoveryObserved(
            f"correlation never rose above the systolic threshold {cfg.thresh_sys}"
        )
    t_sys = _cross_time(times[i_sys], times[i_sys + 1], pc[i_sys], pc[i_sys + 1], cfg.thresh_sys)

    recrossings = 0
    for i in range(i_sys + 1, len(pc) - 1):
        if pc[i] < cfg.thresh_sys <= pc[i + 1]:
            recrossings += 1

    i_dias = None
    for i in range(i_sys, len(pc) - 1):
        if pc[i] < cfg.thresh_dias <= pc[i + 1]:
            i_dias = i
            break
    if i_dias is None:
        raise NoRecoveryObserved(
            f"correlation never reached the diastolic threshold {cfg.thresh_dias}"
        )
    t_dias = _cross_time(
        times[i_dias], times[i_dias + 1], pc[i_dias], pc[i_dias + 1], cfg.thresh_dias
    )

    inside = (track.times_s >= t_sys) & (track.times_s <= t_dias)
    quality = BpQuality(
        transient_excluded=track.transient_excluded,
        extrapolated=False,
        low_signal=bool(np.any(track.low_signal[inside])),
        recrossings=recrossings,
    )
    return BpResult(
        sbp_mmhg=float(cuff.pressure_at(t_sys)),
        dbp_mmhg=float(cuff.pressure_at(t_dias)),
        t_sys_s=float(t_sys),
        t_dias_s=float(t_dias),
        method=METHOD_OSCILLOMETRIC,
        quality=quality,
    )


def track_to_csv(track: CcfTrack, csv_path) -> None:
    """Write the track as ``time_s,peak_corr,peak_lag_s`` rows."""
    with open(Path(csv_path), "w", encoding="utf-8") as fh:
        fh.write("time_s,peak_corr,peak_lag_s\n")
        for t, c, lag in zip(track.times_s, track.peak_corr, track.peak_lag_s):
            fh.write(f"{t:.6f},{c:.9f},{lag:.9f}\n")
