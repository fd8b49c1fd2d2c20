"""Normalized cross-correlation against hand arithmetic and direct evaluation.

The estimator is validated two ways: a four-sample case whose per-lag
sums were worked out on paper, and a definitional re-evaluation that
slices the overlap for every lag and forms the three sums directly.
The full 200-pair equivalence budget lives in the acceptance suite; the
cases here are the small, debuggable versions.
"""

from __future__ import annotations

import numpy as np
import pytest

from bpbench.errors import (
    DegenerateSegment,
    InvalidParams,
    RateMismatch,
    WindowOutOfRange,
)
from bpbench.oscillometric import CcfCurve, normalized_ccf
from bpbench.signals import SampledSignal, Window


def brute_ccf(a: np.ndarray, b: np.ndarray, k_max: int) -> np.ndarray:
    """Definitional normalized cross-correlation, one explicit slice per lag."""
    a = a - a.mean()
    b = b - b.mean()
    n = a.size
    out = np.empty(2 * k_max + 1)
    for j, k in enumerate(range(-k_max, k_max + 1)):
        if k >= 0:
            aa, bb = a[k:n], b[0 : n - k]
        else:
            aa, bb = a[0 : n + k], b[-k:n]
        den = np.sqrt(np.sum(aa * aa) * np.sum(bb * bb))
        out[j] = np.sum(aa * bb) / den if den > 0 else 0.0
    return np.clip(out, -1.0, 1.0)


def test_four_sample_hand_case():
    # a = [0, 1, 0, -1], b = [1, 0, -1, 0] at 1 Hz; per-lag sums done on paper:
    #   k=-1: sum a[i]b[i+1] = -1, energies 1 and 1      -> -1
    #   k= 0: orthogonal                                  ->  0
    #   k=+1: sum a[i]b[i-1] = 2, energies 2 and 2        -> +1
    s1 = SampledSignal([0.0, 1.0, 0.0, -1.0], 1.0)
    s2 = SampledSignal([1.0, 0.0, -1.0, 0.0], 1.0)
    curve = normalized_ccf(s1, s2, Window(0.0, 4.0), max_lag_s=1.5)
    assert np.allclose(curve.lags_s, [-1.0, 0.0, 1.0])
    assert np.allclose(curve.values, [-1.0, 0.0, 1.0], atol=1e-12)
    corr, lag = curve.peak()
    assert corr == pytest.approx(1.0)
    assert lag == pytest.approx(1.0)  # edge maximum, no parabolic refinement


def test_matches_direct_evaluation_on_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(30):
        n = int(rng.integers(16, 257))
        fs = float(rng.choice([50.0, 100.0, 250.0]))
        a = rng.normal(size=n)
        b = 0.6 * np.roll(a, int(rng.integers(-4, 5))) + 0.4 * rng.normal(size=n)
        k_max = int(rng.integers(1, n // 2))
        max_lag = (k_max + 0.5) / fs
        if not max_lag < (n / fs) / 2.0:
            k_max = n // 2 - 1
            max_lag = (k_max + 0.5) / fs
        curve = normalized_ccf(
            SampledSignal(a, fs), SampledSignal(b, fs), Window(0.0, n / fs), max_lag
        )
        expected = brute_ccf(a, b, k_max)
        assert curve.values.size == expected.size
        assert np.max(np.abs(curve.values - expected)) < 1e-9


def test_invariant_to_scale_and_offset():
    rng = np.random.default_rng(7)
    a = rng.normal(size=200)
    b = rng.normal(size=200)
    win = Window(0.0, 2.0)
    base = normalized_ccf(SampledSignal(a, 100.0), SampledSignal(b, 100.0), win, 0.4)
    scaled = normalized_ccf(
        SampledSignal(3.7 * a + 11.0, 100.0), SampledSignal(-0.2 * b - 5.0, 100.0), win, 0.4
    )
    assert np.allclose(np.abs(base.values), np.abs(scaled.values), atol=1e-12)
    assert np.allclose(base.values, -scaled.values, atol=1e-12)


def test_swapping_channels_mirrors_the_lag_axis():
    rng = np.random.default_rng(11)
    a = rng.normal(size=128)
    b = rng.normal(size=128)
    win = Window(0.0, 1.28)
    fwd = normalized_ccf(SampledSignal(a, 100.0), SampledSignal(b, 100.0), win, 0.3)
    rev = normalized_ccf(SampledSignal(b, 100.0), SampledSignal(a, 100.0), win, 0.3)
    assert np.allclose(fwd.values, rev.values[::-1], atol=1e-12)


def test_bounded_by_one_for_arbitrary_inputs():
    rng = np.random.default_rng(123)
    for _ in range(20):
        n = int(rng.integers(8, 400))
        a = rng.normal(size=n) * float(rng.uniform(1e-3, 1e3))
        b = rng.normal(size=n) * float(rng.uniform(1e-3, 1e3))
        curve = normalized_ccf(
            SampledSignal(a, 100.0),
            SampledSignal(b, 100.0),
            Window(0.0, n / 100.0),
            max_lag_s=(n // 2 - 1 + 0.5) / 100.0 if n > 4 else 0.005,
        )
        assert np.all(np.abs(curve.values) <= 1.0)


def test_recovers_a_known_transit_delay():
    fs = 100.0
    delay = 0.08
    t = np.arange(int(6 * fs)) / fs
    ref = np.sin(2 * np.pi * 1.3 * t)
    main = np.sin(2 * np.pi * 1.3 * (t - delay))
    curve = normalized_ccf(
        SampledSignal(main, fs), SampledSignal(ref, fs), Window(1.0, 3.0), 0.3
    )
    corr, lag = curve.peak()
    assert corr > 0.999
    assert lag == pytest.approx(delay, abs=0.003)


def test_parabolic_peak_refinement_hand_case():
    # exact parabola peaked at lag 0.3, sampled off-peak; the three-point
    # fit must land back on 0.3 and keep the raw maximum value
    lags = np.array([-0.5, -0.25, 0.0, 0.25, 0.5])
    values = 0.9 - (lags - 0.3) ** 2
    curve = CcfCurve(lags, values)
    corr, lag = curve.peak()
    assert corr == pytest.approx(0.8975, abs=1e-12)
    assert lag == pytest.approx(0.3, abs=1e-12)


class TestValidation:
    def test_rate_mismatch(self):
        s1 = SampledSignal(np.ones(100) + np.arange(100), 100.0)
        s2 = SampledSignal(np.arange(100.0), 50.0)
        with pytest.raises(RateMismatch):
            normalized_ccf(s1, s2, Window(0.0, 1.0), 0.1)

    def test_lag_must_fit_in_half_window(self):
        rng = np.random.default_rng(0)
        s = SampledSignal(rng.normal(size=200), 100.0)
        with pytest.raises(InvalidParams):
            normalized_ccf(s, s, Window(0.0, 2.0), 1.0)
        with pytest.raises(InvalidParams):
            normalized_ccf(s, s, Window(0.0, 2.0), 0.0)

    def test_window_outside_signal(self):
        rng = np.random.default_rng(0)
        s = SampledSignal(rng.normal(size=200), 100.0)
        with pytest.raises(WindowOutOfRange):
            normalized_ccf(s, s, Window(1.5, 2.0), 0.4)

    def test_constant_segment_is_degenerate(self):
        flat = SampledSignal(np.full(200, 3.0), 100.0)
        live = SampledSignal(np.sin(np.arange(200.0)), 100.0)
        with pytest.raises(DegenerateSegment):
            normalized_ccf(flat, live, Window(0.0, 2.0), 0.4)
        with pytest.raises(DegenerateSegment):
            normalized_ccf(live, flat, Window(0.0, 2.0), 0.4)

    def test_curve_rejects_asymmetric_lag_grid(self):
        with pytest.raises(InvalidParams):
            CcfCurve(np.array([-0.1, 0.0, 0.2]), np.zeros(3))

    def test_curve_rejects_out_of_range_values(self):
        with pytest.raises(InvalidParams):
            CcfCurve(np.array([-0.1, 0.0, 0.1]), np.array([0.0, 1.5, 0.0]))

    def test_curve_rejects_shape_mismatch(self):
        with pytest.raises(InvalidParams):
            CcfCurve(np.array([-0.1, 0.0, 0.1]), np.zeros(4))
