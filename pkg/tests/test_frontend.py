"""Filter designs, measured responses, and the carrier round trip."""

from __future__ import annotations

import numpy as np
import pytest

from bpbench.errors import (
    EmptySignal,
    InvalidCutoff,
    InvalidParams,
    RateMismatch,
    RateTooLow,
    UnrealizableSpec,
)
from bpbench.frontend import (
    CARRIER_HZ,
    CARRIER_RATE_HZ,
    MAX_FILTER_ORDER,
    OSC_BAND,
    PPG_BAND,
    BandpassSpec,
    apply_filter,
    check_bandpass_response,
    design_bandpass,
    design_lowpass2,
    export_response_csv,
    frequency_response,
    measure_tone_gain,
    modulate_carrier,
    sweep_frequencies,
    synchronous_demodulate,
)
from bpbench.signals import SampledSignal
from bpbench.simulator import pulse_waveform

RATE = 100.0


@pytest.fixture(scope="module")
def osc_filter():
    return design_bandpass(OSC_BAND, RATE)


class TestBandpassDesign:
    def test_realization_facts(self, osc_filter):
        assert 0 < osc_filter.order <= MAX_FILTER_ORDER
        assert osc_filter.sample_rate_hz == RATE
        assert 0.0 < osc_filter.usable_after_s < osc_filter.settling_time_s
        assert osc_filter.spec == OSC_BAND
        assert "bandpass" in osc_filter.label

    def test_design_passes_its_own_response_check(self, osc_filter):
        assert check_bandpass_response(osc_filter) == []

    def test_ppg_band_designs_too(self):
        filt = design_bandpass(PPG_BAND, RATE)
        assert check_bandpass_response(filt) == []

    def test_response_at_the_spec_edges(self, osc_filter):
        gain_db, _ = frequency_response(
            osc_filter,
            [OSC_BAND.stop_lo_hz, OSC_BAND.pass_lo_hz, OSC_BAND.pass_hi_hz, OSC_BAND.stop_hi_hz],
        )
        assert gain_db[0] <= -OSC_BAND.stopband_atten_db
        assert abs(gain_db[1]) <= OSC_BAND.passband_ripple_db
        assert abs(gain_db[2]) <= OSC_BAND.passband_ripple_db
        assert gain_db[3] <= -OSC_BAND.stopband_atten_db

    @pytest.mark.parametrize("freq, bound", [(0.5, 1.0), (1.0, 1.0), (2.0, 1.0)])
    def test_measured_passband_tone(self, osc_filter, freq, bound):
        assert abs(measure_tone_gain(osc_filter, freq)) <= bound

    @pytest.mark.parametrize("freq", [0.1, 5.0])
    def test_measured_stop_edge_tone(self, osc_filter, freq):
        assert measure_tone_gain(osc_filter, freq) <= -80.0

    def test_stop_edge_at_nyquist_is_unrealizable(self):
        with pytest.raises(UnrealizableSpec, match="Nyquist"):
            design_bandpass(OSC_BAND, 8.0)

    def test_order_cap_is_enforced(self):
        narrow = BandpassSpec(0.9, 1.1, 0.85, 1.15, 0.1, 100.0)
        with pytest.raises(UnrealizableSpec, match="order"):
            design_bandpass(narrow, RATE)

    def test_spec_validation(self):
        with pytest.raises(InvalidParams):
            BandpassSpec(2.0, 1.0, 0.1, 5.0)
        with pytest.raises(InvalidParams):
            BandpassSpec(0.5, 2.0, 0.6, 5.0)
        with pytest.raises(InvalidParams):
            BandpassSpec(0.5, 2.0, 0.1, 5.0, passband_ripple_db=0.0)

    def test_sweep_covers_both_stopbands(self, osc_filter):
        tones = sweep_frequencies(osc_filter, 40)
        assert tones.size == 40
        assert tones[0] == pytest.approx(OSC_BAND.stop_lo_hz / 4.0)
        assert tones[-1] == pytest.approx(4.0 * OSC_BAND.stop_hi_hz)
        assert np.all(np.diff(tones) > 0)

    def test_export_response_csv(self, osc_filter, tmp_path):
        path = tmp_path / "resp.csv"
        export_response_csv(osc_filter, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "freq_hz,gain_db,phase_deg"
        assert len(lines) == 161


class TestLowpass:
    def test_minus_three_db_at_cutoff(self):
        filt = design_lowpass2(30.0, 1000.0)
        assert measure_tone_gain(filt, 30.0) == pytest.approx(-3.01, abs=0.1)
        assert measure_tone_gain(filt, 1.0) == pytest.approx(0.0, abs=0.05)

    @pytest.mark.parametrize("cutoff", [0.0, -5.0, 500.0, 700.0])
    def test_cutoff_bounds(self, cutoff):
        with pytest.raises(InvalidCutoff):
            design_lowpass2(cutoff, 1000.0)


class TestApplyFilter:
    def test_is_linear(self, osc_filter):
        rng = np.random.default_rng(5)
        a = SampledSignal(rng.normal(size=600), RATE)
        b = SampledSignal(rng.normal(size=600), RATE)
        both = SampledSignal(a.samples + b.samples, RATE)
        out_sum = apply_filter(osc_filter, a).samples + apply_filter(osc_filter, b).samples
        assert np.allclose(apply_filter(osc_filter, both).samples, out_sum, atol=1e-9)

    def test_carries_settling_metadata(self, osc_filter):
        out = apply_filter(osc_filter, SampledSignal(np.ones(100), RATE))
        assert out.meta["usable_after_s"] == osc_filter.usable_after_s
        assert out.meta["settling_time_s"] == osc_filter.settling_time_s

    def test_rate_mismatch(self, osc_filter):
        with pytest.raises(RateMismatch):
            apply_filter(osc_filter, SampledSignal(np.ones(100), 99.0))

    def test_empty_signal(self, osc_filter):
        with pytest.raises(EmptySignal):
            apply_filter(osc_filter, SampledSignal([], RATE))


class TestCarrierChain:
    def _pulse_envelope(self, seconds=6.0, fs=100.0):
        t = np.arange(int(seconds * fs)) / fs
        return SampledSignal(pulse_waveform(t, 75.0), fs, unit="millivolt")

    def test_round_trip_recovers_envelope(self):
        env = self._pulse_envelope()
        back = synchronous_demodulate(modulate_carrier(env), working_rate_hz=100.0)
        n = min(len(env), len(back))
        skip = int(float(back.meta["usable_after_s"]) * 100.0)
        a, b = env.samples[skip:n], back.samples[skip:n]
        rel = np.sqrt(np.mean((a - b) ** 2) / np.mean(a * a))
        assert rel <= 0.02

    def test_round_trip_preserves_dc_level(self):
        env = SampledSignal(np.full(600, 0.7), 100.0)
        back = synchronous_demodulate(modulate_carrier(env), working_rate_hz=100.0)
        mid = back.samples[150:450]
        assert np.allclose(mid, 0.7, atol=0.01)

    def test_modulated_flux_never_negative(self):
        env = self._pulse_envelope()
        carried = modulate_carrier(env)
        # (envelope + offset) must stay nonnegative; recover it at the
        # carrier peaks where sin = +/-1
        t = carried.times()
        peaks = np.abs(np.abs(np.sin(2 * np.pi * CARRIER_HZ * t)) - 1.0) < 1e-6
        assert np.all(np.abs(carried.samples[peaks]) >= 0.0)
        assert carried.meta["modulation_bias"] >= 1.0
        assert carried.sample_rate_hz == CARRIER_RATE_HZ

    def test_modulator_validation(self):
        env = self._pulse_envelope()
        with pytest.raises(RateTooLow):
            modulate_carrier(env, carrier_hz=1500.0, carrier_rate_hz=4000.0)
        with pytest.raises(EmptySignal):
            modulate_carrier(SampledSignal([], 100.0))

    def test_demodulator_validation(self):
        with pytest.raises(RateTooLow):
            synchronous_demodulate(SampledSignal(np.ones(100), 1000.0))
        with pytest.raises(EmptySignal):
            synchronous_demodulate(SampledSignal([], CARRIER_RATE_HZ))

    def test_explicit_bias_override(self):
        # synthetic drive with known bias 2.0 and no metadata
        fs = CARRIER_RATE_HZ
        t = np.arange(int(2 * fs)) / fs
        flux = (0.5 * np.sin(2 * np.pi * 2.0 * t) + 2.0) * np.sin(2 * np.pi * CARRIER_HZ * t)
        back = synchronous_demodulate(SampledSignal(flux, fs), bias=2.0, working_rate_hz=100.0)
        t2 = back.times()
        keep = (t2 > 0.5) & (t2 < 1.5)
        err = back.samples[keep] - 0.5 * np.sin(2 * np.pi * 2.0 * t2[keep])
        assert np.max(np.abs(err)) < 0.02
