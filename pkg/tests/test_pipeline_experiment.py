"""Per-record analysis pipeline and the batch experiment runner."""

from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest

from bpbench.errors import ConfigInvalid, InvalidParams
from bpbench.experiment import (
    ExperimentConfig,
    config_from_dict,
    config_from_json,
    config_to_dict,
    default_subject_grid,
    run_experiment,
    trial_seed,
)
from bpbench.pipeline import analyze_record, outcome_as_dict, preprocess_ppg
from bpbench.signals import CuffTrace
from bpbench.simulator import ArtifactSpec, SubjectParams


class TestPreprocess:
    def test_removes_baseline_and_records_settling(self, clean_record):
        shifted = dataclasses.replace(
            clean_record.ref, samples=clean_record.ref.samples + 2.0
        )
        out = preprocess_ppg(shifted)
        assert out.sample_rate_hz == clean_record.ref.sample_rate_hz
        assert "usable_after_s" in out.meta
        usable = out.times() >= out.start_time_s + out.meta["usable_after_s"]
        assert abs(out.samples[usable].mean()) < 0.02
        # pulse content survives the detrend
        assert out.samples[usable].std() > 0.2


class TestAnalyzeRecord:
    def test_clean_record_yields_both_estimates(self, clean_record):
        out = analyze_record(clean_record)
        assert out.osc_error == "" and out.tacho_error == ""
        assert out.track is not None and out.envelope is not None
        assert out.osc_result.sbp_mmhg == pytest.approx(124.0, abs=3.0)
        assert out.osc_result.dbp_mmhg == pytest.approx(76.0, abs=3.0)
        assert out.tacho_result.sbp_mmhg == pytest.approx(124.0, abs=3.0)
        assert out.tacho_result.dbp_mmhg == pytest.approx(76.0, abs=3.0)

    def test_failures_are_captured_not_raised(self, clean_record):
        # truncate the usable deflation to 3 s: too short to window,
        # too few beats to build an envelope
        crippled = dataclasses.replace(
            clean_record, cuff=CuffTrace(clean_record.cuff.pressure, 3.0, 6.0)
        )
        out = analyze_record(crippled)
        assert out.osc_error == "InsufficientData"
        assert out.tacho_error == "TooFewBeats"
        assert out.osc_result is None and out.tacho_result is None

    def test_outcome_dict_success_shape(self, clean_record):
        d = outcome_as_dict(analyze_record(clean_record), clean_record)
        assert d["oscillometric"]["ok"] and d["tacho"]["ok"]
        assert d["truth"] == {"sbp_mmhg": 124.0, "dbp_mmhg": 76.0}
        for method in ("oscillometric", "tacho"):
            entry = d[method]
            assert set(entry) >= {"sbp_mmhg", "dbp_mmhg", "t_sys_s", "t_dias_s", "quality"}
            assert entry["sbp_dev_mmhg"] == pytest.approx(entry["sbp_mmhg"] - 124.0)
        json.dumps(d)  # must be serializable as-is

    def test_outcome_dict_without_record_omits_truth(self, clean_record):
        d = outcome_as_dict(analyze_record(clean_record))
        assert "truth" not in d
        assert "sbp_dev_mmhg" not in d["oscillometric"]

    def test_outcome_dict_failure_shape(self, clean_record):
        crippled = dataclasses.replace(
            clean_record, cuff=CuffTrace(clean_record.cuff.pressure, 3.0, 6.0)
        )
        d = outcome_as_dict(analyze_record(crippled))
        assert d["oscillometric"] == {"ok": False, "error": "InsufficientData"}
        assert d["tacho"] == {"ok": False, "error": "TooFewBeats"}


class TestTrialSeed:
    def test_frozen_values(self):
        assert trial_seed(0, 0, 0) == 2635072618980576772
        assert trial_seed(20260101, 2, 7) == 4737892807389388193

    def test_distinct_across_grid(self):
        seeds = {trial_seed(7, si, ri) for si in range(8) for ri in range(20)}
        assert len(seeds) == 160

    def test_independent_of_other_base(self):
        assert trial_seed(1, 0, 0) != trial_seed(2, 0, 0)


def test_default_grid_spans_the_ranges():
    grid = default_subject_grid()
    assert len(grid) == 6
    assert (grid[0].sbp_mmhg, grid[0].dbp_mmhg, grid[0].heart_rate_bpm) == (100.0, 60.0, 50.0)
    assert (grid[-1].sbp_mmhg, grid[-1].dbp_mmhg, grid[-1].heart_rate_bpm) == (160.0, 100.0, 90.0)
    sbps = [s.sbp_mmhg for s in grid]
    assert sbps == sorted(sbps)


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(repeats=0), "at least 1"),
        (dict(noise_rms=-1.0), "negative"),
        (dict(subjects=()), "at least one subject"),
        (dict(auto_inflate_margin_mmhg=-5.0), "margin"),
    ],
)
def test_experiment_config_validation(kwargs, match):
    with pytest.raises(InvalidParams, match=match):
        ExperimentConfig(**kwargs)


class TestConfigSerialization:
    def test_empty_dict_gives_defaults(self):
        assert config_from_dict({}) == ExperimentConfig()

    def test_round_trip_default(self):
        cfg = ExperimentConfig()
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_round_trip_customized(self):
        cfg = config_from_dict(
            {
                "repeats": 2,
                "seed": 7,
                "noise_rms": 0.02,
                "frontend": True,
                "subjects": [{"sbp_mmhg": 118.0, "dbp_mmhg": 79.0, "heart_rate_bpm": 72.0}],
                "artifacts": [{"kind": "motion_spike", "rate_per_min": 6.0, "magnitude": 1.0}],
                "ccf": {"window_s": 1.5},
                "tacho": {"ratio_sys": 0.6},
                "protocol": {"inflate_to_mmhg": 170.0},
            }
        )
        assert config_from_dict(config_to_dict(cfg)) == cfg
        assert cfg.ccf.window_s == 1.5
        assert cfg.tacho.ratio_sys == 0.6
        assert cfg.protocol.inflate_to_mmhg == 170.0
        assert cfg.artifacts[0].affects == "main_only"

    def test_grid_form(self):
        cfg = config_from_dict(
            {
                "grid": {
                    "count": 3,
                    "sbp_range": [110.0, 150.0],
                    "dbp_range": [70.0, 90.0],
                    "hr_range": [55.0, 85.0],
                }
            }
        )
        assert [s.sbp_mmhg for s in cfg.subjects] == [110.0, 130.0, 150.0]
        assert [s.heart_rate_bpm for s in cfg.subjects] == [55.0, 70.0, 85.0]

    def test_nested_band_override(self):
        cfg = config_from_dict(
            {
                "tacho": {
                    "band": {
                        "pass_lo_hz": 0.4,
                        "pass_hi_hz": 2.5,
                        "stop_lo_hz": 0.08,
                        "stop_hi_hz": 6.0,
                        "passband_ripple_db": 1.0,
                        "stopband_atten_db": 70.0,
                    }
                }
            }
        )
        assert cfg.tacho.band.pass_lo_hz == 0.4
        assert config_from_dict(config_to_dict(cfg)) == cfg

    @pytest.mark.parametrize(
        "data, match",
        [
            ({"subjects": [], "grid": {}}, "not both"),
            ({"nope": 1}, "unknown configuration keys"),
            ({"repeats": "many"}, "integer"),
            ({"grid": {"n": 3}}, "unknown keys"),
            ({"grid": 5}, "expected an object"),
            ({"subjects": [{"sbp_mmhg": 80.0, "dbp_mmhg": 120.0, "heart_rate_bpm": 60.0}]}, "dbp"),
            ({"ccf": {"window_s": "wide"}}, "ccf"),
        ],
    )
    def test_rejects_malformed(self, data, match):
        with pytest.raises(ConfigInvalid, match=match):
            config_from_dict(data)

    def test_from_json_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"repeats": 3, "seed": 5}))
        cfg = config_from_json(p)
        assert cfg.repeats == 3 and cfg.seed == 5

    def test_from_json_rejects_garbage(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{not json")
        with pytest.raises(ConfigInvalid, match="JSON"):
            config_from_json(p)


class TestRunExperiment:
    def test_counts_and_ordering(self, tiny_result):
        assert len(tiny_result.trials) == 4  # 2 subjects x 2 repeats
        keys = [(t.subject, t.repeat) for t in tiny_result.trials]
        assert keys == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert tiny_result.runtime_s > 0.0
        assert len(tiny_result.per_subject) == 2

    def test_trial_seeds_recorded_and_distinct(self, tiny_result):
        seeds = [t.seed for t in tiny_result.trials]
        assert len(set(seeds)) == len(seeds)
        assert seeds[0] == trial_seed(tiny_result.config.seed, 0, 0)

    def test_clean_grid_has_no_failures(self, tiny_result):
        agg = tiny_result.aggregate
        assert agg.n_trials == 4
        assert agg.n_osc_ok == 4 and agg.n_tacho_ok == 4
        assert not tiny_result.all_failed
        assert agg.osc_sbp_mean_abs_dev < 3.0
        assert agg.tacho_sbp_mean_abs_dev < 4.0

    def test_truth_columns_match_subjects(self, tiny_result):
        for t in tiny_result.trials:
            subj = tiny_result.config.subjects[t.subject]
            assert t.truth_sbp_mmhg == subj.sbp_mmhg
            assert t.truth_dbp_mmhg == subj.dbp_mmhg
            assert t.heart_rate_bpm == subj.heart_rate_bpm

    def test_deterministic_given_seed(self, tiny_result):
        again = run_experiment(tiny_result.config)
        a = [(t.osc_sbp_mmhg, t.tacho_sbp_mmhg) for t in tiny_result.trials]
        b = [(t.osc_sbp_mmhg, t.tacho_sbp_mmhg) for t in again.trials]
        assert a == b

    def test_auto_inflation_covers_high_pressure_subjects(self):
        cfg = ExperimentConfig(
            subjects=(SubjectParams(185.0, 110.0, 70.0),), repeats=1, noise_rms=0.0, seed=4
        )
        res = run_experiment(cfg)
        t = res.trials[0]
        assert t.osc_error == "" and t.tacho_error == ""
        assert abs(t.osc_sbp_mmhg - 185.0) < 4.0
