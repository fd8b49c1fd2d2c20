"""Report serialization and the command-line entry point.

CLI tests call main() in-process and only check exit codes, emitted
files, and machine-readable stdout, never human wording.
"""

from __future__ import annotations

import contextlib
import dataclasses
import io
import json
import math

import pytest

from bpbench.cli import main
from bpbench.errors import FormatError
from bpbench.experiment import TrialRecord
from bpbench.report import (
    emit_report,
    load_trials_csv,
    recomputed_aggregate_matches,
    summary_dict,
    write_fig3_csv,
    write_fig4_csv,
    write_table1_csv,
    write_trials_csv,
)
from bpbench.simulator import load_record

TRIALS_HEADER = (
    "subject,repeat,seed,truth_sbp_mmhg,truth_dbp_mmhg,heart_rate_bpm,"
    "osc_sbp_mmhg,osc_dbp_mmhg,osc_error,tacho_sbp_mmhg,tacho_dbp_mmhg,tacho_error"
)


def failed_trial() -> TrialRecord:
    return TrialRecord(
        subject=1,
        repeat=0,
        seed=42,
        truth_sbp_mmhg=123.25,
        truth_dbp_mmhg=80.5,
        heart_rate_bpm=66.0,
        osc_sbp_mmhg=float("nan"),
        osc_dbp_mmhg=float("nan"),
        osc_error="InsufficientData",
        tacho_sbp_mmhg=130.125,
        tacho_dbp_mmhg=85.0,
        tacho_error="",
    )


class TestTrialsCsv:
    def test_round_trip_with_failure_row(self, tmp_path, tiny_result):
        rows = list(tiny_result.trials) + [failed_trial()]
        p = tmp_path / "t.csv"
        write_trials_csv(rows, p)
        text = p.read_text()
        assert text.splitlines()[0] == TRIALS_HEADER
        # missing estimates serialize as empty fields, not "nan"
        assert ",,,InsufficientData," in text.splitlines()[-1]
        back = load_trials_csv(p)
        assert len(back) == len(rows)
        assert back[-1].truth_sbp_mmhg == 123.25
        assert math.isnan(back[-1].osc_sbp_mmhg)
        assert back[-1].osc_error == "InsufficientData"
        assert back[-1].tacho_sbp_mmhg == 130.125
        for a, b in zip(back[:-1], rows[:-1]):
            assert a.seed == b.seed
            assert a.osc_sbp_mmhg == pytest.approx(b.osc_sbp_mmhg, abs=1e-6)

    def test_rejects_wrong_header(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("foo,bar\n1,2\n")
        with pytest.raises(FormatError, match="header"):
            load_trials_csv(p)

    def test_rejects_short_row_naming_the_line(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(TRIALS_HEADER + "\n1,2,3\n")
        with pytest.raises(FormatError, match=":2:"):
            load_trials_csv(p)

    def test_rejects_non_numeric_field(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(TRIALS_HEADER + "\n0,0,1,xxx,79,72,117,78,,118,78,\n")
        with pytest.raises(FormatError, match="xxx"):
            load_trials_csv(p)


class TestDerivedCsvs:
    def test_table1_one_row_per_subject(self, tmp_path, tiny_result):
        p = tmp_path / "table1.csv"
        write_table1_csv(tiny_result.per_subject, p)
        lines = p.read_text().splitlines()
        assert lines[0].startswith("subject,truth_sbp_mmhg")
        assert len(lines) == 1 + len(tiny_result.per_subject)

    def test_scatter_skips_failed_estimates(self, tmp_path):
        p = tmp_path / "f3.csv"
        write_fig3_csv([failed_trial()], p)
        lines = p.read_text().splitlines()
        assert lines[0] == "method,truth_sbp_mmhg,est_sbp_mmhg,truth_dbp_mmhg,est_dbp_mmhg"
        assert len(lines) == 2 and lines[1].startswith("tacho,")

    def test_deviation_skips_failed_estimates(self, tmp_path):
        p = tmp_path / "f4.csv"
        write_fig4_csv([failed_trial()], p)
        lines = p.read_text().splitlines()
        assert lines[0] == "method,subject,truth_sbp_mmhg,sbp_dev_mmhg,dbp_dev_mmhg"
        assert len(lines) == 2
        assert lines[1] == "tacho,1,123.250000,6.875000,4.500000"


def test_summary_dict_structure(tiny_result):
    s = summary_dict(tiny_result)
    assert set(s) == {"config", "per_subject", "aggregate"}
    assert s["aggregate"]["n_trials"] == 4
    assert len(s["per_subject"]) == 2
    json.dumps(s)


class TestAggregateCheck:
    def test_consistent_result_passes(self, tiny_result):
        assert recomputed_aggregate_matches(tiny_result.trials, tiny_result.aggregate)

    def test_tampered_aggregate_detected(self, tiny_result):
        forged = dataclasses.replace(tiny_result.aggregate, osc_sbp_mean_abs_dev=0.0)
        assert not recomputed_aggregate_matches(tiny_result.trials, forged)


class TestEmitReport:
    def test_paths_with_figures(self, tmp_path, tiny_result):
        paths = emit_report(tiny_result, tmp_path / "rep")
        names = [p.name for p in paths]
        assert names == [
            "trials.csv",
            "table1.csv",
            "fig3_scatter.csv",
            "fig4_deviation.csv",
            "summary.json",
            "config.json",
            "fig3_scatter.svg",
            "fig4_deviation.svg",
        ]
        for p in paths:
            assert p.exists() and p.stat().st_size > 0
        svg = (tmp_path / "rep" / "fig3_scatter.svg").read_text()
        assert svg.startswith("<?xml")

    def test_paths_without_figures(self, tmp_path, tiny_result):
        paths = emit_report(tiny_result, tmp_path / "rep", figures=False)
        assert len(paths) == 6
        assert not any(p.suffix == ".svg" for p in paths)

    def test_emission_is_reproducible(self, tmp_path, tiny_result):
        a = emit_report(tiny_result, tmp_path / "a")
        b = emit_report(tiny_result, tmp_path / "b")
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes(), pa.name


def run_cli(*args: str):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(args))
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def record_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "rec"
    code, _, err = run_cli(
        "simulate",
        "--sbp", "124", "--dbp", "76", "--hr", "66",
        "--noise", "0.0", "--seed", "3",
        "--out", str(d),
    )
    assert code == 0, err
    return d


class TestCliSimulate:
    def test_writes_loadable_record(self, record_dir):
        rec = load_record(record_dir)
        assert rec.truth.sbp_mmhg == 124.0
        assert rec.truth.dbp_mmhg == 76.0
        assert rec.seed == 3

    def test_rejects_unknown_artifact(self, tmp_path):
        code, _, err = run_cli(
            "simulate",
            "--sbp", "124", "--dbp", "76", "--hr", "66",
            "--artifact", "earthquake:1:1",
            "--out", str(tmp_path / "x"),
        )
        assert code == 1
        assert "artifact" in err

    def test_accepts_artifact_spec(self, tmp_path):
        d = tmp_path / "spiky"
        code, _, _ = run_cli(
            "simulate",
            "--sbp", "124", "--dbp", "76", "--hr", "66",
            "--artifact", "motion_spike:6:1.0",
            "--out", str(d),
        )
        assert code == 0
        rec = load_record(d)
        assert rec.artifacts[0].kind == "motion_spike"


class TestCliAnalyze:
    def test_stdout_json(self, record_dir):
        code, out, _ = run_cli("analyze", str(record_dir))
        assert code == 0
        doc = json.loads(out)
        assert set(doc) == {"oscillometric", "tacho", "truth"}
        assert doc["oscillometric"]["ok"] and doc["tacho"]["ok"]
        assert abs(doc["oscillometric"]["sbp_dev_mmhg"]) < 3.0

    def test_out_dir_and_plot(self, record_dir, tmp_path):
        d = tmp_path / "ana"
        code, _, _ = run_cli("analyze", str(record_dir), "--out", str(d), "--plot")
        assert code == 0
        names = sorted(p.name for p in d.iterdir())
        assert names == ["analysis.json", "analysis.svg", "ccf_track.csv", "envelope.csv"]
        assert (d / "analysis.svg").read_text().startswith("<?xml")

    def test_plot_requires_out(self, record_dir):
        code, _, err = run_cli("analyze", str(record_dir), "--plot")
        assert code == 1
        assert "--out" in err

    def test_missing_record_is_io_error(self, tmp_path):
        code, _, _ = run_cli("analyze", str(tmp_path / "nothere"))
        assert code == 2


class TestCliExperiment:
    def test_small_run(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "subjects": [
                        {"sbp_mmhg": 118.0, "dbp_mmhg": 79.0, "heart_rate_bpm": 72.0},
                        {"sbp_mmhg": 135.0, "dbp_mmhg": 85.0, "heart_rate_bpm": 60.0},
                    ],
                    "repeats": 2,
                    "noise_rms": 0.0,
                    "seed": 5,
                }
            )
        )
        d = tmp_path / "exp"
        code, out, _ = run_cli("experiment", "--config", str(cfg), "--out", str(d))
        assert code == 0
        assert len((d / "trials.csv").read_text().splitlines()) == 1 + 4
        assert (d / "summary.json").exists()
        assert (d / "fig3_scatter.svg").exists()
        assert "4 trials" in out

    def test_no_figures_flag(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"repeats": 1, "noise_rms": 0.0, "seed": 5,
                                   "subjects": [{"sbp_mmhg": 118.0, "dbp_mmhg": 79.0,
                                                 "heart_rate_bpm": 72.0}]}))
        d = tmp_path / "exp"
        code, _, _ = run_cli("experiment", "--config", str(cfg), "--out", str(d), "--no-figures")
        assert code == 0
        assert not list(d.glob("*.svg"))

    def test_bad_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nope": 1}))
        code, _, err = run_cli("experiment", "--config", str(cfg), "--out", str(tmp_path / "e"))
        assert code == 1
        assert "nope" in err

    def test_missing_config_file(self, tmp_path):
        code, _, _ = run_cli(
            "experiment", "--config", str(tmp_path / "no.json"), "--out", str(tmp_path / "e")
        )
        assert code == 2


class TestCliFilterReport:
    def test_writes_both_band_responses(self, tmp_path):
        d = tmp_path / "filt"
        code, _, _ = run_cli("filter-report", "--out", str(d))
        assert code == 0
        names = sorted(p.name for p in d.iterdir())
        assert names == ["osc_band_response.csv", "ppg_band_response.csv"]
        lines = (d / "osc_band_response.csv").read_text().splitlines()
        assert lines[0] == "freq_hz,gain_db,phase_deg"
        assert len(lines) > 100

    def test_unrealizable_rate(self, tmp_path):
        code, _, _ = run_cli("filter-report", "--rate", "8", "--out", str(tmp_path / "f"))
        assert code == 1


class TestCliTopLevel:
    def test_no_arguments(self):
        assert run_cli()[0] == 1

    def test_unknown_subcommand(self):
        assert run_cli("frobnicate")[0] == 1
