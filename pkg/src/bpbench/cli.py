"""Command-line interface.

Four subcommands: ``simulate`` writes one synthetic record to disk,
``analyze`` runs both estimators on a stored record, ``experiment``
sweeps the subject grid and writes the comparison report, and
``filter-report`` documents the filter designs in use.

Exit codes: 0 success, 1 bad configuration or parameters, 2 I/O or file
format problem, 3 experiment finished but every single trial failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .errors import BpbenchError, ConfigInvalid, FormatError
from .experiment import (
    ExperimentConfig,
    config_from_json,
    run_experiment,
)
from .frontend import OSC_BAND, PPG_BAND, design_bandpass, export_response_csv
from .oscillometric import track_to_csv
from .pipeline import analyze_record, outcome_as_dict
from .report import emit_report
from .simulator import (
    ArtifactSpec,
    ProtocolParams,
    SubjectParams,
    export_record,
    frontend_pass,
    load_record,
    simulate_measurement,
)
from .tacho import envelope_to_csv


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; we reserve 2 for I/O
    def error(self, message):
        raise ConfigInvalid(message)


def _parse_artifact(text: str) -> ArtifactSpec:
    """Parse ``kind[:rate_per_min[:magnitude[:affects]]]``."""
    parts = text.split(":")
    try:
        kwargs = {"kind": parts[0]}
        if len(parts) > 1 and parts[1]:
            kwargs["rate_per_min"] = float(parts[1])
        if len(parts) > 2 and parts[2]:
            kwargs["magnitude"] = float(parts[2])
        if len(parts) > 3 and parts[3]:
            kwargs["affects"] = parts[3]
        if len(parts) > 4:
            raise ValueError("too many fields")
        return ArtifactSpec(**kwargs)
    except (ValueError, BpbenchError) as exc:
        raise ConfigInvalid(f"bad artifact {text!r}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bpbench", description=__doc__.split("\n")[1])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write one synthetic measurement record",
                         description="Simulate a cuff measurement and export it as CSVs plus manifest.")
    sim.add_argument("--sbp", type=float, default=120.0, help="systolic pressure, mmHg")
    sim.add_argument("--dbp", type=float, default=80.0, help="diastolic pressure, mmHg")
    sim.add_argument("--hr", type=float, default=75.0, help="heart rate, bpm")
    sim.add_argument("--amp", type=float, default=1.0, help="pulse amplitude, mV")
    sim.add_argument("--noise", type=float, default=0.05, help="noise RMS as a fraction of the pulse amplitude")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--inflate", type=float, default=None,
                     help="inflation target, mmHg (default: max(160, sbp + 30))")
    sim.add_argument("--deflation-rate", type=float, default=2.0, help="mmHg per second")
    sim.add_argument("--artifact", action="append", default=[], metavar="KIND[:RATE[:MAG[:AFFECTS]]]",
                     help="add an artifact process (repeatable)")
    sim.add_argument("--frontend-pass", action="store_true",
                     help="route the PPG channels through the carrier chain")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    ana = sub.add_parser("analyze", help="run both estimators on a stored record",
                         description="Analyze a record directory written by simulate.")
    ana.add_argument("record", help="record directory (with manifest.json)")
    ana.add_argument("--out", default=None, help="also write track/envelope CSVs and analysis.json here")
    ana.add_argument("--plot", action="store_true", help="with --out, render diagnostic panels to analysis.svg")
    ana.set_defaults(func=_cmd_analyze)

    exp = sub.add_parser("experiment", help="run the full method comparison",
                         description="Sweep the subject grid, analyze every record, write the report.")
    exp.add_argument("--config", default=None, help="experiment configuration JSON")
    exp.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    exp.add_argument("--repeats", type=int, default=None, help="override repeats per subject")
    exp.add_argument("--noise", type=float, default=None, help="override the noise level")
    exp.add_argument("--artifact", action="append", default=[], metavar="KIND[:RATE[:MAG[:AFFECTS]]]",
                     help="add an artifact process (repeatable, overrides config artifacts)")
    exp.add_argument("--frontend-pass", action="store_true",
                     help="route the PPG channels through the carrier chain")
    exp.add_argument("--no-figures", action="store_true", help="skip SVG rendering")
    exp.add_argument("--out", required=True, help="output directory")
    exp.set_defaults(func=_cmd_experiment)

    fr = sub.add_parser("filter-report", help="document the filter designs",
                        description="Write frequency response tables and design facts for the standard bands.")
    fr.add_argument("--rate", type=float, default=100.0, help="sample rate to design at, Hz")
    fr.add_argument("--out", required=True, help="output directory")
    fr.set_defaults(func=_cmd_filter_report)
    return parser


def _cmd_simulate(args) -> int:
    subject = SubjectParams(
        sbp_mmhg=args.sbp, dbp_mmhg=args.dbp, heart_rate_bpm=args.hr, ppg_amp_mv=args.amp
    )
    inflate = args.inflate if args.inflate is not None else max(160.0, args.sbp + 30.0)
    protocol = ProtocolParams(inflate_to_mmhg=inflate, deflation_rate_mmhg_s=args.deflation_rate)
    artifacts = tuple(_parse_artifact(a) for a in args.artifact)
    record = simulate_measurement(
        subject, protocol=protocol, noise_rms=args.noise, artifacts=artifacts, seed=args.seed
    )
    if args.frontend_pass:
        record = frontend_pass(record)
    out = export_record(record, args.out)
    print(f"record written to {out}")
    print(
        f"deflation {record.cuff.deflation_start_s:.2f}..{record.cuff.deflation_end_s:.2f} s, "
        f"markers: sbp at {record.markers.t_sbp_s:.2f} s, dbp at {record.markers.t_dbp_s:.2f} s"
    )
    return 0


def _cmd_analyze(args) -> int:
    record = load_record(args.record)
    outcome = analyze_record(record)
    payload = outcome_as_dict(outcome, record)
    print(json.dumps(payload, sort_keys=True, indent=2))

    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analysis.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        if outcome.track is not None:
            track_to_csv(outcome.track, out / "ccf_track.csv")
        if outcome.envelope is not None:
            envelope_to_csv(outcome.envelope, out / "envelope.csv")
        if args.plot:
            _render_analysis_figure(record, outcome, out / "analysis.svg")
    elif args.plot:
        raise ConfigInvalid("--plot needs --out to know where to write the figure")
    return 0


def _render_analysis_figure(record, outcome, path) -> None:
    # imported lazily so plain analyses never touch the plotting stack
    from .report import _save_fig, plt

    fig, axes = plt.subplots(3, 1, figsize=(8.0, 8.5), sharex=True)
    cuff = record.cuff
    axes[0].plot(cuff.pressure.times(), cuff.pressure.samples, lw=0.7, color="0.3")
    axes[0].axvline(record.markers.t_sbp_s, color="tab:green", lw=0.8, label="true sbp/dbp")
    axes[0].axvline(record.markers.t_dbp_s, color="tab:green", lw=0.8)
    axes[0].set_ylabel("cuff (mmHg)")
    axes[0].legend(loc="upper right", frameon=False)

    if outcome.track is not None:
        axes[1].plot(outcome.track.times_s, outcome.track.peak_corr, ".-", ms=3, lw=0.7)
        for level in (0.10, 0.90):
            axes[1].axhline(level, color="0.6", lw=0.6, ls="--")
    if outcome.osc_result is not None:
        axes[1].axvline(outcome.osc_result.t_sys_s, color="tab:blue", lw=0.8)
        axes[1].axvline(outcome.osc_result.t_dias_s, color="tab:blue", lw=0.8)
    axes[1].set_ylabel("peak correlation")

    if outcome.envelope is not None:
        axes[2].plot(outcome.envelope.times_s, outcome.envelope.amp_mmhg, ".-", ms=3, lw=0.7)
    if outcome.tacho_result is not None:
        axes[2].axvline(outcome.tacho_result.t_sys_s, color="tab:red", lw=0.8)
        axes[2].axvline(outcome.tacho_result.t_dias_s, color="tab:red", lw=0.8)
    axes[2].set_ylabel("oscillation (mmHg)")
    axes[2].set_xlabel("time (s)")
    fig.tight_layout()
    _save_fig(fig, path)


def _cmd_experiment(args) -> int:
    config = config_from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.repeats is not None:
        overrides["repeats"] = args.repeats
    if args.noise is not None:
        overrides["noise_rms"] = args.noise
    if args.artifact:
        overrides["artifacts"] = tuple(_parse_artifact(a) for a in args.artifact)
    if args.frontend_pass:
        overrides["frontend"] = True
    if overrides:
        try:
            config = dataclasses.replace(config, **overrides)
        except BpbenchError as exc:
            raise ConfigInvalid(str(exc)) from exc

    result = run_experiment(config)
    emit_report(result, args.out, figures=not args.no_figures)

    agg = result.aggregate
    print(f"{agg.n_trials} trials in {result.runtime_s:.1f} s -> {args.out}")
    print(
        f"oscillometric: {agg.n_osc_ok}/{agg.n_trials} ok, "
        f"mean |dev| sbp {agg.osc_sbp_mean_abs_dev:.2f} dbp {agg.osc_dbp_mean_abs_dev:.2f} mmHg"
    )
    print(
        f"tacho:         {agg.n_tacho_ok}/{agg.n_trials} ok, "
        f"mean |dev| sbp {agg.tacho_sbp_mean_abs_dev:.2f} dbp {agg.tacho_dbp_mean_abs_dev:.2f} mmHg"
    )
    if result.all_failed:
        print("every trial failed", file=sys.stderr)
        return 3
    return 0


def _cmd_filter_report(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, band in (("osc_band", OSC_BAND), ("ppg_band", PPG_BAND)):
        realization = design_bandpass(band, args.rate)
        export_response_csv(realization, out / f"{name}_response.csv")
        print(
            f"{name}: order {realization.order}, settles in {realization.settling_time_s:.1f} s, "
            f"usable after {realization.usable_after_s:.1f} s, "
            f"group delay {realization.group_delay_s * 1e3:.0f} ms"
        )
    print(f"responses written to {out}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BpbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
