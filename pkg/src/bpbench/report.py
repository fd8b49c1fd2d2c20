"""Experiment outputs: delimited tables, a JSON summary and figures.

Every file written here is a pure function of the experiment result, so
two runs from the same configuration and seed produce byte-identical
output directories. That rules out timestamps, wall-clock runtimes,
unordered dict dumps and hash-salted SVG ids; the figure path pins the
SVG hash salt and strips the date metadata for the same reason.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import FormatError
from .experiment import AggregateStats, ExperimentResult, TrialRecord, config_to_dict

_SVG_SALT = "bpbench"

TRIALS_HEADER = (
    "subject,repeat,seed,truth_sbp_mmhg,truth_dbp_mmhg,heart_rate_bpm,"
    "osc_sbp_mmhg,osc_dbp_mmhg,osc_error,tacho_sbp_mmhg,tacho_dbp_mmhg,tacho_error"
)
TABLE1_HEADER = (
    "subject,truth_sbp_mmhg,truth_dbp_mmhg,heart_rate_bpm,"
    "n_osc_ok,osc_sbp_mean_abs_dev,osc_dbp_mean_abs_dev,"
    "n_tacho_ok,tacho_sbp_mean_abs_dev,tacho_dbp_mean_abs_dev"
)
FIG3_HEADER = "method,truth_sbp_mmhg,est_sbp_mmhg,truth_dbp_mmhg,est_dbp_mmhg"
FIG4_HEADER = "method,subject,truth_sbp_mmhg,sbp_dev_mmhg,dbp_dev_mmhg"


def _num(value: float) -> str:
    return "" if math.isnan(value) else f"{value:.6f}"


def write_trials_csv(trials, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        fh.write(TRIALS_HEADER + "\n")
        for tr in trials:
            fh.write(
                f"{tr.subject},{tr.repeat},{tr.seed},"
                f"{tr.truth_sbp_mmhg:.6f},{tr.truth_dbp_mmhg:.6f},{tr.heart_rate_bpm:.6f},"
                f"{_num(tr.osc_sbp_mmhg)},{_num(tr.osc_dbp_mmhg)},{tr.osc_error},"
                f"{_num(tr.tacho_sbp_mmhg)},{_num(tr.tacho_dbp_mmhg)},{tr.tacho_error}\n"
            )


def load_trials_csv(path) -> list[TrialRecord]:
    """Read back a trials table; used for integrity checks and plotting."""
    p = Path(path)
    try:
        lines = p.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FormatError(f"{p}: {exc}") from exc
    if not lines or lines[0] != TRIALS_HEADER:
        raise FormatError(f"{p}: unexpected header")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 12:
            raise FormatError(f"{p}:{lineno}: expected 12 fields, got {len(parts)}")
        try:
            out.append(
                TrialRecord(
                    subject=int(parts[0]),
                    repeat=int(parts[1]),
                    seed=int(parts[2]),
                    truth_sbp_mmhg=float(parts[3]),
                    truth_dbp_mmhg=float(parts[4]),
                    heart_rate_bpm=float(parts[5]),
                    osc_sbp_mmhg=float(parts[6]) if parts[6] else math.nan,
                    osc_dbp_mmhg=float(parts[7]) if parts[7] else math.nan,
                    osc_error=parts[8],
                    tacho_sbp_mmhg=float(parts[9]) if parts[9] else math.nan,
                    tacho_dbp_mmhg=float(parts[10]) if parts[10] else math.nan,
                    tacho_error=parts[11],
                )
            )
        except ValueError as exc:
            raise FormatError(f"{p}:{lineno}: {exc}") from exc
    return out


def write_table1_csv(per_subject, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        fh.write(TABLE1_HEADER + "\n")
        for s in per_subject:
            fh.write(
                f"{s.subject},{s.truth_sbp_mmhg:.6f},{s.truth_dbp_mmhg:.6f},{s.heart_rate_bpm:.6f},"
                f"{s.n_osc_ok},{_num(s.osc_sbp_mean_abs_dev)},{_num(s.osc_dbp_mean_abs_dev)},"
                f"{s.n_tacho_ok},{_num(s.tacho_sbp_mean_abs_dev)},{_num(s.tacho_dbp_mean_abs_dev)}\n"
            )


def _method_rows(trials):
    for tr in trials:
        if not math.isnan(tr.osc_sbp_mmhg):
            yield "oscillometric", tr, tr.osc_sbp_mmhg, tr.osc_dbp_mmhg
        if not math.isnan(tr.tacho_sbp_mmhg):
            yield "tacho", tr, tr.tacho_sbp_mmhg, tr.tacho_dbp_mmhg


def write_fig3_csv(trials, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        fh.write(FIG3_HEADER + "\n")
        for method, tr, sbp, dbp in _method_rows(trials):
            fh.write(
                f"{method},{tr.truth_sbp_mmhg:.6f},{sbp:.6f},{tr.truth_dbp_mmhg:.6f},{dbp:.6f}\n"
            )


def write_fig4_csv(trials, path) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        fh.write(FIG4_HEADER + "\n")
        for method, tr, sbp, dbp in _method_rows(trials):
            fh.write(
                f"{method},{tr.subject},{tr.truth_sbp_mmhg:.6f},"
                f"{sbp - tr.truth_sbp_mmhg:.6f},{dbp - tr.truth_dbp_mmhg:.6f}\n"
            )


def summary_dict(result: ExperimentResult) -> dict:
    """Aggregate view used for summary.json; deliberately time-free."""
    agg = result.aggregate
    return {
        "config": config_to_dict(result.config),
        "aggregate": {
            "n_trials": agg.n_trials,
            "n_osc_ok": agg.n_osc_ok,
            "n_tacho_ok": agg.n_tacho_ok,
            "osc_sbp_mean_abs_dev": agg.osc_sbp_mean_abs_dev,
            "osc_dbp_mean_abs_dev": agg.osc_dbp_mean_abs_dev,
            "tacho_sbp_mean_abs_dev": agg.tacho_sbp_mean_abs_dev,
            "tacho_dbp_mean_abs_dev": agg.tacho_dbp_mean_abs_dev,
            "osc_sbp_bias": agg.osc_sbp_bias,
            "osc_dbp_bias": agg.osc_dbp_bias,
            "tacho_sbp_bias": agg.tacho_sbp_bias,
            "tacho_dbp_bias": agg.tacho_dbp_bias,
            "worst_subject_osc_sbp": agg.worst_subject_osc_sbp,
            "worst_subject_osc_dbp": agg.worst_subject_osc_dbp,
            "worst_subject_tacho_sbp": agg.worst_subject_tacho_sbp,
            "worst_subject_tacho_dbp": agg.worst_subject_tacho_dbp,
        },
        "per_subject": [
            {
                "subject": s.subject,
                "truth_sbp_mmhg": s.truth_sbp_mmhg,
                "truth_dbp_mmhg": s.truth_dbp_mmhg,
                "heart_rate_bpm": s.heart_rate_bpm,
                "n_osc_ok": s.n_osc_ok,
                "osc_sbp_mean_abs_dev": _json_num(s.osc_sbp_mean_abs_dev),
                "osc_dbp_mean_abs_dev": _json_num(s.osc_dbp_mean_abs_dev),
                "n_tacho_ok": s.n_tacho_ok,
                "tacho_sbp_mean_abs_dev": _json_num(s.tacho_sbp_mean_abs_dev),
                "tacho_dbp_mean_abs_dev": _json_num(s.tacho_dbp_mean_abs_dev),
            }
            for s in result.per_subject
        ],
    }


def _json_num(value: float):
    return None if math.isnan(value) else value


def _save_fig(fig, path) -> None:
    with plt.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_scatter_figure(trials, path) -> None:
    """Estimated against true pressure, one panel per pressure kind."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.2))
    styles = {"oscillometric": ("tab:blue", "o"), "tacho": ("tab:red", "^")}
    for panel, (ax, which) in enumerate(zip(axes, ("sbp", "dbp"))):
        for method, (color, marker) in styles.items():
            xs, ys = [], []
            for m, tr, sbp, dbp in _method_rows(trials):
                if m != method:
                    continue
                xs.append(tr.truth_sbp_mmhg if which == "sbp" else tr.truth_dbp_mmhg)
                ys.append(sbp if which == "sbp" else dbp)
            ax.scatter(xs, ys, s=14, alpha=0.7, color=color, marker=marker, label=method)
        lims = ax.get_xlim()
        lo = min(lims[0], ax.get_ylim()[0])
        hi = max(lims[1], ax.get_ylim()[1])
        ax.plot([lo, hi], [lo, hi], color="0.4", lw=0.8, zorder=0)
        ax.set_xlabel(f"true {which.upper()} (mmHg)")
        ax.set_ylabel(f"estimated {which.upper()} (mmHg)")
        if panel == 0:
            ax.legend(loc="upper left", frameon=False)
    fig.tight_layout()
    _save_fig(fig, path)


def render_deviation_figure(trials, path) -> None:
    """Signed deviation against true systolic pressure, per method."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.2), sharex=True)
    styles = {"oscillometric": ("tab:blue", "o"), "tacho": ("tab:red", "^")}
    for ax, which in zip(axes, ("sbp", "dbp")):
        for method, (color, marker) in styles.items():
            xs, ys = [], []
            for m, tr, sbp, dbp in _method_rows(trials):
                if m != method:
                    continue
                xs.append(tr.truth_sbp_mmhg)
                ys.append((sbp - tr.truth_sbp_mmhg) if which == "sbp" else (dbp - tr.truth_dbp_mmhg))
            ax.scatter(xs, ys, s=14, alpha=0.7, color=color, marker=marker, label=method)
        ax.axhline(0.0, color="0.4", lw=0.8, zorder=0)
        ax.set_xlabel("true SBP (mmHg)")
        ax.set_ylabel(f"{which.upper()} deviation (mmHg)")
    axes[0].legend(loc="best", frameon=False)
    fig.tight_layout()
    _save_fig(fig, path)


def emit_report(result: ExperimentResult, out_dir, figures: bool = True) -> list[Path]:
    """Write the full output set for one experiment run.

    Produces trials.csv, table1.csv, fig3_scatter.csv, fig4_deviation.csv,
    summary.json and config.json, plus fig3_scatter.svg and
    fig4_deviation.svg unless figures are disabled. Returns the paths
    written, in a fixed order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "trials.csv"
    write_trials_csv(result.trials, path)
    written.append(path)

    path = out / "table1.csv"
    write_table1_csv(result.per_subject, path)
    written.append(path)

    path = out / "fig3_scatter.csv"
    write_fig3_csv(result.trials, path)
    written.append(path)

    path = out / "fig4_deviation.csv"
    write_fig4_csv(result.trials, path)
    written.append(path)

    path = out / "summary.json"
    path.write_text(json.dumps(summary_dict(result), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    written.append(path)

    path = out / "config.json"
    path.write_text(
        json.dumps(config_to_dict(result.config), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    written.append(path)

    if figures:
        path = out / "fig3_scatter.svg"
        render_scatter_figure(result.trials, path)
        written.append(path)
        path = out / "fig4_deviation.svg"
        render_deviation_figure(result.trials, path)
        written.append(path)
    return written


def recomputed_aggregate_matches(trials, aggregate: AggregateStats, tol: float = 1e-9) -> bool:
    """Check that pooled statistics really follow from the trial rows."""
    def devs(get_est, get_truth):
        return [
            get_est(tr) - get_truth(tr) for tr in trials if not math.isnan(get_est(tr))
        ]

    os_dev = devs(lambda t: t.osc_sbp_mmhg, lambda t: t.truth_sbp_mmhg)
    ts_dev = devs(lambda t: t.tacho_sbp_mmhg, lambda t: t.truth_sbp_mmhg)
    checks = [
        (len(os_dev), aggregate.n_osc_ok),
        (len(ts_dev), aggregate.n_tacho_ok),
        (float(sum(abs(d) for d in os_dev) / len(os_dev)) if os_dev else math.nan,
         aggregate.osc_sbp_mean_abs_dev),
        (float(sum(ts_dev) / len(ts_dev)) if ts_dev else math.nan, aggregate.tacho_sbp_bias),
    ]
    for got, want in checks:
        if isinstance(got, int):
            if got != want:
                return False
        elif math.isnan(got) != math.isnan(want) or (not math.isnan(got) and abs(got - want) > tol):
            return False
    return True
