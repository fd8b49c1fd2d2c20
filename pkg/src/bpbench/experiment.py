"""Batch comparison of both estimators over a subject grid.

The default experiment sweeps six subjects spanning the adult pressure
range, repeats each measurement with fresh noise, analyzes every record
with both methods and accumulates per-subject and pooled deviation
statistics. Individual trial failures are recorded, not raised, so a
partially broken configuration still yields a (marked-up) report.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid, InvalidParams
from .frontend import BandpassSpec
from .oscillometric import CcfConfig
from .pipeline import AnalysisOutcome, analyze_record
from .simulator import (
    ArtifactSpec,
    ProtocolParams,
    SubjectParams,
    frontend_pass,
    simulate_measurement,
)
from .tacho import TachoConfig


def default_subject_grid(
    count: int = 6,
    sbp_range: tuple[float, float] = (100.0, 160.0),
    dbp_range: tuple[float, float] = (60.0, 100.0),
    hr_range: tuple[float, float] = (50.0, 90.0),
) -> tuple[SubjectParams, ...]:
    """Evenly spaced subjects sweeping pressure and heart rate together."""
    if count < 1:
        raise InvalidParams("grid needs at least one subject")
    sbps = np.linspace(sbp_range[0], sbp_range[1], count)
    dbps = np.linspace(dbp_range[0], dbp_range[1], count)
    hrs = np.linspace(hr_range[0], hr_range[1], count)
    return tuple(SubjectParams(float(s), float(d), float(h)) for s, d, h in zip(sbps, dbps, hrs))


@dataclass(frozen=True)
class ExperimentConfig:
    subjects: tuple[SubjectParams, ...] = default_subject_grid()
    repeats: int = 10
    noise_rms: float = 0.05
    artifacts: tuple[ArtifactSpec, ...] = ()
    seed: int = 20260101
    frontend: bool = False
    auto_inflate_margin_mmhg: float = 30.0
    protocol: ProtocolParams = ProtocolParams()
    ccf: CcfConfig = CcfConfig()
    tacho: TachoConfig = TachoConfig()

    def __post_init__(self) -> None:
        if not self.subjects:
            raise InvalidParams("experiment needs at least one subject")
        if self.repeats < 1:
            raise InvalidParams("repeats must be at least 1")
        if self.noise_rms < 0.0:
            raise InvalidParams("noise level cannot be negative")
        if self.auto_inflate_margin_mmhg <= 10.0:
            raise InvalidParams("inflation margin must exceed the 10 mmHg protocol minimum")


_CONFIG_KEYS = {
    "subjects",
    "grid",
    "repeats",
    "noise_rms",
    "artifacts",
    "seed",
    "frontend",
    "auto_inflate_margin_mmhg",
    "protocol",
    "ccf",
    "tacho",
}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{where}: expected an object")
    try:
        return cls(**data)
    except (TypeError, InvalidParams) as exc:
        raise ConfigInvalid(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from plain JSON data, rejecting anything unknown.

    Subjects may be given explicitly (``subjects``: list of subject
    objects) or as a ``grid`` object with ``count`` and the three range
    pairs; giving both is an error.
    """
    if not isinstance(data, dict):
        raise ConfigInvalid("configuration root must be an object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown configuration keys: {sorted(unknown)}")
    if "subjects" in data and "grid" in data:
        raise ConfigInvalid("give either subjects or grid, not both")

    kwargs = {}
    if "subjects" in data:
        if not isinstance(data["subjects"], list):
            raise ConfigInvalid("subjects must be a list")
        kwargs["subjects"] = tuple(
            _build(SubjectParams, s, f"subjects[{i}]") for i, s in enumerate(data["subjects"])
        )
    elif "grid" in data:
        grid = data["grid"]
        if not isinstance(grid, dict):
            raise ConfigInvalid("grid: expected an object")
        bad = set(grid) - {"count", "sbp_range", "dbp_range", "hr_range"}
        if bad:
            raise ConfigInvalid(f"grid: unknown keys {sorted(bad)}")
        try:
            kwargs["subjects"] = default_subject_grid(
                count=int(grid.get("count", 6)),
                sbp_range=tuple(grid.get("sbp_range", (100.0, 160.0))),
                dbp_range=tuple(grid.get("dbp_range", (60.0, 100.0))),
                hr_range=tuple(grid.get("hr_range", (50.0, 90.0))),
            )
        except (TypeError, ValueError, InvalidParams) as exc:
            raise ConfigInvalid(f"grid: {exc}") from exc
    if "artifacts" in data:
        if not isinstance(data["artifacts"], list):
            raise ConfigInvalid("artifacts must be a list")
        kwargs["artifacts"] = tuple(
            _build(ArtifactSpec, a, f"artifacts[{i}]") for i, a in enumerate(data["artifacts"])
        )
    for key, cls in (("protocol", ProtocolParams), ("ccf", CcfConfig), ("tacho", TachoConfig)):
        if key in data:
            payload = data[key]
            if key == "tacho" and isinstance(payload, dict) and isinstance(payload.get("band"), dict):
                payload = {**payload, "band": _build(BandpassSpec, payload["band"], "tacho.band")}
            kwargs[key] = _build(cls, payload, key)
    for key in ("repeats", "seed"):
        if key in data:
            try:
                kwargs[key] = int(data[key])
            except (TypeError, ValueError) as exc:
                raise ConfigInvalid(f"{key}: expected an integer") from exc
    for key in ("noise_rms", "auto_inflate_margin_mmhg"):
        if key in data:
            try:
                kwargs[key] = float(data[key])
            except (TypeError, ValueError) as exc:
                raise ConfigInvalid(f"{key}: expected a number") from exc
    if "frontend" in data:
        if not isinstance(data["frontend"], bool):
            raise ConfigInvalid("frontend: expected true or false")
        kwargs["frontend"] = data["frontend"]
    try:
        return ExperimentConfig(**kwargs)
    except InvalidParams as exc:
        raise ConfigInvalid(str(exc)) from exc


def config_from_json(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(data)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Plain JSON-ready form; round-trips through config_from_dict."""
    out = dataclasses.asdict(config)  # recurses into every nested dataclass
    out["subjects"] = list(out["subjects"])
    out["artifacts"] = list(out["artifacts"])
    return out


@dataclass(frozen=True)
class TrialRecord:
    """Flat per-measurement row, one line of trials.csv."""

    subject: int
    repeat: int
    seed: int
    truth_sbp_mmhg: float
    truth_dbp_mmhg: float
    heart_rate_bpm: float
    osc_sbp_mmhg: float  # nan when the method failed
    osc_dbp_mmhg: float
    osc_error: str
    tacho_sbp_mmhg: float
    tacho_dbp_mmhg: float
    tacho_error: str


@dataclass(frozen=True)
class SubjectSummary:
    """Per-subject deviation statistics over the successful repeats."""

    subject: int
    truth_sbp_mmhg: float
    truth_dbp_mmhg: float
    heart_rate_bpm: float
    n_osc_ok: int
    osc_sbp_mean_abs_dev: float
    osc_dbp_mean_abs_dev: float
    n_tacho_ok: int
    tacho_sbp_mean_abs_dev: float
    tacho_dbp_mean_abs_dev: float


@dataclass(frozen=True)
class AggregateStats:
    """Pooled statistics across every successful trial."""

    n_trials: int
    n_osc_ok: int
    n_tacho_ok: int
    osc_sbp_mean_abs_dev: float
    osc_dbp_mean_abs_dev: float
    tacho_sbp_mean_abs_dev: float
    tacho_dbp_mean_abs_dev: float
    osc_sbp_bias: float
    osc_dbp_bias: float
    tacho_sbp_bias: float
    tacho_dbp_bias: float
    worst_subject_osc_sbp: float
    worst_subject_osc_dbp: float
    worst_subject_tacho_sbp: float
    worst_subject_tacho_dbp: float


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    trials: tuple[TrialRecord, ...]
    per_subject: tuple[SubjectSummary, ...]
    aggregate: AggregateStats
    runtime_s: float

    @property
    def all_failed(self) -> bool:
        return self.aggregate.n_osc_ok == 0 and self.aggregate.n_tacho_ok == 0


def trial_seed(base_seed: int, subject_index: int, repeat: int) -> int:
    """Stable per-trial noise seed derived from the experiment seed."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(subject_index, repeat))
    return int(ss.generate_state(1, np.uint64)[0])


def _mean(values: list[float]) -> float:
    return float(np.mean(values)) if values else math.nan


def run_experiment(config: ExperimentConfig | None = None) -> ExperimentResult:
    """Simulate and analyze the whole grid; never raises per-trial errors.

    The inflation target is raised per subject to at least systolic
    pressure plus the configured margin, mirroring what an auto-inflate
    cuff does. Failed trials carry NaN estimates plus the failure class
    name; they are excluded from the deviation statistics but counted.
    """
    cfg = config or ExperimentConfig()
    t_start = time.perf_counter()
    trials: list[TrialRecord] = []
    summaries: list[SubjectSummary] = []

    for si, subject in enumerate(cfg.subjects):
        inflate = max(cfg.protocol.inflate_to_mmhg, subject.sbp_mmhg + cfg.auto_inflate_margin_mmhg)
        proto = dataclasses.replace(cfg.protocol, inflate_to_mmhg=inflate)
        devs: dict[str, list[float]] = {"os": [], "od": [], "ts": [], "td": []}
        for ri in range(cfg.repeats):
            seed = trial_seed(cfg.seed, si, ri)
            record = simulate_measurement(
                subject,
                protocol=proto,
                noise_rms=cfg.noise_rms,
                artifacts=cfg.artifacts,
                seed=seed,
            )
            if cfg.frontend:
                record = frontend_pass(record)
            outcome: AnalysisOutcome = analyze_record(record, cfg.ccf, cfg.tacho)

            osc, tacho = outcome.osc_result, outcome.tacho_result
            if osc is not None:
                devs["os"].append(osc.sbp_mmhg - subject.sbp_mmhg)
                devs["od"].append(osc.dbp_mmhg - subject.dbp_mmhg)
            if tacho is not None:
                devs["ts"].append(tacho.sbp_mmhg - subject.sbp_mmhg)
                devs["td"].append(tacho.dbp_mmhg - subject.dbp_mmhg)
            trials.append(
                TrialRecord(
                    subject=si,
                    repeat=ri,
                    seed=seed,
                    truth_sbp_mmhg=subject.sbp_mmhg,
                    truth_dbp_mmhg=subject.dbp_mmhg,
                    heart_rate_bpm=subject.heart_rate_bpm,
                    osc_sbp_mmhg=osc.sbp_mmhg if osc else math.nan,
                    osc_dbp_mmhg=osc.dbp_mmhg if osc else math.nan,
                    osc_error=outcome.osc_error,
                    tacho_sbp_mmhg=tacho.sbp_mmhg if tacho else math.nan,
                    tacho_dbp_mmhg=tacho.dbp_mmhg if tacho else math.nan,
                    tacho_error=outcome.tacho_error,
                )
            )
        summaries.append(
            SubjectSummary(
                subject=si,
                truth_sbp_mmhg=subject.sbp_mmhg,
                truth_dbp_mmhg=subject.dbp_mmhg,
                heart_rate_bpm=subject.heart_rate_bpm,
                n_osc_ok=len(devs["os"]),
                osc_sbp_mean_abs_dev=_mean([abs(d) for d in devs["os"]]),
                osc_dbp_mean_abs_dev=_mean([abs(d) for d in devs["od"]]),
                n_tacho_ok=len(devs["ts"]),
                tacho_sbp_mean_abs_dev=_mean([abs(d) for d in devs["ts"]]),
                tacho_dbp_mean_abs_dev=_mean([abs(d) for d in devs["td"]]),
            )
        )

    def pooled(selector) -> list[float]:
        out = []
        for tr in trials:
            v = selector(tr)
            if not math.isnan(v[0]):
                out.append(v[0] - v[1])
        return out

    os_dev = pooled(lambda tr: (tr.osc_sbp_mmhg, tr.truth_sbp_mmhg))
    od_dev = pooled(lambda tr: (tr.osc_dbp_mmhg, tr.truth_dbp_mmhg))
    ts_dev = pooled(lambda tr: (tr.tacho_sbp_mmhg, tr.truth_sbp_mmhg))
    td_dev = pooled(lambda tr: (tr.tacho_dbp_mmhg, tr.truth_dbp_mmhg))

    def worst(attr: str) -> float:
        vals = [getattr(s, attr) for s in summaries if not math.isnan(getattr(s, attr))]
        return max(vals) if vals else math.nan

    aggregate = AggregateStats(
        n_trials=len(trials),
        n_osc_ok=len(os_dev),
        n_tacho_ok=len(ts_dev),
        osc_sbp_mean_abs_dev=_mean([abs(d) for d in os_dev]),
        osc_dbp_mean_abs_dev=_mean([abs(d) for d in od_dev]),
        tacho_sbp_mean_abs_dev=_mean([abs(d) for d in ts_dev]),
        tacho_dbp_mean_abs_dev=_mean([abs(d) for d in td_dev]),
        osc_sbp_bias=_mean(os_dev),
        osc_dbp_bias=_mean(od_dev),
        tacho_sbp_bias=_mean(ts_dev),
        tacho_dbp_bias=_mean(td_dev),
        worst_subject_osc_sbp=worst("osc_sbp_mean_abs_dev"),
        worst_subject_osc_dbp=worst("osc_dbp_mean_abs_dev"),
        worst_subject_tacho_sbp=worst("tacho_sbp_mean_abs_dev"),
        worst_subject_tacho_dbp=worst("tacho_dbp_mean_abs_dev"),
    )
    return ExperimentResult(
        config=cfg,
        trials=tuple(trials),
        per_subject=tuple(summaries),
        aggregate=aggregate,
        runtime_s=time.perf_counter() - t_start,
    )
