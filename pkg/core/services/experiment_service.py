"""
Experiment Service

Drives the lab commands:
- fit: gait model, residual covariance table and torque surface
- gen: synthetic stride dataset (and scenario stream)
- replay: one scenario through the full estimator stack
- crossval / ablation: leave-one-subject-out evaluation
- report: re-aggregate per-stride CSVs

Drivers are plain functions of an ExperimentConfig and never touch the ORM.
ExperimentManager wraps them with run bookkeeping and the audit log.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd
from django.conf import settings
from django.utils import timezone

from core.backup import HeelStrikeConfig
from core.estimator import InnovationError, NoiseConfig
from core.gait_model import (
    ConstraintError,
    ModelFitError,
    build_constraints,
    fit_gait_model,
    residual_covariance_table,
    sum_squared_error,
)
from core.metrics import METRIC_FIELDS, paired_comparison, paired_ttest, summarize_frame
from core.model_store import file_digest, load_model, save_model, save_torque_surface
from core.models import ExperimentRun, ModelArtifact, RunLog
from core.serializers import ExperimentConfigSerializer
from core.services.simulation import FoldTask, RunOptions, run_fold, run_stream
from core.simdata import (
    DEVICE_NOISE,
    ScenarioProfile,
    export_stride_dataset,
    generate_stride_dataset,
    generate_synthetic_stream,
    load_stride_dataset,
    reference_model,
    write_stream_csv,
)
from core.torque_model import fit_torque_model

NUMERICAL_ERRORS = (ConstraintError, ModelFitError, InnovationError, np.linalg.LinAlgError)

# Excluded from the config hash and the embedded report config
UNHASHED_FIELDS = ("output_dir", "workers")

MIN_CROSSVAL_SUBJECTS = 3


class ConfigError(Exception):
    """Raised when an experiment configuration is invalid"""

    pass


class ExperimentError(Exception):
    """Raised when an experiment cannot run with the inputs it was given"""

    pass


# ====================================================================
# CONFIGURATION
# ====================================================================


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    output_dir: str
    seed: int | None = None
    order: int = 20
    dataset: str | None = None
    gait_model: str | None = None
    torque_model: str | None = None
    strides_csv: str | None = None
    scenario: str = "steady"
    duration: float | None = None
    subjects: int = 10
    strides_per_condition: int = 3
    sample_rate: float = 100.0
    coefficient_jitter: float = 0.05
    stride_rate_jitter: float = 0.03
    stream_noise: tuple = DEVICE_NOISE
    noise_preset: str = "default"
    sigma_q: tuple | None = None
    sigma_sensor: tuple = (1.0, 10.0, 7.0, 20.0, 0.01, 0.08)
    beta: float = 0.5
    max_time_step: float | None = None
    hs_mode: str = "oracle"
    hs_velocity_threshold: float = 0.0
    hs_height_threshold: float = 0.02
    hs_refractory: float = 0.3
    ground_truth: str = "constant_rate"
    warmup_strides: int = 2
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            key: list(value) if isinstance(value, tuple) else value
            for key, value in asdict(self).items()
        }

    def hashed_dict(self) -> dict:
        data = self.to_dict()
        for key in UNHASHED_FIELDS:
            data.pop(key)
        return data

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    @property
    def hs_config(self) -> HeelStrikeConfig:
        return HeelStrikeConfig(
            self.hs_velocity_threshold, self.hs_height_threshold, self.hs_refractory
        )

    def noise(self, covariance_table=None) -> NoiseConfig:
        """Filter noise: explicit sigma_q wins over the named preset"""
        sigma_q = self.sigma_q
        if sigma_q is None:
            sigma_q = {
                "default": settings.GAIT_SIGMA_Q,
                "outdoor": settings.GAIT_SIGMA_Q_OUTDOOR,
            }[self.noise_preset]
        return NoiseConfig(
            tuple(sigma_q),
            tuple(self.sigma_sensor),
            covariance_table,
            (settings.GAIT_P0_SCALE,) * 3 + (settings.GAIT_P0_INCLINE,),
        )

    def run_options(self, **overrides) -> RunOptions:
        options = {
            "beta": self.beta,
            "hs_mode": self.hs_mode,
            "warmup_strides": self.warmup_strides,
            "hs_config": self.hs_config,
            "max_time_step": self.max_time_step,
        }
        options.update(overrides)
        return RunOptions(**options)


def config_defaults(mode: str) -> dict:
    """Defaults for a mode, taken from the GAIT_* settings"""
    return {
        "mode": mode,
        "seed": None,
        "order": settings.GAIT_PHASE_ORDER,
        "dataset": None,
        "gait_model": None,
        "torque_model": None,
        "strides_csv": None,
        "scenario": "steady",
        "duration": None,
        "subjects": 10,
        "strides_per_condition": 3,
        "sample_rate": 100.0,
        "coefficient_jitter": 0.05,
        "stride_rate_jitter": 0.03,
        "stream_noise": list(DEVICE_NOISE),
        "noise_preset": "default",
        "sigma_q": None,
        "sigma_sensor": list(settings.GAIT_SIGMA_SENSOR),
        "beta": settings.GAIT_BACKUP_BETA,
        "max_time_step": None,
        # Replay runs on a detected heel-strike feed, as it would on hardware
        "hs_mode": "detected" if mode == "replay" else "oracle",
        "hs_velocity_threshold": settings.GAIT_HS_VELOCITY_THRESHOLD,
        "hs_height_threshold": settings.GAIT_HS_HEIGHT_THRESHOLD,
        "hs_refractory": settings.GAIT_HS_REFRACTORY,
        "ground_truth": "constant_rate",
        "warmup_strides": 2,
        "workers": settings.GAIT_WORKERS,
        "output_dir": str(Path(settings.GAIT_OUTPUT_ROOT) / mode),
    }


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return data


def build_config(mode: str, flags: dict | None = None, config_file=None) -> ExperimentConfig:
    """
    Merge settings defaults, command-line flags and an optional JSON file.

    Flags left at None do not override anything. The config file has the
    last word. The merged values are validated before use.
    """
    known = {f.name for f in fields(ExperimentConfig)}
    merged = config_defaults(mode)
    merged.update({key: value for key, value in (flags or {}).items() if value is not None})
    if config_file:
        overrides = read_config_file(config_file)
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        if overrides.get("mode", mode) != mode:
            raise ConfigError(f"Config file is for mode '{overrides['mode']}', not '{mode}'")
        merged.update(overrides)

    serializer = ExperimentConfigSerializer(data=merged)
    if not serializer.is_valid():
        raise ConfigError(_format_errors(serializer.errors))

    values = {key: value for key, value in serializer.validated_data.items() if key in known}
    for key, value in values.items():
        if isinstance(value, list):
            values[key] = tuple(value)
    return ExperimentConfig(**values)


def _format_errors(errors) -> str:
    parts = []
    for name, messages in errors.items():
        if isinstance(messages, dict):
            messages = [f"{k}: {v}" for k, v in messages.items()]
        text = "; ".join(str(m) for m in messages)
        parts.append(text if name == "non_field_errors" else f"{name}: {text}")
    return " | ".join(parts)


# ====================================================================
# REPORTS
# ====================================================================


@dataclass
class DriverResult:
    report: dict
    artifacts: list = field(default_factory=list)
    resets: list = field(default_factory=list)
    files: list = field(default_factory=list)


def _jsonable(value):
    """Plain JSON types; non-finite floats become None"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n")
    return path


def _report_header(config: ExperimentConfig) -> dict:
    return {
        "mode": config.mode,
        "seed": config.seed,
        "config_hash": config.config_hash,
        "config": config.hashed_dict(),
        "hs_mode": config.hs_mode,
        "ground_truth": config.ground_truth,
    }


def _comparisons(frame: pd.DataFrame) -> dict:
    """Paired tests of EKF phase RMSE against every other estimator present"""
    comparisons = {}
    estimators = set(frame["estimator"].unique())
    if "ekf" not in estimators:
        return comparisons
    for other in ("tbe", "backup", "no_task"):
        if other not in estimators:
            continue
        per_stride = paired_comparison(frame, "ekf", other)
        entry = {"per_stride": per_stride.as_dict() if per_stride else None}
        if "subject_id" in frame:
            per_subject = _subject_comparison(frame, "ekf", other)
            entry["per_subject"] = per_subject.as_dict() if per_subject else None
        comparisons[f"ekf_vs_{other}"] = entry
    return comparisons


def _subject_comparison(frame: pd.DataFrame, first: str, second: str, metric: str = "phase_rmse_pct"):
    means = (
        frame[frame["estimator"].isin([first, second])]
        .groupby(["subject_id", "estimator"])[metric]
        .mean()
        .unstack("estimator")
        .dropna()
    )
    if len(means) < 2 or first not in means or second not in means:
        return None
    return paired_ttest(means[first].to_numpy(float), means[second].to_numpy(float))


def aggregate_strides(frame: pd.DataFrame) -> dict:
    missing = {"estimator", "phase_rmse_pct"} - set(frame.columns)
    if missing:
        raise ExperimentError(f"Per-stride table is missing columns: {', '.join(sorted(missing))}")
    return {
        "summary": summarize_frame(frame),
        "comparisons": _comparisons(frame),
    }


def _write_strides(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [c for c in frame.columns if c not in METRIC_FIELDS] + [
        c for c in METRIC_FIELDS if c in frame.columns
    ]
    frame[columns].to_csv(path, index=False, float_format="%.17g")
    return path


def _artifact(kind: str, path: Path, params, has_table: bool = False) -> dict:
    return {
        "kind": kind,
        "path": str(path),
        "phase_order": params.order,
        "regressor_length": params.regressor_length,
        "has_covariance_table": has_table,
        "sha256": file_digest(path),
    }


# ====================================================================
# FIT AND GENERATE
# ====================================================================


@dataclass
class FittedModels:
    params: object
    covariance_table: np.ndarray | None
    torque_surface: object | None
    constraint_violation: float


def training_data(config: ExperimentConfig):
    """The configured dataset, or a synthetic one generated from the seed"""
    if config.dataset:
        return load_stride_dataset(config.dataset)
    if config.seed is None:
        raise ExperimentError("No dataset given and no seed to generate one")
    return generate_stride_dataset(
        config.subjects,
        reference_model(config.order),
        config.seed,
        strides_per_condition=config.strides_per_condition,
        coefficient_jitter=config.coefficient_jitter,
        stride_rate_jitter=config.stride_rate_jitter,
    )


def fit_models(data, config: ExperimentConfig) -> FittedModels:
    if len(data.subject_ids) < 2:
        raise ExperimentError(
            f"Fitting needs at least 2 subjects for the residual covariance, got {len(data.subject_ids)}"
        )
    constraints = build_constraints(config.order)
    params = fit_gait_model(data, constraints, config.order, settings.GAIT_CONSTRAINT_TOL)
    table = residual_covariance_table(data, params)
    surface = fit_torque_model(data, config.order) if data.has_torque else None
    return FittedModels(params, table, surface, params.constraint_violation(constraints))


def run_fit(config: ExperimentConfig) -> DriverResult:
    data = training_data(config)
    fitted = fit_models(data, config)
    out = config.output_path

    gait_path = save_model(out / "gait.npz", fitted.params, "gait", fitted.covariance_table)
    artifacts = [_artifact("gait", gait_path, fitted.params, has_table=True)]
    if fitted.torque_surface is not None:
        torque_path = save_torque_surface(out / "torque.npz", fitted.torque_surface)
        artifacts.append(_artifact("torque", torque_path, fitted.torque_surface.params))

    report = _report_header(config)
    report.update(
        {
            "subjects": data.subject_ids,
            "strides": data.stride_count,
            "samples": data.sample_count,
            "regressor_length": fitted.params.regressor_length,
            "constraint_violation": fitted.constraint_violation,
            "sum_squared_error": sum_squared_error(fitted.params, data),
            "has_torque": fitted.torque_surface is not None,
        }
    )
    report_path = write_report(report, out / "report.json")
    return DriverResult(report, artifacts=artifacts, files=[gait_path, report_path])


def scenario_profile(config: ExperimentConfig, sensor_noise=None) -> ScenarioProfile:
    kwargs = {
        "sample_rate": config.sample_rate,
        "sensor_noise": tuple(config.stream_noise if sensor_noise is None else sensor_noise),
        "stride_rate_jitter": config.stride_rate_jitter,
        "seed": config.seed or 0,
    }
    if config.scenario == "steady" and config.duration is not None:
        kwargs["duration"] = config.duration
    return ScenarioProfile.preset(config.scenario, **kwargs)


def run_gen(config: ExperimentConfig) -> DriverResult:
    if config.seed is None:
        raise ExperimentError("Data generation needs a seed")
    params = reference_model(config.order)
    data = generate_stride_dataset(
        config.subjects,
        params,
        config.seed,
        strides_per_condition=config.strides_per_condition,
        coefficient_jitter=config.coefficient_jitter,
        stride_rate_jitter=config.stride_rate_jitter,
    )
    out = config.output_path
    dataset_path = export_stride_dataset(data, out / "dataset.csv")

    stream = generate_synthetic_stream(scenario_profile(config), params, config.scenario)
    stream_path = write_stream_csv(stream, out / "stream.csv")

    report = _report_header(config)
    report.update(
        {
            "subjects": data.subject_ids,
            "strides": data.stride_count,
            "samples": data.sample_count,
            "leg_lengths": {s.subject_id: s.leg_length for s in data.subjects},
            "stream": {
                "scenario": config.scenario,
                "samples": len(stream),
                "heel_strikes": len(stream.hs_times),
            },
        }
    )
    report_path = write_report(report, out / "report.json")
    return DriverResult(report, files=[dataset_path, stream_path, report_path])


# ====================================================================
# REPLAY
# ====================================================================


def _replay_models(config: ExperimentConfig) -> FittedModels:
    if not config.gait_model:
        return fit_models(training_data(config), config)
    stored = load_model(config.gait_model)
    if stored.kind != "gait":
        raise ExperimentError(f"{config.gait_model} holds a {stored.kind} model, not a gait model")
    surface = load_model(config.torque_model).torque_surface() if config.torque_model else None
    violation = stored.params.constraint_violation(build_constraints(stored.params.order))
    return FittedModels(stored.params, stored.covariance_table, surface, violation)


def latency_summary(latencies: np.ndarray) -> dict:
    ms = np.asarray(latencies, dtype=float) * 1e3
    return {
        "steps": int(len(ms)),
        "p50_ms": float(np.percentile(ms, 50)),
        "p99_ms": float(np.percentile(ms, 99)),
        "max_ms": float(ms.max()),
    }


def run_replay(config: ExperimentConfig) -> DriverResult:
    """
    Stream one scenario through EKF, backup, TBE and torque command.

    The scenario is simulated from the model being replayed. Latency goes to
    latency.json only so report.json stays reproducible.
    """
    models = _replay_models(config)
    stream = generate_synthetic_stream(scenario_profile(config), models.params, config.scenario)
    result = run_stream(
        stream,
        models.params,
        config.noise(models.covariance_table),
        models.torque_surface,
        config.run_options(record_samples=True, measure_latency=True),
    )

    out = config.output_path
    samples_path = out / "samples.csv"
    out.mkdir(parents=True, exist_ok=True)
    result.samples.to_csv(samples_path, index=False, float_format="%.17g")
    strides_path = _write_strides(result.strides, out / "strides.csv")
    latency_path = out / "latency.json"
    latency_path.write_text(json.dumps(latency_summary(result.latencies), sort_keys=True, indent=2) + "\n")

    resets = [dict(asdict(r), subject_id=stream.subject_id) for r in result.resets]
    report = _report_header(config)
    report.update(aggregate_strides(result.strides))
    report.update(
        {
            "scenario": config.scenario,
            "samples": len(stream),
            "heel_strikes": len(result.heel_strikes),
            "resets": len(resets),
            "constraint_violation": models.constraint_violation,
        }
    )
    report_path = write_report(report, out / "report.json")
    return DriverResult(
        report,
        resets=resets,
        files=[samples_path, strides_path, latency_path, report_path],
    )


# ====================================================================
# CROSS-VALIDATION AND ABLATION
# ====================================================================


def _map_folds(tasks: list, workers: int) -> list:
    """Run folds in order; a pool returns results in submission order too"""
    if workers <= 1 or len(tasks) <= 1:
        return [run_fold(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(run_fold, tasks))


def cross_validate(config: ExperimentConfig, frozen_task: bool = False) -> DriverResult:
    data = training_data(config)
    if len(data.subject_ids) < MIN_CROSSVAL_SUBJECTS:
        raise ExperimentError(
            f"Leave-one-out needs at least {MIN_CROSSVAL_SUBJECTS} subjects, "
            f"got {len(data.subject_ids)}"
        )
    noise = config.noise()
    seed = config.seed or 0
    tasks = [
        FoldTask(
            dataset=data,
            held_out=subject_id,
            order=config.order,
            sigma_q=tuple(noise.sigma_q),
            sigma_sensor=tuple(noise.sigma_sensor),
            stream_noise=tuple(config.stream_noise),
            seed=seed + index,
            rate=config.sample_rate,
            ground_truth=config.ground_truth,
            constraint_tol=settings.GAIT_CONSTRAINT_TOL,
            options=config.run_options(),
            frozen_task=frozen_task,
            frozen_variance=settings.GAIT_FROZEN_VARIANCE,
            initial_variances=tuple(noise.initial_variances),
        )
        for index, subject_id in enumerate(data.subject_ids)
    ]
    folds = _map_folds(tasks, config.workers)

    strides = pd.concat([fold.strides for fold in folds], ignore_index=True)
    resets = [reset for fold in folds for reset in fold.resets]
    out = config.output_path
    strides_path = _write_strides(strides, out / "strides.csv")

    report = _report_header(config)
    report.update(aggregate_strides(strides))
    report.update(
        {
            "folds": [fold.held_out for fold in folds],
            "subject_means": {
                estimator: rows.groupby("subject_id")["phase_rmse_pct"].mean().to_dict()
                for estimator, rows in strides.groupby("estimator", sort=True)
            },
            "resets": len(resets),
            "max_constraint_violation": max(fold.constraint_violation for fold in folds),
        }
    )
    report_path = write_report(report, out / "report.json")
    return DriverResult(report, resets=resets, files=[strides_path, report_path])


def run_crossval(config: ExperimentConfig) -> DriverResult:
    return cross_validate(config)


def run_ablation(config: ExperimentConfig) -> DriverResult:
    """Cross-validation with a no-task EKF scored alongside the full one"""
    return cross_validate(config, frozen_task=True)


def run_report(config: ExperimentConfig) -> DriverResult:
    path = Path(config.strides_csv) if config.strides_csv else config.output_path / "strides.csv"
    if not path.exists():
        raise ExperimentError(f"Per-stride CSV not found: {path}")
    frame = pd.read_csv(path)
    if frame.empty:
        raise ExperimentError(f"Per-stride CSV {path} has no rows")
    report = _report_header(config)
    report.update({"source": path.name, "strides": int(len(frame))})
    report.update(aggregate_strides(frame))
    summary_path = write_report(report, config.output_path / "summary.json")
    return DriverResult(report, files=[summary_path])


DRIVERS = {
    "fit": run_fit,
    "gen": run_gen,
    "replay": run_replay,
    "crossval": run_crossval,
    "ablation": run_ablation,
    "report": run_report,
}


# ====================================================================
# RUN BOOKKEEPING
# ====================================================================


class ExperimentManager:
    """Runs drivers and records them as ExperimentRuns with an audit log"""

    def log(self, run, action, message, details=None):
        """Create a log entry"""
        RunLog.objects.create(run=run, action=action, message=message, details=details or {})

    def create_run(self, config: ExperimentConfig) -> ExperimentRun:
        return ExperimentRun.objects.create(
            mode=config.mode,
            seed=config.seed,
            config=config.to_dict(),
            config_hash=config.config_hash,
            output_dir=config.output_dir,
        )

    def execute(self, config: ExperimentConfig, run: ExperimentRun | None = None):
        """
        Run the driver for config.mode.
        Returns (run, DriverResult); on failure the run is marked as errored
        and the exception propagates.
        """
        run = run or self.create_run(config)
        try:
            run.status = "running"
            run.save(update_fields=["status", "updated_at"])
            self.log(
                run, config.mode, f"Starting {config.mode} run",
                {"config_hash": config.config_hash, "seed": config.seed},
            )

            result = DRIVERS[config.mode](config)

            for artifact in result.artifacts:
                ModelArtifact.objects.create(run=run, **artifact)
            for reset in result.resets:
                self.log(
                    run, "reset",
                    f"Backup reset at stride {reset['stride_index']} ({reset['subject_id']})",
                    _jsonable(reset),
                )

            run.report = _jsonable(result.report)
            run.status = "complete"
            run.status_message = ""
            run.completed_at = timezone.now()
            run.save()
            self.log(
                run, config.mode, f"{config.mode} run complete",
                {
                    "files": [str(path) for path in result.files],
                    "artifacts": len(result.artifacts),
                    "resets": len(result.resets),
                },
            )
            return run, result

        except Exception as e:
            run.status = "error"
            run.status_message = str(e)
            run.save()
            self.log(
                run, "error", f"{config.mode} run failed: {e}",
                {"error": str(e), "type": type(e).__name__},
            )
            raise
