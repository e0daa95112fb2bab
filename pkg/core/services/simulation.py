"""
Simulation Runner

Streams a LabeledStream through the estimator stack (EKF, timing-based
estimator, heel-strike backup, torque command) and scores every estimator
stride by stride. Also holds the cross-validation fold worker.

Nothing in here touches the database, so folds can run in worker processes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from core.backup import (
    BACKUP_BETA,
    BackupEstimator,
    HeelStrikeConfig,
    HeelStrikeDetector,
    ResetEvent,
    TimingEstimator,
    reset_filter,
    should_reset,
)
from core.estimator import P0_INCLINE, P0_SCALE, NoiseConfig, PhaseEKF
from core.gait_model import (
    GaitState,
    ParameterMatrix,
    build_constraints,
    fit_gait_model,
    residual_covariance_table,
)
from core.metrics import metrics_frame, stride_metrics
from core.simdata import LabeledStream, concatenate_strides
from core.torque_model import TorqueSurface, evaluate_torque, evaluate_torque_many, fit_torque_model

HS_MODES = ("oracle", "detected")


@dataclass(frozen=True)
class RunOptions:
    """How a stream is replayed through the estimator stack"""

    beta: float = BACKUP_BETA
    hs_mode: str = "oracle"
    backup_reset: bool = True
    warmup_strides: int = 2
    hs_config: HeelStrikeConfig = field(default_factory=HeelStrikeConfig)
    max_time_step: float | None = None
    record_samples: bool = False
    measure_latency: bool = False
    label: str = "ekf"


@dataclass
class StreamResult:
    subject_id: str
    strides: pd.DataFrame
    resets: list = field(default_factory=list)
    samples: pd.DataFrame | None = None
    latencies: np.ndarray | None = None
    heel_strikes: list = field(default_factory=list)


def initial_state_for(stream: LabeledStream) -> GaitState:
    """Population-average start: phase 0, 1 stride/s, 1.2 leg lengths, level ground"""
    return GaitState(0.0, 1.0, 1.2 * stream.leg_length, 0.0, stream.leg_length)


def run_stream(
    stream: LabeledStream,
    params: ParameterMatrix,
    noise: NoiseConfig,
    torque_surface: TorqueSurface | None = None,
    options: RunOptions | None = None,
    initial_state: GaitState | None = None,
) -> StreamResult:
    """
    Replay one stream sample by sample in real-time order.

    Heel strikes come from the stream's ground truth ("oracle") or from the
    threshold detector ("detected"); the TBE and the backup share that feed.
    At each heel strike the stride SSRs of EKF and backup are compared.
    """
    options = options or RunOptions()
    if options.hs_mode not in HS_MODES:
        raise ValueError(f"Unknown heel-strike mode '{options.hs_mode}'")
    initial_state = initial_state or initial_state_for(stream)

    n = len(stream)
    nominal_dt = 1.0 / stream.sample_rate
    ekf = PhaseEKF(
        params,
        noise,
        stream.leg_length,
        initial_state=initial_state,
        max_time_step=options.max_time_step,
    )
    backup = BackupEstimator(params, noise, initial_state, nominal_dt)
    timing = TimingEstimator()
    detector = HeelStrikeDetector(options.hs_config)

    ekf_estimates = np.empty((n, 4))
    backup_estimates = np.empty((n, 4))
    tbe_estimates = np.full((n, 4), np.nan)
    torque_command = np.zeros(n) if torque_surface is not None else None
    latencies = np.empty(n) if options.measure_latency else None
    resets = []
    heel_strikes = []
    oracle_times = iter(stream.hs_times)

    previous_time = stream.time[0] - nominal_dt
    for k in range(n):
        t = float(stream.time[k])
        z = stream.measurements[k]

        if options.hs_mode == "oracle":
            hs_event = next(oracle_times) if stream.hs[k] else None
        else:
            hs_event = detector.step(t, z[1], z[5])

        started = time.perf_counter()
        ekf_ssr = ekf.close_stride() if hs_event is not None else None
        ekf.step(z, t - previous_time)
        if torque_command is not None:
            torque_command[k] = evaluate_torque(torque_surface, ekf.state)
        if latencies is not None:
            latencies[k] = time.perf_counter() - started
        previous_time = t

        backup.step(z, hs_event, t)
        timing.step(t, hs_event)

        if hs_event is not None:
            heel_strikes.append(hs_event)
            if (
                options.backup_reset
                and backup.completed_rate_measured
                and should_reset(ekf_ssr, backup.completed_ssr, options.beta)
            ):
                reset_filter(ekf, backup.state)
                resets.append(
                    ResetEvent(t, len(heel_strikes) - 1, ekf_ssr, backup.completed_ssr)
                )

        ekf_estimates[k] = (ekf.phase, ekf.phase_rate, ekf.stride_length, ekf.incline)
        b = backup.state
        backup_estimates[k] = (b.phase, b.phase_rate, b.stride_length, b.incline)
        tbe_estimates[k, 0] = timing.phase
        tbe_estimates[k, 1] = timing.phase_rate if timing.period else np.nan

    torque_truth = None
    if torque_surface is not None:
        truth = stream.truth
        torque_truth = evaluate_torque_many(
            torque_surface, truth[:, 0], truth[:, 2] / stream.leg_length, truth[:, 3]
        )

    frames = [
        metrics_frame(
            stride_metrics(
                stream, ekf_estimates, torque_command, torque_truth,
                options.label, options.warmup_strides,
            ),
            subject_id=stream.subject_id,
        ),
        metrics_frame(
            stride_metrics(stream, tbe_estimates, estimator="tbe", start_stride=options.warmup_strides),
            subject_id=stream.subject_id,
        ),
        metrics_frame(
            stride_metrics(stream, backup_estimates, estimator="backup", start_stride=options.warmup_strides),
            subject_id=stream.subject_id,
        ),
    ]

    samples = None
    if options.record_samples:
        samples = pd.DataFrame(
            {
                "time_s": stream.time,
                "true_phase": stream.truth[:, 0],
                "true_phase_rate": stream.truth[:, 1],
                "true_stride_length_m": stream.truth[:, 2],
                "true_incline_deg": stream.truth[:, 3],
                "ekf_phase": ekf_estimates[:, 0],
                "ekf_phase_rate": ekf_estimates[:, 1],
                "ekf_stride_length_m": ekf_estimates[:, 2],
                "ekf_incline_deg": ekf_estimates[:, 3],
                "tbe_phase": tbe_estimates[:, 0],
                "backup_phase": backup_estimates[:, 0],
                "hs_flag": stream.hs.astype(int),
            }
        )
        if torque_command is not None:
            samples["torque_command_Nm"] = torque_command
            samples["torque_truth_Nm"] = torque_truth

    return StreamResult(
        subject_id=stream.subject_id,
        strides=pd.concat(frames, ignore_index=True),
        resets=resets,
        samples=samples,
        latencies=latencies,
        heel_strikes=heel_strikes,
    )


# ====================================================================
# CROSS-VALIDATION FOLDS
# ====================================================================


@dataclass(frozen=True)
class FoldTask:
    """Everything a worker needs to evaluate one held-out subject"""

    dataset: object
    held_out: str
    order: int
    sigma_q: tuple
    sigma_sensor: tuple
    stream_noise: tuple
    seed: int
    rate: float = 100.0
    ground_truth: str = "constant_rate"
    constraint_tol: float = 1e-8
    options: RunOptions = field(default_factory=RunOptions)
    frozen_task: bool = False
    frozen_variance: float = 1e-12
    initial_variances: tuple = (P0_SCALE, P0_SCALE, P0_SCALE, P0_INCLINE)


@dataclass
class FoldResult:
    held_out: str
    strides: pd.DataFrame
    resets: list
    constraint_violation: float


def run_fold(task: FoldTask) -> FoldResult:
    """
    Fit on every subject but one, then replay the held-out subject.

    A new model, residual covariance table and torque surface are trained for
    each fold. With `frozen_task` the no-task variant of the EKF is scored too.
    """
    training = task.dataset.without(task.held_out)
    constraints = build_constraints(task.order)
    params = fit_gait_model(training, constraints, task.order, task.constraint_tol)
    table = residual_covariance_table(training, params)
    noise = NoiseConfig(task.sigma_q, task.sigma_sensor, table, task.initial_variances)
    torque_surface = fit_torque_model(training, task.order) if training.has_torque else None

    stream = concatenate_strides(
        task.dataset.only(task.held_out), rate=task.rate, ground_truth=task.ground_truth
    )
    rng = np.random.default_rng(task.seed)
    stream = stream.with_noise(task.stream_noise, rng)

    result = run_stream(stream, params, noise, torque_surface, task.options)
    frames = [result.strides]
    if task.frozen_task:
        frozen = run_stream(
            stream,
            params,
            noise.frozen_task(task.frozen_variance),
            torque_surface,
            RunOptions(
                beta=task.options.beta,
                hs_mode=task.options.hs_mode,
                backup_reset=False,
                warmup_strides=task.options.warmup_strides,
                hs_config=task.options.hs_config,
                label="no_task",
            ),
        )
        frames.append(frozen.strides[frozen.strides["estimator"] == "no_task"])

    return FoldResult(
        held_out=task.held_out,
        strides=pd.concat(frames, ignore_index=True),
        resets=[
            {"subject_id": task.held_out, "time": r.time, "stride_index": r.stride_index,
             "ekf_ssr": r.ekf_ssr, "backup_ssr": r.backup_ssr}
            for r in result.resets
        ],
        constraint_violation=params.constraint_violation(constraints),
    )
