"""
Simulation Data - synthetic gait streams and stride datasets

- Analytic reference waveforms and the reference model fitted to them
- Scenario profiles (speed / incline schedules) and stream generation with
  known ground truth
- Stride datasets: synthetic generation, CSV ingestion and export
- Concatenation of labelled strides into a continuous walking stream
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .gait_model import (
    SAMPLES_PER_STRIDE,
    ParameterMatrix,
    Stride,
    StrideDataset,
    SubjectRecord,
    build_constraints,
    evaluate_many,
    phase_derivative_many,
    regressor_matrix,
    solve_constrained_lsq,
    stride_velocities,  # re-exported
)
from .torque_model import TORQUE_OUTPUT, TORQUE_SCALE, TorqueSurface

SPEEDS = (0.8, 1.0, 1.2)  # m/s
INCLINES = tuple(np.arange(-10.0, 10.0 + 1e-9, 2.5))  # deg
CONDITIONS = tuple((speed, incline) for speed in SPEEDS for incline in INCLINES)

LEG_LENGTH_RANGE = (0.82, 0.98)  # m
# Noise of the simulated device; the filter assumes larger sensor variances
DEVICE_NOISE = (0.5, 5.0, 1.0, 5.0, 0.005, 0.005)
MEASUREMENT_COLUMNS = (
    "theta_f_deg",
    "theta_f_dot_dps",
    "theta_s_deg",
    "theta_s_dot_dps",
    "p_f_m",
    "p_u_m",
)
TRUTH_COLUMNS = ("phase", "phase_rate", "stride_length_m", "incline_deg")

DATASET_COLUMNS = (
    "subject_id",
    "leg_length_m",
    "speed_mps",
    "incline_deg",
    "stride_idx",
    "sample_idx",
    "phase",
    "phase_rate",
    "stride_length_m",
    "theta_s_deg",
    "theta_f_deg",
    "p_f_m",
    "p_u_m",
)
TORQUE_COLUMN = "torque_Nm"

GROUND_TRUTH_MODES = ("constant_rate", "labels")


class DatasetError(Exception):
    """Raised when a stride dataset does not match the CSV schema"""

    pass


# ====================================================================
# REFERENCE WAVEFORMS
# ====================================================================


def cadence(speed):
    """Stride frequency in 1/s for a walking speed in m/s"""
    return 0.7 + 0.3 * np.asarray(speed, dtype=float)


def _flat_foot_shape(p):
    shape = 15.0 * np.cos(2 * np.pi * p) + 2.0 * np.cos(4 * np.pi * p)
    return shape - (15.0 * np.cos(2 * np.pi * 0.2) + 2.0 * np.cos(4 * np.pi * 0.2))


def reference_waveforms(p, l_norm, r) -> np.ndarray:
    """
    Gait-like (theta_s, theta_f, p_f, p_u) traces, one row per sample.

    Every trace is bilinear in (r, l) with at most two harmonics in p, and
    satisfies the zero-stride and flat-foot constraints exactly. The foot
    angle peaks at heel strike, so its velocity crosses zero downward there.
    """
    p, l_norm, r = np.broadcast_arrays(
        np.asarray(p, dtype=float), np.asarray(l_norm, dtype=float), np.asarray(r, dtype=float)
    )
    w = 2 * np.pi * p
    shank = 22.0 * np.cos(w) - 8.0 * np.sin(w) + 4.0 * np.cos(2 * w)
    incline_coupling = 0.4 * (np.cos(w) - np.cos(2 * np.pi * 0.2))
    theta_s = l_norm * shank * (1.0 + 0.01 * r)
    theta_f = r + l_norm * _flat_foot_shape(p) + r * l_norm * incline_coupling
    p_f = l_norm * (0.3 * np.cos(w) + 0.05 * np.sin(w))
    p_u = l_norm * (0.03 * (1.0 - np.cos(w)) + 0.01 * (1.0 - np.cos(2 * w)))
    return np.stack([theta_s, theta_f, p_f, p_u], axis=-1)


def reference_torque(p, l_norm, r) -> np.ndarray:
    """Biological ankle torque in N*m, plantarflexion peak near 100 N*m"""
    p = np.asarray(p, dtype=float)
    return (
        np.asarray(l_norm)
        * (45.0 * (1.0 + np.cos(2 * np.pi * (p - 0.48))) - 5.0)
        * (1.0 + 0.02 * np.asarray(r))
    )


def _reference_grid():
    p = np.arange(SAMPLES_PER_STRIDE) / SAMPLES_PER_STRIDE
    l_norm = np.linspace(0.6, 1.8, 5)
    r = np.linspace(-10.0, 10.0, 5)
    P, L, R = np.meshgrid(p, l_norm, r, indexing="ij")
    return P.ravel(), L.ravel(), R.ravel()


def reference_model(order: int) -> ParameterMatrix:
    """Constrained fit of the reference waveforms; exact for order >= 2"""
    if order < 2:
        raise ValueError("Reference waveforms need a Fourier order of at least 2")
    p, l_norm, r = _reference_grid()
    R = regressor_matrix(p, l_norm, r, order)
    coeffs = solve_constrained_lsq(
        R, reference_waveforms(p, l_norm, r), build_constraints(order), order
    )
    return ParameterMatrix(coeffs, order)


def reference_torque_surface(order: int, scale: float = TORQUE_SCALE) -> TorqueSurface:
    p, l_norm, r = _reference_grid()
    R = regressor_matrix(p, l_norm, r, order)
    coeffs = solve_constrained_lsq(R, reference_torque(p, l_norm, r) / scale, None, order)
    return TorqueSurface(ParameterMatrix(coeffs, order, TORQUE_OUTPUT), scale)


def jitter_parameters(params: ParameterMatrix, sigma: float, rng) -> ParameterMatrix:
    """
    Per-subject multiplicative coefficient jitter; zero coefficients stay zero.

    One factor per (harmonic, output) scales all four incline/stride blocks
    alike, so a subject deviates from the reference by the same fraction on
    every ramp and at every stride length.
    """
    if sigma <= 0:
        return params
    harmonics = 2 * params.order + 1
    factors = 1.0 + sigma * rng.standard_normal((harmonics, params.coeffs.shape[1]))
    return replace(params, coeffs=params.coeffs * np.tile(factors, (4, 1)))


# ====================================================================
# SCENARIOS
# ====================================================================


@dataclass(frozen=True)
class Segment:
    """Linear ramp from `start` to `end` over `duration` seconds"""

    duration: float
    start: float
    end: float | None = None

    @property
    def stop(self) -> float:
        return self.start if self.end is None else self.end


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear schedule; holds its last value after the final segment"""

    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise ValueError("A schedule needs at least one segment")
        for segment in self.segments:
            if segment.duration <= 0 or not np.isfinite([segment.start, segment.stop]).all():
                raise ValueError("Schedule segments need a positive duration and finite values")

    @classmethod
    def constant(cls, value: float, duration: float) -> "Schedule":
        return cls((Segment(duration, value),))

    @property
    def duration(self) -> float:
        return float(sum(segment.duration for segment in self.segments))

    def __call__(self, t) -> np.ndarray:
        times = [0.0]
        values = [self.segments[0].start]
        for segment in self.segments:
            if segment.start != values[-1]:
                # step change: repeat the knot so interpolation jumps
                times.append(times[-1])
                values.append(segment.start)
            times.append(times[-1] + segment.duration)
            values.append(segment.stop)
        return np.interp(np.asarray(t, dtype=float), times, values)


@dataclass(frozen=True)
class ScenarioProfile:
    """
    Walking scenario with ground truth.

    Phase rate follows the cadence of the scheduled speed; stride length is
    speed divided by the phase rate. `stride_rate_jitter` scales the rate of
    each stride by an independent factor, so heel-strike timing never predicts
    the next stride exactly.
    """

    name: str
    duration: float
    speed: Schedule
    incline: Schedule
    sample_rate: float = 100.0
    sensor_noise: tuple = DEVICE_NOISE
    coefficient_jitter: float = 0.0
    stride_rate_jitter: float = 0.0
    leg_length: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("Duration and sample rate must be positive")
        if len(self.sensor_noise) != 6 or min(self.sensor_noise) < 0:
            raise ValueError("sensor_noise needs six non-negative standard deviations")

    @classmethod
    def steady(cls, duration: float = 60.0, speed: float = 1.0, incline: float = 0.0, **kwargs):
        return cls(
            "steady",
            duration,
            Schedule.constant(speed, duration),
            Schedule.constant(incline, duration),
            **kwargs,
        )

    @classmethod
    def speed_pulse(cls, **kwargs):
        """20 s at 0.8 m/s, 20 s at 1.2 m/s, 20 s at 0.8 m/s"""
        speed = Schedule((Segment(20.0, 0.8), Segment(20.0, 1.2), Segment(20.0, 0.8)))
        return cls("speed_pulse", speed.duration, speed, Schedule.constant(0.0, 60.0), **kwargs)

    @classmethod
    def ramp(cls, **kwargs):
        """Level walking, then incline rising 0 -> 10 deg over 70 s, then holding"""
        incline = Schedule((Segment(10.0, 0.0), Segment(70.0, 0.0, 10.0), Segment(10.0, 10.0)))
        return cls("ramp", incline.duration, Schedule.constant(1.0, 90.0), incline, **kwargs)

    @classmethod
    def incline_varying(cls, **kwargs):
        """Alternating +/-7.5 deg plateaus joined by ramps"""
        incline = Schedule(
            (
                Segment(10.0, 0.0),
                Segment(10.0, 0.0, 7.5),
                Segment(15.0, 7.5),
                Segment(20.0, 7.5, -7.5),
                Segment(15.0, -7.5),
                Segment(10.0, -7.5, 0.0),
            )
        )
        return cls(
            "incline_varying", incline.duration, Schedule.constant(1.0, 80.0), incline, **kwargs
        )

    @classmethod
    def preset(cls, name: str, **kwargs) -> "ScenarioProfile":
        presets = {
            "steady": cls.steady,
            "speed_pulse": cls.speed_pulse,
            "ramp": cls.ramp,
            "incline_varying": cls.incline_varying,
        }
        if name not in presets:
            raise ValueError(f"Unknown scenario '{name}'")
        return presets[name](**kwargs)


SCENARIOS = ("steady", "speed_pulse", "ramp", "incline_varying")


@dataclass
class LabeledStream:
    """
    Sensor stream with ground truth at every sample.

    `truth` columns are (phase, phase_rate, stride_length [m], incline [deg]).
    `hs` flags the samples at which the ground-truth phase wrapped;
    `hs_times` holds the exact heel-strike instants.
    """

    time: np.ndarray
    measurements: np.ndarray
    truth: np.ndarray
    hs: np.ndarray
    leg_length: float
    hs_times: list = field(default_factory=list)
    subject_id: str = "synthetic"

    def __len__(self):
        return len(self.time)

    @property
    def stride_count(self) -> int:
        return int(np.count_nonzero(self.hs))

    @property
    def sample_rate(self) -> float:
        return float(1.0 / np.median(np.diff(self.time)))

    def with_noise(self, sigma, rng) -> "LabeledStream":
        """Copy with independent Gaussian noise added to each measurement channel"""
        noisy = self.measurements + rng.standard_normal(self.measurements.shape) * np.asarray(sigma)
        return replace(self, measurements=noisy)


# ====================================================================
# STREAM GENERATION
# ====================================================================


def generate_synthetic_stream(
    profile: ScenarioProfile,
    params_true: ParameterMatrix,
    subject_id: str = "synthetic",
) -> LabeledStream:
    """
    Integrate the true phase from the schedule and sample the subject model.

    The subject model is `params_true` with the profile's coefficient jitter.
    Heel strikes are flagged at the first sample after each phase wrap. The
    stream starts at phase 0, so sample 0 is flagged as a heel strike too and
    counts towards `stride_count`; the estimators see it like any other.
    """
    rng = np.random.default_rng(profile.seed)
    subject_params = jitter_parameters(params_true, profile.coefficient_jitter, rng)

    n = int(np.floor(profile.duration * profile.sample_rate)) + 1
    time = np.arange(n) / profile.sample_rate
    speed = profile.speed(time)
    base_rate = cadence(speed)

    phase = np.empty(n)
    rate = np.empty(n)
    hs = np.zeros(n, dtype=bool)
    hs_times = [0.0]
    hs[0] = True

    factor = 1.0 + profile.stride_rate_jitter * rng.standard_normal()
    phase[0] = 0.0
    rate[0] = base_rate[0] * factor
    for k in range(1, n):
        dt = time[k] - time[k - 1]
        step = 0.5 * (base_rate[k - 1] + base_rate[k]) * factor * dt
        progressed = phase[k - 1] + step
        if progressed >= 1.0:
            crossing = (1.0 - phase[k - 1]) / step
            hs_times.append(float(time[k - 1] + crossing * dt))
            hs[k] = True
            factor = 1.0 + profile.stride_rate_jitter * rng.standard_normal()
            progressed -= 1.0
        phase[k] = progressed
        rate[k] = base_rate[k] * factor

    stride_length = speed / rate
    incline = profile.incline(time)
    l_norm = stride_length / profile.leg_length

    outputs = evaluate_many(subject_params, phase, l_norm, incline)
    d_dphase = phase_derivative_many(subject_params, phase, l_norm, incline)
    measurements = np.column_stack(
        [
            outputs[:, 1],
            d_dphase[:, 1] * rate,
            outputs[:, 0],
            d_dphase[:, 0] * rate,
            outputs[:, 2],
            outputs[:, 3],
        ]
    )
    if np.any(np.asarray(profile.sensor_noise) > 0):
        measurements = measurements + rng.standard_normal(measurements.shape) * np.asarray(
            profile.sensor_noise
        )

    return LabeledStream(
        time=time,
        measurements=measurements,
        truth=np.column_stack([phase, rate, stride_length, incline]),
        hs=hs,
        leg_length=profile.leg_length,
        hs_times=hs_times,
        subject_id=subject_id,
    )


# ====================================================================
# STRIDE DATASETS
# ====================================================================


def generate_stride_dataset(
    n_subjects: int,
    params_true: ParameterMatrix,
    seed: int,
    strides_per_condition: int = 1,
    coefficient_jitter: float = 0.05,
    stride_rate_jitter: float = 0.03,
    output_noise: tuple | None = None,
    with_torque: bool = True,
    conditions=CONDITIONS,
) -> StrideDataset:
    """
    Synthetic labelled strides over the treadmill conditions.

    Each subject gets a leg length, a jittered copy of the model and a torque
    gain. Strides are sampled at 150 uniform phase labels.
    """
    if n_subjects < 1:
        raise ValueError("Need at least one subject")
    rng = np.random.default_rng(seed)
    phase = np.arange(SAMPLES_PER_STRIDE) / SAMPLES_PER_STRIDE
    subjects = []

    for index in range(n_subjects):
        leg_length = float(rng.uniform(*LEG_LENGTH_RANGE))
        subject_params = jitter_parameters(params_true, coefficient_jitter, rng)
        torque_gain = 1.0 + coefficient_jitter * rng.standard_normal()
        strides = []
        for speed, incline in conditions:
            for _ in range(strides_per_condition):
                rate = float(cadence(speed)) * (1.0 + stride_rate_jitter * rng.standard_normal())
                stride_length = speed / rate
                l_norm = stride_length / leg_length
                outputs = evaluate_many(
                    subject_params, phase, np.full_like(phase, l_norm), np.full_like(phase, incline)
                )
                if output_noise is not None:
                    outputs = outputs + rng.standard_normal(outputs.shape) * np.asarray(output_noise)
                torque = (
                    torque_gain * reference_torque(phase, l_norm, incline) if with_torque else None
                )
                strides.append(
                    Stride(
                        condition=(float(speed), float(incline)),
                        phase=phase.copy(),
                        phase_rate=np.full(SAMPLES_PER_STRIDE, rate),
                        stride_length=np.full(SAMPLES_PER_STRIDE, stride_length),
                        incline=np.full(SAMPLES_PER_STRIDE, float(incline)),
                        theta_s=outputs[:, 0],
                        theta_f=outputs[:, 1],
                        p_f=outputs[:, 2],
                        p_u=outputs[:, 3],
                        torque=torque,
                    )
                )
        subjects.append(SubjectRecord(f"S{index + 1:02d}", leg_length, strides))
    return StrideDataset(subjects)


def export_stride_dataset(data: StrideDataset, path) -> Path:
    """Write the dataset as one CSV row per sample"""
    frames = []
    for subject in data.subjects:
        for stride_idx, stride in enumerate(subject.strides):
            n = stride.n_samples
            frame = pd.DataFrame(
                {
                    "subject_id": subject.subject_id,
                    "leg_length_m": subject.leg_length,
                    "speed_mps": stride.condition[0],
                    "incline_deg": stride.incline,
                    "stride_idx": stride_idx,
                    "sample_idx": np.arange(n),
                    "phase": stride.phase,
                    "phase_rate": stride.phase_rate,
                    "stride_length_m": stride.stride_length,
                    "theta_s_deg": stride.theta_s,
                    "theta_f_deg": stride.theta_f,
                    "p_f_m": stride.p_f,
                    "p_u_m": stride.p_u,
                    TORQUE_COLUMN: stride.torque if stride.torque is not None else np.nan,
                }
            )
            frames.append(frame)
    if not frames:
        raise DatasetError("Cannot export an empty dataset")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.concat(frames, ignore_index=True).to_csv(
        path, index=False, float_format="%.17g", encoding="utf-8"
    )
    return path


def load_stride_dataset(path) -> StrideDataset:
    """
    Read and validate a stride CSV.

    Row numbers in error messages count the header as row 1.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Dataset file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype={"subject_id": str}, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DatasetError(f"Could not parse {path}: {e}") from e

    missing = [column for column in DATASET_COLUMNS if column not in frame.columns]
    if missing:
        raise DatasetError(f"Missing columns: {', '.join(missing)}")

    numeric = [column for column in DATASET_COLUMNS if column != "subject_id"]
    for column in numeric + ([TORQUE_COLUMN] if TORQUE_COLUMN in frame.columns else []):
        converted = pd.to_numeric(frame[column], errors="coerce")
        if column == TORQUE_COLUMN:
            bad = converted.isna() & frame[column].notna()
        else:
            bad = converted.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0]) + 2
            raise DatasetError(f"Row {row}: invalid value in column '{column}'")
        frame[column] = converted
    if frame["subject_id"].isna().any():
        row = int(np.flatnonzero(frame["subject_id"].isna().to_numpy())[0]) + 2
        raise DatasetError(f"Row {row}: missing subject_id")

    frame["_row"] = np.arange(len(frame)) + 2
    has_torque_column = TORQUE_COLUMN in frame.columns
    subjects = []

    for subject_id, rows in frame.groupby("subject_id", sort=False):
        leg_lengths = rows["leg_length_m"].unique()
        if len(leg_lengths) != 1 or leg_lengths[0] <= 0:
            raise DatasetError(
                f"Row {int(rows['_row'].iloc[0])}: subject {subject_id} needs one positive leg length"
            )
        strides = []
        for stride_idx, stride_rows in rows.groupby("stride_idx", sort=True):
            stride_rows = stride_rows.sort_values("sample_idx")
            first_row = int(stride_rows["_row"].min())
            if len(stride_rows) != SAMPLES_PER_STRIDE:
                raise DatasetError(
                    f"Row {first_row}: stride {int(stride_idx)} of subject {subject_id} has "
                    f"{len(stride_rows)} samples, expected {SAMPLES_PER_STRIDE}"
                )
            if not np.array_equal(stride_rows["sample_idx"].to_numpy(), np.arange(SAMPLES_PER_STRIDE)):
                raise DatasetError(f"Row {first_row}: sample_idx must run 0..149")
            phase = stride_rows["phase"].to_numpy(dtype=float)
            steps = np.diff(phase)
            if phase[0] < 0 or phase[-1] >= 1 or np.any(steps <= 0):
                bad = int(np.flatnonzero(steps <= 0)[0]) + 1 if np.any(steps <= 0) else 0
                raise DatasetError(
                    f"Row {int(stride_rows['_row'].iloc[bad])}: phase must increase "
                    f"monotonically within [0, 1)"
                )
            torque = None
            if has_torque_column and stride_rows[TORQUE_COLUMN].notna().all():
                torque = stride_rows[TORQUE_COLUMN].to_numpy(dtype=float)
            incline = stride_rows["incline_deg"].to_numpy(dtype=float)
            strides.append(
                Stride(
                    condition=(float(stride_rows["speed_mps"].iloc[0]), float(incline[0])),
                    phase=phase,
                    phase_rate=stride_rows["phase_rate"].to_numpy(dtype=float),
                    stride_length=stride_rows["stride_length_m"].to_numpy(dtype=float),
                    incline=incline,
                    theta_s=stride_rows["theta_s_deg"].to_numpy(dtype=float),
                    theta_f=stride_rows["theta_f_deg"].to_numpy(dtype=float),
                    p_f=stride_rows["p_f_m"].to_numpy(dtype=float),
                    p_u=stride_rows["p_u_m"].to_numpy(dtype=float),
                    torque=torque,
                )
            )
        subjects.append(SubjectRecord(str(subject_id), float(leg_lengths[0]), strides))
    if not subjects:
        raise DatasetError(f"No strides found in {path}")
    return StrideDataset(subjects)


# ====================================================================
# CONCATENATION
# ====================================================================


def _periodic_interp(x, xp, fp):
    return np.interp(x, xp, fp, period=1.0)


def concatenate_strides(
    data: StrideDataset,
    order=None,
    rate: float = 100.0,
    ground_truth: str = "constant_rate",
) -> LabeledStream:
    """
    Join one subject's strides into a continuous stream sampled at `rate` Hz.

    Each stride lasts round(rate / phase_rate) samples. The 150 samples of a
    stride are taken as uniform in time. `ground_truth` selects whether the
    true phase rises at a constant rate over the stride or follows the
    dataset's phase labels. `order` is an optional sequence of
    (speed, incline) conditions; strides of each condition are appended in
    dataset order.
    """
    if ground_truth not in GROUND_TRUTH_MODES:
        raise ValueError(f"Unknown ground-truth mode '{ground_truth}'")
    if len(data.subjects) != 1:
        raise DatasetError("Concatenation needs exactly one subject")
    subject = data.subjects[0]
    if not subject.strides:
        raise DatasetError(f"Subject {subject.subject_id} has no strides")

    if order is None:
        strides = list(subject.strides)
    else:
        strides = [
            stride
            for condition in order
            for stride in subject.strides
            if np.allclose(stride.condition, condition)
        ]
        if not strides:
            raise DatasetError("No strides match the requested condition order")

    pieces = []
    hs_times = []
    start = 0
    for stride in strides:
        n = max(2, int(round(rate / stride.mean_phase_rate)))
        fraction = np.arange(n) / n
        grid = np.arange(stride.n_samples) / stride.n_samples

        if ground_truth == "constant_rate":
            true_phase = fraction
            true_rate = np.full(n, rate / n)
        else:
            true_phase = _periodic_interp(fraction, grid, stride.phase)
            true_rate = _periodic_interp(fraction, grid, stride.phase_rate)

        theta_f_dot = stride_velocities(stride.theta_f, stride.phase, stride.phase_rate)
        theta_s_dot = stride_velocities(stride.theta_s, stride.phase, stride.phase_rate)
        channels = [stride.theta_f, theta_f_dot, stride.theta_s, theta_s_dot, stride.p_f, stride.p_u]
        measurements = np.column_stack([_periodic_interp(fraction, grid, c) for c in channels])
        truth = np.column_stack(
            [
                true_phase,
                true_rate,
                _periodic_interp(fraction, grid, stride.stride_length),
                _periodic_interp(fraction, grid, stride.incline),
            ]
        )
        pieces.append((measurements, truth))
        hs_times.append(start / rate)
        start += n

    hs = np.zeros(start, dtype=bool)
    boundaries = np.cumsum([0] + [len(m) for m, _ in pieces[:-1]])
    hs[boundaries] = True
    return LabeledStream(
        time=np.arange(start) / rate,
        measurements=np.vstack([m for m, _ in pieces]),
        truth=np.vstack([t for _, t in pieces]),
        hs=hs,
        leg_length=subject.leg_length,
        hs_times=hs_times,
        subject_id=subject.subject_id,
    )


def write_stream_csv(stream: LabeledStream, path) -> Path:
    frame = pd.DataFrame(stream.measurements, columns=MEASUREMENT_COLUMNS)
    frame.insert(0, "time_s", stream.time)
    for index, column in enumerate(TRUTH_COLUMNS):
        frame[column] = stream.truth[:, index]
    frame["hs_flag"] = stream.hs.astype(int)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
