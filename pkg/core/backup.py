"""
Heel-strike timing: detection, the timing-based phase estimator and the
backup estimator that can pull the main EKF back into phase.

The backup runs a reduced EKF over (l_p, r) while taking phase and phase
rate purely from heel-strike timing. At every heel strike the two stride
SSRs are compared; when the backup explains the measurements clearly better
than the main filter, the main filter is overwritten with the backup state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimator import (
    NoiseConfig,
    FilterState,
    PhaseEKF,
    _gain,
    het_noise,
    inverse_stride_transform,
    predict_measurement,
    stride_transform,
)
from .gait_model import GaitState, ParameterMatrix

BACKUP_BETA = 0.5
HS_VELOCITY_THRESHOLD = 0.0  # deg/s
HS_HEIGHT_THRESHOLD = 0.02  # m
HS_REFRACTORY = 0.3  # s

LAST_PHASE_BELOW_ONE = float(np.nextafter(1.0, 0.0))

SOURCE_GROUND_TRUTH = "ground_truth"
SOURCE_DETECTED = "detected"


# ====================================================================
# HEEL-STRIKE DETECTION
# ====================================================================


@dataclass
class HeelStrikeLog:
    """Heel-strike times in seconds, strictly increasing"""

    timestamps: list = field(default_factory=list)
    source: str = SOURCE_GROUND_TRUTH

    def __post_init__(self):
        self.timestamps = [float(t) for t in self.timestamps]
        if any(b <= a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError("Heel-strike timestamps must be strictly increasing")

    def __len__(self):
        return len(self.timestamps)

    def append(self, t: float):
        if self.timestamps and t <= self.timestamps[-1]:
            raise ValueError("Heel-strike timestamps must be strictly increasing")
        self.timestamps.append(float(t))

    def periods(self) -> np.ndarray:
        return np.diff(self.timestamps)


@dataclass(frozen=True)
class HeelStrikeConfig:
    velocity_threshold: float = HS_VELOCITY_THRESHOLD
    height_threshold: float = HS_HEIGHT_THRESHOLD
    refractory: float = HS_REFRACTORY


class HeelStrikeDetector:
    """
    Streaming threshold detector.

    Fires when the foot angular velocity crosses the threshold downward while
    the heel is below the height threshold, at most once per refractory period.
    The event time is interpolated between the two samples around the crossing.
    """

    def __init__(self, config: HeelStrikeConfig | None = None):
        self.config = config or HeelStrikeConfig()
        self.log = HeelStrikeLog(source=SOURCE_DETECTED)
        self._previous = None

    def step(self, t: float, theta_f_dot: float, p_u: float) -> float | None:
        """Feed one sample; returns the event time when a heel strike is detected"""
        previous, self._previous = self._previous, (t, theta_f_dot)
        if previous is None:
            return None
        t_prev, velocity_prev = previous
        threshold = self.config.velocity_threshold
        if not (velocity_prev > threshold >= theta_f_dot):
            return None
        if p_u >= self.config.height_threshold:
            return None
        fraction = (velocity_prev - threshold) / (velocity_prev - theta_f_dot)
        event = t_prev + fraction * (t - t_prev)
        if self.log.timestamps and event - self.log.timestamps[-1] <= self.config.refractory:
            return None
        self.log.append(event)
        return event


def detect_heelstrike(times, measurements, config: HeelStrikeConfig | None = None) -> HeelStrikeLog:
    """Run the detector over a whole recording; measurements are rows of six channels"""
    detector = HeelStrikeDetector(config)
    measurements = np.asarray(measurements, dtype=float)
    for t, row in zip(times, measurements):
        detector.step(float(t), row[1], row[5])
    return detector.log


# ====================================================================
# TIMING-BASED ESTIMATION
# ====================================================================


def tbe_phase(t: float, log: HeelStrikeLog) -> float:
    """
    Time since the last heel strike divided by the previous stride period.

    Only events at or before `t` are used. Clamped to [0, 1).
    """
    events = [e for e in log.timestamps if e <= t]
    if len(events) < 2:
        raise ValueError("Timing-based phase needs at least two heel strikes")
    period = events[-1] - events[-2]
    return float(np.clip((t - events[-1]) / period, 0.0, LAST_PHASE_BELOW_ONE))


class TimingEstimator:
    """Online TBE; holds phase at 0 until two heel strikes have been seen"""

    def __init__(self):
        self.last_event = None
        self.period = None
        self.phase = 0.0

    @property
    def phase_rate(self) -> float:
        return 1.0 / self.period if self.period else 0.0

    def step(self, t: float, hs_event: float | None = None) -> float:
        if hs_event is not None:
            if self.last_event is not None:
                self.period = hs_event - self.last_event
            self.last_event = hs_event
        if self.period is None:
            self.phase = 0.0
        else:
            self.phase = float(
                np.clip((t - self.last_event) / self.period, 0.0, LAST_PHASE_BELOW_ONE)
            )
        return self.phase


# ====================================================================
# BACKUP ESTIMATOR
# ====================================================================


@dataclass
class BackupState:
    """
    Backup estimate: timing phase plus filtered (l_p, r).

    `phase_rate` changes only at heel strikes. `rate_measured` turns true once
    a full stride period has been timed.
    """

    phase: float
    phase_rate: float
    l_p: float
    incline: float
    P: np.ndarray
    leg_length: float
    dt: float
    time: float = 0.0
    last_hs: float | None = None
    stride_ssr: float = 0.0
    rate_measured: bool = False

    @classmethod
    def initial(cls, state: GaitState, noise: NoiseConfig, dt: float) -> "BackupState":
        return cls(
            phase=state.phase,
            phase_rate=state.phase_rate,
            l_p=inverse_stride_transform(state.stride_length, state.leg_length),
            incline=state.incline,
            P=noise.initial_covariance()[2:, 2:].copy(),
            leg_length=state.leg_length,
            dt=dt,
        )

    @property
    def x(self) -> np.ndarray:
        return np.array([self.phase, self.phase_rate, self.l_p, self.incline])

    @property
    def stride_length(self) -> float:
        return float(stride_transform(self.l_p, self.leg_length)[0])

    def gait_state(self) -> GaitState:
        return GaitState(
            self.phase, self.phase_rate, self.stride_length, self.incline, self.leg_length
        )


def backup_step(
    bs: BackupState,
    z,
    params: ParameterMatrix,
    noise: NoiseConfig,
    hs_event: float | None = None,
    t: float | None = None,
) -> BackupState:
    """
    Advance the backup by one sample taken at time `t` (default: one step
    after the previous sample).

    `hs_event` is the time of a heel strike detected at this sample. On an
    event the phase restarts from the heel strike, the rate becomes the
    inverse of the elapsed stride period and the stride SSR is cleared.
    """
    values = z.as_array() if hasattr(z, "as_array") else np.asarray(z, dtype=float)
    time = bs.time + bs.dt if t is None else t
    phase_rate = bs.phase_rate
    last_hs = bs.last_hs
    stride_ssr = bs.stride_ssr
    rate_measured = bs.rate_measured

    if hs_event is not None:
        if last_hs is not None and hs_event > last_hs:
            phase_rate = 1.0 / (hs_event - last_hs)
            rate_measured = True
        last_hs = hs_event
        stride_ssr = 0.0

    if last_hs is None:
        phase = (bs.phase + phase_rate * bs.dt) % 1.0
    else:
        phase = ((time - last_hs) * phase_rate) % 1.0

    # Reduced EKF over (l_p, r)
    P = bs.P + noise.process_noise(bs.dt)[2:, 2:]
    x = np.array([phase, phase_rate, bs.l_p, bs.incline])
    h, H = predict_measurement(params, x, bs.leg_length)
    H_task = H[:, 2:]
    residual = values - h
    K = _gain(P, H_task, het_noise(noise, phase))
    l_p, incline = x[2:] + K @ residual
    P = P - K @ H_task @ P

    return BackupState(
        phase=phase,
        phase_rate=phase_rate,
        l_p=float(l_p),
        incline=float(incline),
        P=0.5 * (P + P.T),
        leg_length=bs.leg_length,
        dt=bs.dt,
        time=time,
        last_hs=last_hs,
        stride_ssr=stride_ssr + float(residual @ residual),
        rate_measured=rate_measured,
    )


class BackupEstimator:
    """Stateful wrapper stepping a BackupState alongside the main filter"""

    def __init__(self, params: ParameterMatrix, noise: NoiseConfig, initial: GaitState, dt: float):
        self.params = params
        self.noise = noise
        self.state = BackupState.initial(initial, noise, dt)
        self.completed_ssr = None
        self.completed_rate_measured = False

    def step(self, z, hs_event: float | None = None, t: float | None = None) -> BackupState:
        """
        On a heel strike, the SSR of the stride that just ended is kept in
        `completed_ssr` before the accumulator is cleared.
        """
        if hs_event is not None:
            self.completed_ssr = self.state.stride_ssr
            self.completed_rate_measured = self.state.rate_measured
        self.state = backup_step(self.state, z, self.params, self.noise, hs_event, t)
        return self.state


# ====================================================================
# SSR ARBITRATION
# ====================================================================


@dataclass(frozen=True)
class ResetEvent:
    time: float
    stride_index: int
    ekf_ssr: float
    backup_ssr: float


def should_reset(ekf_ssr: float, backup_ssr: float, beta: float = BACKUP_BETA) -> bool:
    return backup_ssr < beta * ekf_ssr


def ssr_compare_and_reset(
    ekf_ssr: float,
    backup_ssr: float,
    fs: FilterState,
    bs: BackupState,
    beta: float = BACKUP_BETA,
    noise: NoiseConfig | None = None,
) -> tuple[FilterState, bool]:
    """
    Overwrite the EKF with the backup state when the backup SSR is below
    beta times the EKF SSR. The covariance returns to its initial value.
    """
    if not should_reset(ekf_ssr, backup_ssr, beta):
        return fs, False
    P = noise.initial_covariance() if noise is not None else np.eye(4) * 1e-3
    x = np.array([0.0, bs.phase_rate, bs.l_p, bs.incline])
    return FilterState(x, P, fs.leg_length, fs.dt), True


def reset_filter(ekf: PhaseEKF, bs: BackupState):
    """Apply a reset decision to a streaming filter"""
    ekf.reset(x=[0.0, bs.phase_rate, bs.l_p, bs.incline])
