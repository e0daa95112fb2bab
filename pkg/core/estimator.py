"""
Estimator - four-state extended Kalman filter over the gait state

State (p, p_dot, l_p, r): phase, phase rate, pseudo stride length and
incline. The pseudo stride length is unbounded; the arctan transform maps it
to a physical stride length in (0, 4L). Measurements are the six channels
(theta_f, theta_f_dot, theta_s, theta_s_dot, p_f, p_u).

Provides a functional API (predict / update on FilterState values) and the
PhaseEKF class, which keeps its own buffers and is stepped once per sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .gait_model import (
    P_F,
    P_U,
    THETA_F,
    THETA_S,
    GaitState,
    ParameterMatrix,
)

# Process noise standard deviations are per nominal 10 ms sample
SIGMA_Q_DEFAULT = (6e-4, 9e-4, 6e-3)
SIGMA_Q_OUTDOOR = (1e-3, 2e-3, 5e-2)
NOMINAL_SAMPLE_PERIOD = 0.01
SIGMA_SENSOR_DEFAULT = (1.0, 10.0, 7.0, 20.0, 0.01, 0.08)
P0_SCALE = 1e-3
# deg^2; spread of treadmill inclines around level ground
P0_INCLINE = 25.0
FROZEN_VARIANCE = 1e-12
MAX_CONDITION = 1e12

# Long-time-step guard
MAX_TIME_STEP = 0.06
DISTRUST_UPDATES = 70
DISTRUSTED_VARIANCE = 1.0

# Measurement rows fed by model outputs and by phase derivatives
POSITION_ROWS = np.array([0, 2, 4, 5])
POSITION_OUTPUTS = np.array([THETA_F, THETA_S, P_F, P_U])
VELOCITY_ROWS = np.array([1, 3])
VELOCITY_OUTPUTS = np.array([THETA_F, THETA_S])
HEEL_ROWS = np.array([4, 5])


class InnovationError(Exception):
    """Raised when the innovation covariance cannot be factorised safely"""

    pass


# ====================================================================
# CONFIGURATION AND STATE
# ====================================================================


@dataclass(frozen=True, eq=False)
class NoiseConfig:
    """
    Process and measurement noise.

    `sigma_q` holds the standard deviations for (p_dot, l_p, r) accumulated
    over one `sample_period`; phase itself carries no process noise.
    `covariance_table` is the (150, 6, 6) stack of residual covariances at
    uniformly spaced phase knots.
    """

    sigma_q: tuple = SIGMA_Q_DEFAULT
    sigma_sensor: tuple = SIGMA_SENSOR_DEFAULT
    covariance_table: np.ndarray | None = None
    initial_variances: tuple = (P0_SCALE, P0_SCALE, P0_SCALE, P0_INCLINE)
    sample_period: float = NOMINAL_SAMPLE_PERIOD

    def __post_init__(self):
        if len(self.sigma_q) != 3 or min(self.sigma_q) <= 0:
            raise ValueError("sigma_q needs three positive standard deviations")
        if len(self.sigma_sensor) != 6 or min(self.sigma_sensor) <= 0:
            raise ValueError("sigma_sensor needs six positive standard deviations")
        if len(self.initial_variances) != 4 or min(self.initial_variances) <= 0:
            raise ValueError("initial_variances needs four positive entries")
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")
        if self.covariance_table is not None:
            table = np.array(self.covariance_table, dtype=float)
            if table.ndim != 3 or table.shape[1:] != (6, 6) or len(table) < 2:
                raise ValueError(
                    f"Covariance table must have shape (K, 6, 6), got {table.shape}"
                )
            table.setflags(write=False)
            object.__setattr__(self, "covariance_table", table)
        object.__setattr__(
            self, "_sensor_variance", np.diag(np.square(self.sigma_sensor))
        )

    @classmethod
    def default(cls, covariance_table=None, **kwargs) -> "NoiseConfig":
        return cls(SIGMA_Q_DEFAULT, covariance_table=covariance_table, **kwargs)

    @classmethod
    def outdoor(cls, covariance_table=None, **kwargs) -> "NoiseConfig":
        """Faster filter response for uneven terrain"""
        return cls(SIGMA_Q_OUTDOOR, covariance_table=covariance_table, **kwargs)

    @classmethod
    def preset(cls, name: str, covariance_table=None, **kwargs) -> "NoiseConfig":
        presets = {"default": cls.default, "outdoor": cls.outdoor}
        if name not in presets:
            raise ValueError(f"Unknown noise preset '{name}'")
        return presets[name](covariance_table, **kwargs)

    def frozen_task(self, variance: float = FROZEN_VARIANCE) -> "NoiseConfig":
        """
        Copy with stride length and incline effectively pinned at their initial values.

        `variance` is both the initial variance and the process variance per
        second of l_p and r.
        """
        sigma = float(np.sqrt(variance * self.sample_period))
        return replace(
            self,
            sigma_q=(self.sigma_q[0], sigma, sigma),
            initial_variances=self.initial_variances[:2] + (variance, variance),
        )

    def process_noise(self, dt: float) -> np.ndarray:
        return np.diag([0.0, *np.square(self.sigma_q)]) * (dt / self.sample_period)

    def initial_covariance(self) -> np.ndarray:
        return np.diag(np.asarray(self.initial_variances, dtype=float))

    def with_table(self, covariance_table) -> "NoiseConfig":
        return replace(self, covariance_table=covariance_table)


@dataclass
class FilterState:
    """EKF estimate: x = (p, p_dot, l_p, r) with covariance P"""

    x: np.ndarray
    P: np.ndarray
    leg_length: float
    dt: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).copy()
        self.P = np.asarray(self.P, dtype=float).copy()

    @classmethod
    def initial(
        cls,
        state: GaitState,
        noise: NoiseConfig,
        leg_length: float,
        dt: float,
    ) -> "FilterState":
        x = np.array(
            [
                state.phase,
                state.phase_rate,
                inverse_stride_transform(state.stride_length, leg_length),
                state.incline,
            ]
        )
        return cls(x, noise.initial_covariance(), leg_length, dt)

    def gait_state(self) -> GaitState:
        """Public estimate with stride length in meters"""
        stride_length, _ = stride_transform(self.x[2], self.leg_length)
        return GaitState(
            self.x[0], self.x[1], stride_length, self.x[3], self.leg_length
        )


@dataclass
class MeasurementVector:
    """The six sensor channels; angles in degrees, positions in meters"""

    theta_f: float
    theta_f_dot: float
    theta_s: float
    theta_s_dot: float
    p_f: float
    p_u: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("Measurement channels must be finite")

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.theta_f,
                self.theta_f_dot,
                self.theta_s,
                self.theta_s_dot,
                self.p_f,
                self.p_u,
            ],
            dtype=float,
        )

    @classmethod
    def from_array(cls, values) -> "MeasurementVector":
        return cls(*(float(v) for v in values))


# ====================================================================
# MODEL PIECES
# ====================================================================


def stride_transform(l_p: float, leg_length: float) -> tuple[float, float]:
    """Map pseudo stride length to meters in (0, 4L); also returns dl/dl_p"""
    if leg_length <= 0:
        raise ValueError("Leg length must be positive")
    quarter_pi_lp = 0.25 * np.pi * l_p
    stride = leg_length * ((4.0 / np.pi) * np.arctan(quarter_pi_lp) + 2.0)
    slope = leg_length / (1.0 + quarter_pi_lp**2)
    return stride, slope


def inverse_stride_transform(stride_length: float, leg_length: float) -> float:
    ratio = stride_length / leg_length
    if not 0.0 < ratio < 4.0:
        raise ValueError(
            f"Stride length {stride_length:g} m outside (0, {4 * leg_length:g}) m"
        )
    return float((4.0 / np.pi) * np.tan(0.25 * np.pi * (ratio - 2.0)))


def predict_measurement(
    params: ParameterMatrix, x: np.ndarray, leg_length: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Measurement prediction h(x) and its 6x4 Jacobian from a single model jet.

    Velocity channels follow the chain rule: d(theta)/dt = d(theta)/dp * p_dot.
    """
    p, p_dot, l_p, r = x
    stride, dl_dlp = stride_transform(l_p, leg_length)
    T = params.jet(p, stride / leg_length, r)
    # d/dl_p of anything in terms of d/dl_norm
    to_lp = dl_dlp / leg_length

    h = np.empty(6)
    H = np.zeros((6, 4))

    h[POSITION_ROWS] = T[0, 0, 0, POSITION_OUTPUTS]
    H[POSITION_ROWS, 0] = T[0, 0, 1, POSITION_OUTPUTS]
    H[POSITION_ROWS, 2] = T[0, 1, 0, POSITION_OUTPUTS] * to_lp
    H[POSITION_ROWS, 3] = T[1, 0, 0, POSITION_OUTPUTS]

    d_dp = T[0, 0, 1, VELOCITY_OUTPUTS]
    h[VELOCITY_ROWS] = d_dp * p_dot
    H[VELOCITY_ROWS, 0] = T[0, 0, 2, VELOCITY_OUTPUTS] * p_dot
    H[VELOCITY_ROWS, 1] = d_dp
    H[VELOCITY_ROWS, 2] = T[0, 1, 1, VELOCITY_OUTPUTS] * p_dot * to_lp
    H[VELOCITY_ROWS, 3] = T[1, 0, 1, VELOCITY_OUTPUTS] * p_dot
    return h, H


def measurement_model(
    params: ParameterMatrix, x: np.ndarray, leg_length: float
) -> MeasurementVector:
    h, _ = predict_measurement(params, np.asarray(x, dtype=float), leg_length)
    return MeasurementVector.from_array(h)


def measurement_jacobian(
    params: ParameterMatrix, x: np.ndarray, leg_length: float
) -> np.ndarray:
    _, H = predict_measurement(params, np.asarray(x, dtype=float), leg_length)
    return H


def het_noise(noise: NoiseConfig, phase: float) -> np.ndarray:
    """
    Phase-dependent measurement covariance.

    Sensor variances plus the residual-covariance table interpolated linearly
    between knots, wrapping from the last knot back to the first.
    """
    if noise.covariance_table is None:
        return noise._sensor_variance.copy()
    table = noise.covariance_table
    knots = len(table)
    position = (phase % 1.0) * knots
    nearest = round(position)
    if abs(position - nearest) < 1e-9:
        return noise._sensor_variance + table[nearest % knots]
    lower = int(np.floor(position))
    weight = position - lower
    interpolated = (1.0 - weight) * table[lower % knots] + weight * table[
        (lower + 1) % knots
    ]
    return noise._sensor_variance + interpolated


def transition_matrix(dt: float) -> np.ndarray:
    F = np.eye(4)
    F[0, 1] = dt
    return F


# ====================================================================
# FILTER EQUATIONS
# ====================================================================


def predict(fs: FilterState, noise: NoiseConfig) -> FilterState:
    """Integrate phase at the current rate and inflate the covariance"""
    if fs.dt <= 0:
        raise ValueError("Time step must be positive")
    F = transition_matrix(fs.dt)
    x = F @ fs.x
    x[0] %= 1.0
    P = F @ fs.P @ F.T + noise.process_noise(fs.dt)
    return FilterState(x, 0.5 * (P + P.T), fs.leg_length, fs.dt)


def _gain(P: np.ndarray, H: np.ndarray, R: np.ndarray) -> np.ndarray:
    S = H @ P @ H.T + R
    if not np.all(np.isfinite(S)):
        raise InnovationError("Innovation covariance has non-finite entries")
    try:
        factor = cho_factor(S, lower=True, check_finite=False)
    except np.linalg.LinAlgError as e:
        raise InnovationError(f"Innovation covariance is not positive definite: {e}") from e
    diagonal = np.abs(np.diag(factor[0]))
    condition = (diagonal.max() / diagonal.min()) ** 2
    if condition > MAX_CONDITION:
        raise InnovationError(
            f"Innovation covariance condition number {condition:.3g} exceeds "
            f"{MAX_CONDITION:g}"
        )
    # K = P H' S^-1, computed as (S^-1 H P)'
    return cho_solve(factor, H @ P, check_finite=False).T


def update(
    fs: FilterState,
    z: MeasurementVector,
    params: ParameterMatrix,
    noise: NoiseConfig,
    measurement_noise: np.ndarray | None = None,
) -> tuple[FilterState, np.ndarray, float]:
    """
    Measurement correction.

    Returns the corrected state, the pre-update residual z - h(x) and its
    squared norm (the stride SSR increment).
    """
    h, H = predict_measurement(params, fs.x, fs.leg_length)
    residual = z.as_array() - h
    R = het_noise(noise, fs.x[0]) if measurement_noise is None else measurement_noise
    K = _gain(fs.P, H, R)
    x = fs.x + K @ residual
    x[0] %= 1.0
    P = fs.P - K @ H @ fs.P
    P = 0.5 * (P + P.T)
    return FilterState(x, P, fs.leg_length, fs.dt), residual, float(residual @ residual)


# ====================================================================
# STREAMING FILTER
# ====================================================================


@dataclass
class PhaseEKF:
    """
    Stateful EKF stepped once per sample.

    Keeps the running SSR of the current stride for the backup arbitration.
    With `max_time_step` set, a step longer than that re-initialises P and
    distrusts the heel-position channels for the next 70 updates.
    """

    params: ParameterMatrix
    noise: NoiseConfig
    leg_length: float
    initial_state: GaitState | None = None
    max_time_step: float | None = None
    stride_ssr: float = 0.0
    updates: int = 0
    _distrust: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.initial_state is None:
            self.initial_state = GaitState(0.0, 1.0, 1.2 * self.leg_length, 0.0, self.leg_length)
        self._F = np.eye(4)
        self.reset(self.initial_state)

    # ----------------------------------------------------------------
    # State access
    # ----------------------------------------------------------------

    @property
    def phase(self) -> float:
        return float(self.x[0])

    @property
    def phase_rate(self) -> float:
        return float(self.x[1])

    @property
    def stride_length(self) -> float:
        return float(stride_transform(self.x[2], self.leg_length)[0])

    @property
    def incline(self) -> float:
        return float(self.x[3])

    @property
    def state(self) -> GaitState:
        return GaitState(
            self.phase, self.phase_rate, self.stride_length, self.incline, self.leg_length
        )

    def reset(self, state: GaitState | None = None, x: np.ndarray | None = None):
        """Overwrite the estimate and restore the initial covariance"""
        if x is None:
            state = state or self.initial_state
            x = [
                state.phase,
                state.phase_rate,
                inverse_stride_transform(state.stride_length, self.leg_length),
                state.incline,
            ]
        self.x = np.array(x, dtype=float)
        self.x[0] %= 1.0
        self.P = self.noise.initial_covariance()

    # ----------------------------------------------------------------
    # Filter steps
    # ----------------------------------------------------------------

    def predict(self, dt: float):
        if dt <= 0:
            raise ValueError("Time step must be positive")
        if self.max_time_step is not None and dt > self.max_time_step:
            self.P = self.noise.initial_covariance()
            self._distrust = DISTRUST_UPDATES
        self._F[0, 1] = dt
        self.x[0] = (self.x[0] + dt * self.x[1]) % 1.0
        self.P = self._F @ self.P @ self._F.T + self.noise.process_noise(dt)

    def update(self, z) -> np.ndarray:
        if isinstance(z, MeasurementVector):
            values = z.as_array()
        else:
            values = np.asarray(z, dtype=float)
        h, H = predict_measurement(self.params, self.x, self.leg_length)
        R = het_noise(self.noise, self.x[0])
        if self._distrust > 0:
            R[HEEL_ROWS, HEEL_ROWS] = np.maximum(R[HEEL_ROWS, HEEL_ROWS], DISTRUSTED_VARIANCE)
            self._distrust -= 1
        residual = values - h
        K = _gain(self.P, H, R)
        self.x += K @ residual
        self.x[0] %= 1.0
        self.P -= K @ H @ self.P
        self.P = 0.5 * (self.P + self.P.T)
        self.stride_ssr += float(residual @ residual)
        self.updates += 1
        return residual

    def step(self, z, dt: float) -> np.ndarray:
        self.predict(dt)
        return self.update(z)

    def close_stride(self) -> float:
        """Return and clear the SSR accumulated since the last call"""
        ssr, self.stride_ssr = self.stride_ssr, 0.0
        return ssr
