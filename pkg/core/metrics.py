"""
Metrics - stride-wise RMSE and paired comparisons between estimators
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from scipy import stats

METRIC_FIELDS = (
    "phase_rmse_pct",
    "phase_rate_rmse",
    "stride_length_rmse",
    "incline_rmse",
    "torque_rmse",
)


class MetricsError(Exception):
    """Raised when estimates cannot be scored against a stream"""

    pass


@dataclass(frozen=True)
class StrideMetrics:
    """
    RMSE of one estimator over one stride.

    Phase RMSE is in percent of the gait cycle; metrics the estimator does
    not produce are None.
    """

    estimator: str
    stride_index: int
    samples: int
    phase_rmse_pct: float
    phase_rate_rmse: float | None = None
    stride_length_rmse: float | None = None
    incline_rmse: float | None = None
    torque_rmse: float | None = None

    def as_row(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    dof: int
    degenerate: str | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def phase_error(estimate, truth):
    """Signed wrapped phase error in [-0.5, 0.5)"""
    return np.mod(np.asarray(estimate) - np.asarray(truth) + 0.5, 1.0) - 0.5


def _rmse(error) -> float | None:
    error = np.asarray(error, dtype=float)
    if np.all(np.isnan(error)):
        return None
    return float(np.sqrt(np.mean(np.square(error))))


def stride_boundaries(hs: np.ndarray) -> list:
    """(start, stop) sample ranges of each stride delimited by heel-strike flags"""
    starts = np.flatnonzero(hs)
    stops = np.append(starts[1:], len(hs))
    return list(zip(starts.tolist(), stops.tolist()))


def stride_metrics(
    stream,
    estimates,
    torque=None,
    torque_truth=None,
    estimator: str = "ekf",
    start_stride: int = 0,
) -> list:
    """
    Per-stride RMSE of `estimates` against the stream's ground truth.

    `estimates` has one row per sample with columns (phase, phase_rate,
    stride_length, incline); NaN columns mark quantities the estimator does
    not produce. Samples before the first heel strike are ignored.
    """
    estimates = np.asarray(estimates, dtype=float)
    if estimates.ndim != 2 or estimates.shape[1] != 4:
        raise MetricsError(f"Estimates must have shape (n, 4), got {estimates.shape}")
    if len(estimates) != len(stream.truth):
        raise MetricsError(
            f"Estimates have {len(estimates)} samples, stream has {len(stream.truth)}"
        )
    if (torque is None) != (torque_truth is None):
        raise MetricsError("Torque estimates and torque truth must be given together")
    if torque is not None and not (len(torque) == len(torque_truth) == len(estimates)):
        raise MetricsError("Torque series must align with the stream")

    truth = stream.truth
    results = []
    for index, (start, stop) in enumerate(stride_boundaries(stream.hs)):
        if index < start_stride:
            continue
        window = slice(start, stop)
        phase = phase_error(estimates[window, 0], truth[window, 0])
        results.append(
            StrideMetrics(
                estimator=estimator,
                stride_index=index,
                samples=stop - start,
                phase_rmse_pct=100.0 * _rmse(phase),
                phase_rate_rmse=_rmse(estimates[window, 1] - truth[window, 1]),
                stride_length_rmse=_rmse(estimates[window, 2] - truth[window, 2]),
                incline_rmse=_rmse(estimates[window, 3] - truth[window, 3]),
                torque_rmse=(
                    _rmse(np.asarray(torque[window]) - np.asarray(torque_truth[window]))
                    if torque is not None
                    else None
                ),
            )
        )
    return results


def paired_ttest(a, b) -> TTestResult:
    """
    Two-tailed paired t-test.

    All-zero differences give t = 0, p = 1 ("zero"); a constant nonzero
    difference gives an infinite t with p = 0 ("infinite").
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricsError("Paired samples must be 1-D arrays of equal length")
    n = len(a)
    if n < 2:
        raise MetricsError("Paired t-test needs at least two pairs")
    differences = a - b
    dof = n - 1
    mean = differences.mean()
    spread = differences.std(ddof=1)
    # Rounding leaves a residual spread on constant float differences
    tolerance = 1e-12 * max(abs(mean), np.abs(differences).max())
    if spread <= tolerance:
        if abs(mean) <= tolerance:
            return TTestResult(0.0, 1.0, dof, "zero")
        return TTestResult(float(np.copysign(np.inf, mean)), 0.0, dof, "infinite")
    t = mean / (spread / np.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), dof)
    return TTestResult(float(t), float(p), dof)


# ====================================================================
# AGGREGATION
# ====================================================================


def metrics_frame(metrics, **labels) -> pd.DataFrame:
    """Per-stride metrics as a DataFrame, with constant label columns prepended"""
    frame = pd.DataFrame([m.as_row() for m in metrics])
    for position, (name, value) in enumerate(labels.items()):
        frame.insert(position, name, value)
    return frame


def summarize_frame(frame: pd.DataFrame, group: str = "estimator") -> dict:
    """Mean and sample standard deviation of every metric per group"""
    summary = {}
    for name, rows in frame.groupby(group, sort=True):
        entry = {"strides": int(len(rows))}
        for metric in METRIC_FIELDS:
            if metric not in rows:
                continue
            values = pd.to_numeric(rows[metric], errors="coerce").dropna()
            if values.empty:
                continue
            entry[metric] = {
                "mean": float(values.mean()),
                "std": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
            }
        summary[str(name)] = entry
    return summary


def paired_comparison(frame: pd.DataFrame, first: str, second: str, metric: str = "phase_rmse_pct"):
    """Paired t-test of one metric between two estimators over matching strides"""
    keys = [column for column in ("subject_id", "stride_index") if column in frame]
    left = frame[frame["estimator"] == first].set_index(keys)[metric]
    right = frame[frame["estimator"] == second].set_index(keys)[metric]
    joined = pd.concat([left, right], axis=1, join="inner").dropna()
    if len(joined) < 2:
        return None
    return paired_ttest(joined.iloc[:, 0].to_numpy(float), joined.iloc[:, 1].to_numpy(float))
