import numpy as np
import pandas as pd
import pytest
from scipy import stats

from core.metrics import (
    MetricsError,
    metrics_frame,
    paired_comparison,
    paired_ttest,
    phase_error,
    stride_boundaries,
    stride_metrics,
    summarize_frame,
)


def test_phase_error_wraps_across_heel_strike():
    assert phase_error(0.99, 0.01) == pytest.approx(-0.02)
    assert phase_error(0.01, 0.99) == pytest.approx(0.02)
    assert phase_error(0.3, 0.3) == 0.0
    assert phase_error(0.8, 0.3) == pytest.approx(-0.5)


def test_stride_boundaries():
    hs = np.array([True, False, False, True, False, True])
    assert stride_boundaries(hs) == [(0, 3), (3, 5), (5, 6)]


def test_perfect_estimates_score_zero(clean_stream):
    metrics = stride_metrics(clean_stream, clean_stream.truth)
    assert len(metrics) == clean_stream.stride_count
    assert all(m.phase_rmse_pct == 0.0 for m in metrics)
    assert all(m.incline_rmse == 0.0 for m in metrics)
    assert metrics[0].torque_rmse is None


def test_constant_phase_offset_gives_percent_rmse(clean_stream):
    estimates = clean_stream.truth.copy()
    estimates[:, 0] = (estimates[:, 0] + 0.02) % 1.0
    metrics = stride_metrics(clean_stream, estimates, start_stride=2)
    assert metrics[0].stride_index == 2
    assert all(m.phase_rmse_pct == pytest.approx(2.0) for m in metrics)


def test_missing_quantities_are_none(clean_stream):
    estimates = np.full_like(clean_stream.truth, np.nan)
    estimates[:, 0] = clean_stream.truth[:, 0]
    estimates[:, 1] = clean_stream.truth[:, 1] + 0.1
    metrics = stride_metrics(clean_stream, estimates, estimator="tbe")
    assert metrics[0].estimator == "tbe"
    assert metrics[0].phase_rate_rmse == pytest.approx(0.1)
    assert metrics[0].stride_length_rmse is None
    assert metrics[0].incline_rmse is None


def test_torque_rmse(clean_stream):
    truth = np.ones(len(clean_stream))
    metrics = stride_metrics(clean_stream, clean_stream.truth, torque=truth * 1.5, torque_truth=truth)
    assert metrics[1].torque_rmse == pytest.approx(0.5)


def test_misaligned_estimates_are_rejected(clean_stream):
    with pytest.raises(MetricsError):
        stride_metrics(clean_stream, clean_stream.truth[:-1])
    with pytest.raises(MetricsError):
        stride_metrics(clean_stream, clean_stream.truth[:, :3])
    with pytest.raises(MetricsError):
        stride_metrics(clean_stream, clean_stream.truth, torque=np.zeros(len(clean_stream)))


def test_paired_ttest_matches_scipy(rng):
    a = rng.normal(2.0, 1.0, 30)
    b = a + rng.normal(0.3, 0.5, 30)
    result = paired_ttest(a, b)
    reference = stats.ttest_rel(a, b)
    assert result.t == pytest.approx(reference.statistic)
    assert result.p == pytest.approx(reference.pvalue)
    assert result.dof == 29
    assert result.degenerate is None


def test_paired_ttest_degenerate_differences():
    zero = paired_ttest([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (zero.t, zero.p, zero.degenerate) == (0.0, 1.0, "zero")

    shifted = paired_ttest([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
    assert shifted.t == -np.inf
    assert shifted.p == 0.0
    assert shifted.degenerate == "infinite"

    a = np.array([0.1, 0.7, 1.9, 2.3, 5.17])
    floating = paired_ttest(a, a + 0.3)
    assert floating.degenerate == "infinite"
    assert floating.t == -np.inf
    assert floating.p == 0.0


def test_paired_ttest_input_checks():
    with pytest.raises(MetricsError):
        paired_ttest([1.0], [2.0])
    with pytest.raises(MetricsError):
        paired_ttest([1.0, 2.0], [1.0, 2.0, 3.0])


def _frame():
    rows = []
    for stride in range(4):
        rows.append({"subject_id": "S01", "estimator": "ekf", "stride_index": stride,
                     "phase_rmse_pct": 1.0 + stride, "incline_rmse": 0.5})
        rows.append({"subject_id": "S01", "estimator": "tbe", "stride_index": stride,
                     "phase_rmse_pct": 3.0 + stride * 1.5, "incline_rmse": None})
    return pd.DataFrame(rows)


def test_summarize_frame_skips_missing_metrics():
    summary = summarize_frame(_frame())
    assert summary["ekf"]["strides"] == 4
    assert summary["ekf"]["phase_rmse_pct"]["mean"] == pytest.approx(2.5)
    assert summary["ekf"]["incline_rmse"] == {"mean": 0.5, "std": 0.0}
    assert "incline_rmse" not in summary["tbe"]


def test_paired_comparison_joins_matching_strides():
    frame = _frame()
    result = paired_comparison(frame, "ekf", "tbe")
    expected = stats.ttest_rel(
        frame[frame.estimator == "ekf"].phase_rmse_pct, frame[frame.estimator == "tbe"].phase_rmse_pct
    )
    assert result.t == pytest.approx(expected.statistic)
    assert paired_comparison(frame.iloc[:2], "ekf", "tbe") is None


def test_metrics_frame_prepends_labels(clean_stream):
    frame = metrics_frame(stride_metrics(clean_stream, clean_stream.truth), subject_id="S09", fold=2)
    assert list(frame.columns[:3]) == ["subject_id", "fold", "estimator"]
    assert (frame["subject_id"] == "S09").all()
