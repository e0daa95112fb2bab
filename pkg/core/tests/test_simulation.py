import numpy as np
import pandas as pd
import pytest

from core.estimator import NoiseConfig
from core.services.simulation import FoldTask, RunOptions, initial_state_for, run_fold, run_stream
from core.simdata import (
    DEVICE_NOISE,
    ScenarioProfile,
    generate_stride_dataset,
    generate_synthetic_stream,
    reference_torque_surface,
)

from .conftest import ORDER


@pytest.fixture(scope="module")
def torque_surface():
    return reference_torque_surface(ORDER)


def test_run_stream_scores_every_estimator(ref_params, noise, clean_stream, torque_surface):
    result = run_stream(
        clean_stream,
        ref_params,
        noise,
        torque_surface,
        RunOptions(record_samples=True, measure_latency=True),
    )
    assert set(result.strides["estimator"]) == {"ekf", "tbe", "backup"}
    assert (result.strides["subject_id"] == clean_stream.subject_id).all()
    assert result.strides["stride_index"].min() == 2
    assert len(result.heel_strikes) == clean_stream.stride_count

    ekf = result.strides[result.strides["estimator"] == "ekf"]
    assert ekf["phase_rmse_pct"].mean() < 2.0
    assert ekf["torque_rmse"].notna().all()

    tbe = result.strides[result.strides["estimator"] == "tbe"]
    assert tbe["stride_length_rmse"].isna().all()
    assert tbe["phase_rate_rmse"].notna().all()


def test_run_stream_records_samples_and_latency(ref_params, noise, clean_stream, torque_surface):
    result = run_stream(
        clean_stream, ref_params, noise, torque_surface,
        RunOptions(record_samples=True, measure_latency=True),
    )
    assert len(result.samples) == len(clean_stream)
    assert (result.samples["torque_command_Nm"] >= 0.0).all()
    assert result.samples["hs_flag"].sum() == clean_stream.stride_count
    assert result.latencies.shape == (len(clean_stream),)
    assert np.all(result.latencies >= 0.0)


def test_run_stream_without_extras(ref_params, noise, clean_stream):
    result = run_stream(clean_stream, ref_params, noise)
    assert result.samples is None
    assert result.latencies is None
    assert "torque_rmse" not in result.strides or result.strides["torque_rmse"].isna().all()


def test_detected_heel_strikes_feed_timing_estimators(ref_params, noise, noisy_stream):
    result = run_stream(noisy_stream, ref_params, noise, options=RunOptions(hs_mode="detected"))
    assert len(result.heel_strikes) >= noisy_stream.stride_count - 2
    assert np.all(np.diff(result.heel_strikes) > 0.3)


def test_unknown_heel_strike_mode(ref_params, noise, clean_stream):
    with pytest.raises(ValueError):
        run_stream(clean_stream, ref_params, noise, options=RunOptions(hs_mode="video"))


def test_initial_state_is_population_average(clean_stream):
    state = initial_state_for(clean_stream)
    assert state.phase == 0.0
    assert state.stride_length == pytest.approx(1.2 * clean_stream.leg_length)


def test_run_fold_scores_no_task_variant(small_dataset):
    noise = NoiseConfig.default()
    task = FoldTask(
        dataset=small_dataset,
        held_out="S02",
        order=ORDER,
        sigma_q=noise.sigma_q,
        sigma_sensor=noise.sigma_sensor,
        stream_noise=DEVICE_NOISE,
        seed=4,
        frozen_task=True,
    )
    fold = run_fold(task)
    assert fold.held_out == "S02"
    assert set(fold.strides["estimator"]) == {"ekf", "tbe", "backup", "no_task"}
    assert (fold.strides["subject_id"] == "S02").all()
    assert fold.constraint_violation <= 1e-6
    assert all(reset["subject_id"] == "S02" for reset in fold.resets)


def test_ramp_incline_tracked_within_two_and_a_half_degrees(ref_params, noise):
    stream = generate_synthetic_stream(ScenarioProfile.ramp(seed=6), ref_params)
    result = run_stream(stream, ref_params, noise, options=RunOptions(record_samples=True))
    samples = result.samples[result.samples["time_s"] >= 3.0]
    error = samples["ekf_incline_deg"] - samples["true_incline_deg"]
    assert np.sqrt(np.mean(error**2)) < 2.5
    assert samples["ekf_incline_deg"].iloc[-1] == pytest.approx(10.0, abs=1.0)


def _fold_means(dataset, frozen_task=False):
    noise = NoiseConfig.default()
    folds = [
        run_fold(
            FoldTask(
                dataset=dataset,
                held_out=subject_id,
                order=ORDER,
                sigma_q=noise.sigma_q,
                sigma_sensor=noise.sigma_sensor,
                stream_noise=DEVICE_NOISE,
                seed=index,
                frozen_task=frozen_task,
            )
        )
        for index, subject_id in enumerate(dataset.subject_ids)
    ]
    strides = pd.concat([fold.strides for fold in folds], ignore_index=True)
    return strides.groupby("estimator")["phase_rmse_pct"].mean()


def test_leave_one_out_ekf_beats_timing_estimator(ref_params):
    conditions = ((0.8, 0.0), (1.2, 0.0), (1.0, 0.0), (0.8, 2.5), (1.2, 2.5))
    dataset = generate_stride_dataset(3, ref_params, seed=17, strides_per_condition=3, conditions=conditions)
    means = _fold_means(dataset)
    assert means["ekf"] < means["tbe"]


def test_no_task_filter_loses_to_full_filter_when_incline_varies(ref_params):
    conditions = tuple((1.0, incline) for incline in (-10.0, -5.0, 0.0, 5.0, 10.0))
    dataset = generate_stride_dataset(3, ref_params, seed=23, strides_per_condition=3, conditions=conditions)
    means = _fold_means(dataset, frozen_task=True)
    assert means["no_task"] >= means["ekf"]
