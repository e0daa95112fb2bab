import json
from unittest import mock

import pandas as pd
import pytest

from core.gait_model import ModelFitError
from core.models import ExperimentRun, ModelArtifact, RunLog
from core.services import experiment_service
from core.services.experiment_service import (
    ConfigError,
    DriverResult,
    ExperimentError,
    ExperimentManager,
    build_config,
    run_ablation,
    run_crossval,
    run_fit,
    run_gen,
    run_replay,
    run_report,
)
from core.estimator import SIGMA_Q_OUTDOOR
from core.simdata import CONDITIONS

from .conftest import ORDER


def _flags(tmp_path, **extra):
    flags = {"order": ORDER, "output_dir": str(tmp_path)}
    flags.update(extra)
    return flags


def test_build_config_defaults_flags_and_file(tmp_path):
    config_file = tmp_path / "config.json"
    config_file.write_text(json.dumps({"order": 5, "beta": 0.4}))
    config = build_config("crossval", _flags(tmp_path, seed=3, beta=0.9), config_file)
    assert config.order == 5
    assert config.beta == 0.4
    assert config.seed == 3
    assert config.hs_mode == "oracle"
    assert isinstance(config.stream_noise, tuple)
    assert build_config("replay", _flags(tmp_path)).hs_mode == "detected"


def test_none_flags_do_not_override_defaults(tmp_path):
    config = build_config("crossval", _flags(tmp_path, subjects=None, beta=None))
    assert config.subjects == 10
    assert config.beta == 0.5


@pytest.mark.parametrize(
    "mode,flags,contents,message",
    [
        ("gen", {}, None, "seed"),
        ("crossval", {"beta": 1.5}, None, "beta"),
        ("crossval", {"dataset": "/nonexistent/strides.csv"}, None, "not found"),
        ("crossval", {}, {"colour": "red"}, "Unknown config keys"),
        ("crossval", {}, {"mode": "fit"}, "mode"),
        ("report", {}, None, "strides_csv"),
        ("crossval", {"scenario": "ramp"}, None, "scenario"),
        ("ablation", {"scenario": "incline_varying"}, None, "scenario"),
    ],
)
def test_invalid_configs(tmp_path, mode, flags, contents, message):
    config_file = None
    if contents is not None:
        config_file = tmp_path / "config.json"
        config_file.write_text(json.dumps(contents))
    with pytest.raises(ConfigError, match=message):
        build_config(mode, _flags(tmp_path, **flags), config_file)


def test_config_file_must_be_a_json_object(tmp_path):
    config_file = tmp_path / "config.json"
    config_file.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        build_config("crossval", _flags(tmp_path), config_file)
    with pytest.raises(ConfigError, match="not found"):
        build_config("crossval", _flags(tmp_path), tmp_path / "absent.json")


def test_config_hash_ignores_output_dir_and_workers(tmp_path):
    first = build_config("crossval", _flags(tmp_path / "a", seed=1, workers=1))
    second = build_config("crossval", _flags(tmp_path / "b", seed=1, workers=4))
    third = build_config("crossval", _flags(tmp_path / "a", seed=2))
    assert first.config_hash == second.config_hash
    assert first.config_hash != third.config_hash
    assert "output_dir" not in first.hashed_dict()


def test_explicit_sigma_q_wins_over_preset(tmp_path):
    preset = build_config("crossval", _flags(tmp_path, noise_preset="outdoor"))
    assert preset.noise().sigma_q == SIGMA_Q_OUTDOOR
    explicit = build_config(
        "crossval", _flags(tmp_path, noise_preset="outdoor", sigma_q=[1e-3, 2e-3, 3e-3])
    )
    assert explicit.noise().sigma_q == pytest.approx((1e-3, 2e-3, 3e-3))


def test_gen_writes_dataset_and_stream(tmp_path):
    config = build_config("gen", _flags(tmp_path, seed=7, subjects=2, duration=5.0))
    result = run_gen(config)
    assert (tmp_path / "dataset.csv").exists()
    assert (tmp_path / "stream.csv").exists()
    assert result.report["strides"] == 2 * 3 * len(CONDITIONS)
    assert result.report["stream"]["samples"] == 501
    assert json.loads((tmp_path / "report.json").read_text())["seed"] == 7


def test_fit_from_generated_dataset(tmp_path):
    run_gen(build_config("gen", _flags(tmp_path / "gen", seed=7, subjects=2, duration=5.0)))
    config = build_config(
        "fit", _flags(tmp_path / "fit", dataset=str(tmp_path / "gen" / "dataset.csv"))
    )
    result = run_fit(config)
    assert [a["kind"] for a in result.artifacts] == ["gait", "torque"]
    assert (tmp_path / "fit" / "gait.npz").exists()
    assert result.report["constraint_violation"] <= 1e-6
    assert result.report["has_torque"]


def test_replay_keeps_latency_out_of_report(tmp_path):
    config = build_config("replay", _flags(tmp_path, seed=2, subjects=3, duration=8.0))
    result = run_replay(config)
    for name in ("samples.csv", "strides.csv", "latency.json", "report.json"):
        assert (tmp_path / name).exists()
    latency = json.loads((tmp_path / "latency.json").read_text())
    assert latency["steps"] == 801
    assert "p99_ms" not in (tmp_path / "report.json").read_text()
    assert set(result.report["summary"]) == {"backup", "ekf", "tbe"}
    assert all(reset["subject_id"] == "steady" for reset in result.resets)


def test_fit_needs_two_subjects(tmp_path):
    config = build_config("fit", _flags(tmp_path, seed=5, subjects=1))
    with pytest.raises(ExperimentError, match="at least 2 subjects"):
        run_fit(config)


def test_scenario_still_applies_to_replay(tmp_path):
    config = build_config("replay", _flags(tmp_path, scenario="ramp"))
    assert config.scenario == "ramp"


def test_replay_of_saved_models(tmp_path):
    run_fit(build_config("fit", _flags(tmp_path / "fit", seed=5, subjects=2)))
    config = build_config(
        "replay",
        _flags(
            tmp_path / "replay",
            seed=5,
            duration=6.0,
            gait_model=str(tmp_path / "fit" / "gait.npz"),
            torque_model=str(tmp_path / "fit" / "torque.npz"),
        ),
    )
    result = run_replay(config)
    samples = pd.read_csv(tmp_path / "replay" / "samples.csv")
    assert "torque_command_Nm" in samples
    assert result.report["constraint_violation"] <= 1e-6


def test_replay_rejects_torque_file_as_gait_model(tmp_path):
    run_fit(build_config("fit", _flags(tmp_path / "fit", seed=5, subjects=2)))
    config = build_config(
        "replay", _flags(tmp_path / "replay", gait_model=str(tmp_path / "fit" / "torque.npz"))
    )
    with pytest.raises(ExperimentError, match="not a gait model"):
        run_replay(config)


def test_crossval_report_is_reproducible(tmp_path):
    first = run_crossval(build_config("crossval", _flags(tmp_path / "a", seed=9, subjects=3)))
    run_crossval(build_config("crossval", _flags(tmp_path / "b", seed=9, subjects=3, workers=2)))

    assert first.report["folds"] == ["S01", "S02", "S03"]
    assert set(first.report["comparisons"]) == {"ekf_vs_tbe", "ekf_vs_backup"}
    assert first.report["max_constraint_violation"] <= 1e-6
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()

    strides = pd.read_csv(tmp_path / "a" / "strides.csv")
    assert set(strides["subject_id"]) == {"S01", "S02", "S03"}


def test_crossval_needs_three_subjects(tmp_path):
    config = build_config("ablation", _flags(tmp_path, seed=1, subjects=2))
    with pytest.raises(ExperimentError, match="at least 3 subjects"):
        run_ablation(config)


def test_crossval_needs_data_source(tmp_path):
    config = build_config("crossval", _flags(tmp_path))
    with pytest.raises(ExperimentError, match="no seed"):
        run_crossval(config)


def test_report_reaggregates_stride_table(tmp_path):
    rows = []
    for subject in ("S01", "S02", "S03"):
        for stride in range(3):
            rows.append({"subject_id": subject, "estimator": "ekf", "stride_index": stride,
                         "phase_rmse_pct": 1.0 + 0.1 * stride})
            rows.append({"subject_id": subject, "estimator": "tbe", "stride_index": stride,
                         "phase_rmse_pct": 4.0 - 0.2 * stride + 0.05 * len(rows)})
    path = tmp_path / "strides.csv"
    pd.DataFrame(rows).to_csv(path, index=False)

    config = build_config("report", _flags(tmp_path, seed=4, strides_csv=str(path)))
    result = run_report(config)
    assert result.report["strides"] == 18
    assert result.report["seed"] == 4
    assert result.report["config_hash"] == config.config_hash
    assert json.loads((tmp_path / "summary.json").read_text())["config_hash"] == config.config_hash
    assert result.report["comparisons"]["ekf_vs_tbe"]["per_subject"]["dof"] == 2
    assert (tmp_path / "summary.json").exists()


def test_report_rejects_table_without_metrics(tmp_path):
    path = tmp_path / "strides.csv"
    pd.DataFrame({"estimator": ["ekf", "tbe"]}).to_csv(path, index=False)
    with pytest.raises(ExperimentError, match="phase_rmse_pct"):
        run_report(build_config("report", _flags(tmp_path, strides_csv=str(path))))


@pytest.mark.django_db
def test_manager_records_successful_run(tmp_path):
    config = build_config("gen", _flags(tmp_path, seed=1))
    artifact = {
        "kind": "gait", "path": str(tmp_path / "gait.npz"), "phase_order": ORDER,
        "regressor_length": 28, "has_covariance_table": True, "sha256": "0" * 64,
    }
    fake = mock.Mock(
        return_value=DriverResult(
            {"value": float("nan"), "n": 3},
            artifacts=[artifact],
            resets=[{"subject_id": "S01", "stride_index": 4, "time": 3.2}],
            files=[tmp_path / "report.json"],
        )
    )
    with mock.patch.dict(experiment_service.DRIVERS, {"gen": fake}):
        run, result = ExperimentManager().execute(config)

    fake.assert_called_once_with(config)
    run.refresh_from_db()
    assert run.status == "complete"
    assert run.completed_at is not None
    assert run.report == {"value": None, "n": 3}
    assert run.config_hash == config.config_hash
    assert run.reset_count == 1
    assert ModelArtifact.objects.filter(run=run, kind="gait").count() == 1
    assert RunLog.objects.filter(run=run, action="gen").count() == 2


@pytest.mark.django_db
def test_manager_marks_failed_run(tmp_path):
    config = build_config("gen", _flags(tmp_path, seed=1))
    fake = mock.Mock(side_effect=ModelFitError("Deficient directions: r*l*1"))
    with mock.patch.dict(experiment_service.DRIVERS, {"gen": fake}):
        with pytest.raises(ModelFitError):
            ExperimentManager().execute(config)

    run = ExperimentRun.objects.get()
    assert run.status == "error"
    assert "Deficient directions" in run.status_message
    error_log = RunLog.objects.get(run=run, action="error")
    assert error_log.details["type"] == "ModelFitError"
