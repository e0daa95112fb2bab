from io import StringIO
from unittest import mock

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from core.gait_model import ModelFitError
from core.models import ExperimentRun
from core.services import experiment_service
from core.simdata import DatasetError


@pytest.mark.django_db
def test_gen_command_runs_and_records(tmp_path):
    out = StringIO()
    call_command(
        "gait", "gen", "--seed", "3", "--subjects", "1", "--order", "3",
        "--duration", "5", "--output-dir", str(tmp_path), stdout=out,
    )
    assert "complete" in out.getvalue()
    assert (tmp_path / "dataset.csv").exists()
    run = ExperimentRun.objects.get()
    assert run.status == "complete"
    assert run.seed == 3


@pytest.mark.django_db
def test_missing_seed_is_a_configuration_error(tmp_path):
    with pytest.raises(CommandError) as excinfo:
        call_command("gait", "gen", "--output-dir", str(tmp_path))
    assert excinfo.value.returncode == 2
    assert ExperimentRun.objects.count() == 0


@pytest.mark.django_db
def test_numerical_failure_exits_with_three(tmp_path):
    fake = mock.Mock(side_effect=ModelFitError("Deficient directions: r*l*1"))
    with mock.patch.dict(experiment_service.DRIVERS, {"fit": fake}):
        with pytest.raises(CommandError) as excinfo:
            call_command("gait", "fit", "--seed", "1", "--output-dir", str(tmp_path))
    assert excinfo.value.returncode == 3
    assert ExperimentRun.objects.get().status == "error"


@pytest.mark.django_db
def test_bad_input_file_exits_with_two(tmp_path):
    fake = mock.Mock(side_effect=DatasetError("Row 12: phase must increase"))
    with mock.patch.dict(experiment_service.DRIVERS, {"fit": fake}):
        with pytest.raises(CommandError, match="Row 12") as excinfo:
            call_command("gait", "fit", "--seed", "1", "--output-dir", str(tmp_path))
    assert excinfo.value.returncode == 2


@pytest.mark.django_db
def test_stream_noise_flag_parses_lists(tmp_path):
    with pytest.raises(CommandError):
        call_command("gait", "gen", "--seed", "1", "--stream-noise", "a,b", "--output-dir", str(tmp_path))
