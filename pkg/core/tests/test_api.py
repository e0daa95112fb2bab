import pytest
from django.contrib.auth import get_user_model
from rest_framework.test import APIClient

from core.models import ExperimentRun, RunLog


@pytest.fixture
def admin_client(db):
    user = get_user_model().objects.create_superuser("admin", "admin@example.com", "pw")
    client = APIClient()
    client.force_authenticate(user)
    return client


@pytest.fixture
def runs(db):
    done = ExperimentRun.objects.create(
        mode="crossval", status="complete", seed=9, report={"folds": ["S01", "S02", "S03"]}
    )
    RunLog.objects.create(run=done, action="reset", message="Backup reset at stride 4")
    pending = ExperimentRun.objects.create(mode="fit")
    return done, pending


def test_api_requires_admin(runs):
    assert APIClient().get("/api/runs/").status_code in (401, 403)


def test_runs_filter_by_mode(admin_client, runs):
    response = admin_client.get("/api/runs/", {"mode": "crossval"})
    assert response.status_code == 200
    assert [run["mode"] for run in response.json()] == ["crossval"]
    assert response.json()[0]["reset_count"] == 1


def test_report_only_for_complete_runs(admin_client, runs):
    done, pending = runs
    assert admin_client.get(f"/api/runs/{done.pk}/report/").json() == {"folds": ["S01", "S02", "S03"]}
    assert admin_client.get(f"/api/runs/{pending.pk}/report/").status_code == 404


def test_run_logs_and_stats(admin_client, runs):
    done, _ = runs
    logs = admin_client.get(f"/api/runs/{done.pk}/logs/").json()
    assert logs[0]["action"] == "reset"

    stats = admin_client.get("/api/stats/").json()
    assert stats["total_runs"] == 2
    assert stats["runs_by_mode"]["fit"] == 1
    assert stats["backup_resets"] == 1
