"""
API Views for Gait Lab

Read-only, admin-only endpoints (runs are created from the command line):
- GET /api/runs/ - List experiment runs
- GET /api/runs/<id>/ - Run details
- GET /api/runs/<id>/logs/ - Audit log of a run
- GET /api/runs/<id>/report/ - Stored report of a run
- GET /api/artifacts/ - Fitted model files
- GET /api/stats/ - Overview counts
"""

from rest_framework import status, viewsets
from rest_framework.decorators import action, api_view, permission_classes
from rest_framework.permissions import IsAdminUser
from rest_framework.response import Response

from .models import ExperimentRun, ModelArtifact, RunLog
from .serializers import ExperimentRunSerializer, ModelArtifactSerializer, RunLogSerializer


class ExperimentRunViewSet(viewsets.ReadOnlyModelViewSet):
    """
    ViewSet for experiment runs.
    Admin only.
    """

    queryset = ExperimentRun.objects.prefetch_related("artifacts")
    serializer_class = ExperimentRunSerializer
    permission_classes = [IsAdminUser]

    def get_queryset(self):
        queryset = super().get_queryset()
        mode = self.request.query_params.get("mode")
        if mode:
            queryset = queryset.filter(mode=mode)
        return queryset

    @action(detail=True, methods=["get"])
    def logs(self, request, pk=None):
        """Get the audit log of a run"""
        run = self.get_object()
        logs = run.logs.all()[:200]
        serializer = RunLogSerializer(logs, many=True)
        return Response(serializer.data)

    @action(detail=True, methods=["get"])
    def report(self, request, pk=None):
        """Get the report stored with a completed run"""
        run = self.get_object()
        if run.status != "complete":
            return Response(
                {"error": f"Run has no report yet (status: {run.status})"},
                status=status.HTTP_404_NOT_FOUND,
            )
        return Response(run.report)


class ModelArtifactViewSet(viewsets.ReadOnlyModelViewSet):
    queryset = ModelArtifact.objects.select_related("run")
    serializer_class = ModelArtifactSerializer
    permission_classes = [IsAdminUser]


@api_view(["GET"])
@permission_classes([IsAdminUser])
def lab_stats(request):
    """
    Overview counts for the admin dashboard.

    GET /api/stats/
    """
    return Response(
        {
            "total_runs": ExperimentRun.objects.count(),
            "complete_runs": ExperimentRun.objects.filter(status="complete").count(),
            "error_runs": ExperimentRun.objects.filter(status="error").count(),
            "runs_by_mode": {
                mode: ExperimentRun.objects.filter(mode=mode).count()
                for mode, _ in ExperimentRun.MODE_CHOICES
            },
            "artifacts": ModelArtifact.objects.count(),
            "backup_resets": RunLog.objects.filter(action="reset").count(),
        }
    )
