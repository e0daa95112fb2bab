"""
URL routing for the core API
"""

from django.urls import path, include
from rest_framework.routers import DefaultRouter

from .views import ExperimentRunViewSet, ModelArtifactViewSet, lab_stats

# DRF Router for ViewSets
router = DefaultRouter()
router.register(r"runs", ExperimentRunViewSet, basename="run")
router.register(r"artifacts", ModelArtifactViewSet, basename="artifact")

urlpatterns = [
    path("stats/", lab_stats, name="lab-stats"),
    # ViewSet routes
    path("", include(router.urls)),
]
