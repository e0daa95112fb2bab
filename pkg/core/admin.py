"""
Admin interface for Gait Lab

Provides a dashboard to:
- Browse experiment runs with their config hash and report
- See the model files each run wrote
- Read the audit log, including backup resets
"""

from django.contrib import admin
from django.urls import reverse
from django.utils.html import format_html

from .models import ExperimentRun, ModelArtifact, RunLog

BADGE = (
    '<span style="background-color: {}; color: white; padding: 3px 8px; '
    'border-radius: 3px; font-size: 11px;">{}</span>'
)


class ModelArtifactInline(admin.TabularInline):
    model = ModelArtifact
    extra = 0
    readonly_fields = ["kind", "path", "phase_order", "regressor_length", "sha256"]
    fields = ["kind", "path", "phase_order", "regressor_length", "sha256"]
    can_delete = False

    def has_add_permission(self, request, obj=None):
        return False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = [
        "run_link",
        "mode",
        "status_badge",
        "seed",
        "short_hash",
        "reset_count",
        "created_at",
    ]
    list_filter = ["mode", "status", "created_at"]
    search_fields = ["config_hash", "output_dir", "status_message"]
    readonly_fields = [
        "mode",
        "seed",
        "config",
        "config_hash",
        "output_dir",
        "report",
        "created_at",
        "updated_at",
        "completed_at",
    ]
    inlines = [ModelArtifactInline]

    fieldsets = (
        (None, {"fields": ("mode", "seed", "output_dir")}),
        ("Status", {"fields": ("status", "status_message", "completed_at")}),
        ("Configuration", {"fields": ("config", "config_hash"), "classes": ("collapse",)}),
        ("Report", {"fields": ("report",), "classes": ("collapse",)}),
        (
            "Timestamps",
            {"fields": ("created_at", "updated_at"), "classes": ("collapse",)},
        ),
    )

    def run_link(self, obj):
        edit_url = reverse("admin:core_experimentrun_change", args=[obj.pk])
        return format_html('<a href="{}">#{}</a>', edit_url, obj.pk)

    run_link.short_description = "Run"

    def short_hash(self, obj):
        return obj.config_hash[:12]

    short_hash.short_description = "Config"

    def status_badge(self, obj):
        colors = {
            "pending": "blue",
            "running": "orange",
            "complete": "green",
            "error": "red",
        }
        return format_html(BADGE, colors.get(obj.status, "gray"), obj.status.upper())

    status_badge.short_description = "Status"


@admin.register(ModelArtifact)
class ModelArtifactAdmin(admin.ModelAdmin):
    list_display = ["kind", "path", "phase_order", "has_covariance_table", "run", "created_at"]
    list_filter = ["kind", "phase_order", "created_at"]
    search_fields = ["path", "sha256"]
    readonly_fields = [
        "run",
        "kind",
        "path",
        "phase_order",
        "regressor_length",
        "has_covariance_table",
        "sha256",
        "created_at",
    ]

    def has_add_permission(self, request):
        return False


@admin.register(RunLog)
class RunLogAdmin(admin.ModelAdmin):
    list_display = ["created_at", "action_badge", "run", "message_truncated"]
    list_filter = ["action", "created_at"]
    search_fields = ["message", "run__config_hash"]
    readonly_fields = ["run", "action", "message", "details", "created_at"]

    def has_add_permission(self, request):
        return False

    def has_change_permission(self, request, obj=None):
        return False

    def action_badge(self, obj):
        colors = {
            "fit": "green",
            "gen": "blue",
            "replay": "blue",
            "crossval": "purple",
            "ablation": "purple",
            "report": "gray",
            "reset": "orange",
            "error": "red",
        }
        return format_html(BADGE, colors.get(obj.action, "gray"), obj.action.upper())

    action_badge.short_description = "Action"

    def message_truncated(self, obj):
        return obj.message[:100] + "..." if len(obj.message) > 100 else obj.message

    message_truncated.short_description = "Message"
