"""
Core models for Gait Lab

ExperimentRun - One invocation of a lab command (fit, gen, replay, ...)
ModelArtifact - A model file written by a run
RunLog - Audit trail of run actions
"""

from pathlib import Path

from django.db import models


class ExperimentRun(models.Model):
    """
    A single experiment driven from the command line.
    The validated configuration and the final report are stored with it.
    """

    MODE_CHOICES = [
        ("fit", "Fit Models"),
        ("gen", "Generate Data"),
        ("replay", "Scenario Replay"),
        ("crossval", "Cross-Validation"),
        ("ablation", "No-Task Ablation"),
        ("report", "Re-aggregate Report"),
    ]

    STATUS_CHOICES = [
        ("pending", "Pending"),  # Created, not started
        ("running", "Running"),  # Driver executing
        ("complete", "Complete"),  # Report written
        ("error", "Error"),  # Something went wrong
    ]

    mode = models.CharField(max_length=20, choices=MODE_CHOICES)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default="pending")
    status_message = models.TextField(
        blank=True, help_text="Error details or status info"
    )

    # Inputs
    seed = models.BigIntegerField(null=True, blank=True)
    config = models.JSONField(default=dict, blank=True)
    config_hash = models.CharField(max_length=64, blank=True, db_index=True)

    # Outputs
    output_dir = models.CharField(max_length=1024, blank=True)
    report = models.JSONField(default=dict, blank=True)

    # Timestamps
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    completed_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ["-created_at"]
        verbose_name = "Experiment Run"
        verbose_name_plural = "Experiment Runs"

    def __str__(self):
        return f"{self.mode} #{self.pk} ({self.status})"

    @property
    def report_path(self):
        return Path(self.output_dir) / "report.json" if self.output_dir else None

    @property
    def reset_count(self):
        return self.logs.filter(action="reset").count()


class ModelArtifact(models.Model):
    """A fitted model file (gait kinematics or torque surface)"""

    KIND_CHOICES = [
        ("gait", "Gait Model"),
        ("torque", "Torque Surface"),
    ]

    run = models.ForeignKey(
        ExperimentRun,
        on_delete=models.CASCADE,
        related_name="artifacts",
        null=True,
        blank=True,
    )
    kind = models.CharField(max_length=20, choices=KIND_CHOICES)
    path = models.CharField(max_length=1024)
    phase_order = models.PositiveIntegerField()
    regressor_length = models.PositiveIntegerField()
    has_covariance_table = models.BooleanField(default=False)
    sha256 = models.CharField(max_length=64)

    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]
        verbose_name = "Model Artifact"
        verbose_name_plural = "Model Artifacts"

    def __str__(self):
        return f"{self.kind} N={self.phase_order} ({Path(self.path).name})"


class RunLog(models.Model):
    """
    Audit log for experiment actions.
    Backup resets seen during a run are recorded here too.
    """

    ACTION_CHOICES = [
        ("fit", "Fit Models"),
        ("gen", "Generate Data"),
        ("replay", "Scenario Replay"),
        ("crossval", "Cross-Validation"),
        ("ablation", "No-Task Ablation"),
        ("report", "Re-aggregate Report"),
        ("reset", "Backup Reset"),
        ("error", "Error"),
    ]

    run = models.ForeignKey(
        ExperimentRun, on_delete=models.CASCADE, related_name="logs", null=True, blank=True
    )
    action = models.CharField(max_length=20, choices=ACTION_CHOICES)
    message = models.TextField()
    details = models.JSONField(default=dict, blank=True)

    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]
        verbose_name = "Run Log"
        verbose_name_plural = "Run Logs"

    def __str__(self):
        run_str = f"{self.run.mode} #{self.run.pk}" if self.run else "System"
        return f"[{self.action}] {run_str}: {self.message[:50]}"
