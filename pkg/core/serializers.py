"""
API Serializers for Gait Lab
"""

from pathlib import Path

from rest_framework import serializers

from .backup import HS_REFRACTORY
from .models import ExperimentRun, ModelArtifact, RunLog
from .services.simulation import HS_MODES
from .simdata import GROUND_TRUTH_MODES, SCENARIOS

MODES = [choice for choice, _ in ExperimentRun.MODE_CHOICES]
NOISE_PRESETS = ["default", "outdoor"]
SCENARIO_MODES = ("gen", "replay")


class ModelArtifactSerializer(serializers.ModelSerializer):
    class Meta:
        model = ModelArtifact
        fields = [
            'id', 'run', 'kind', 'path', 'phase_order', 'regressor_length',
            'has_covariance_table', 'sha256', 'created_at'
        ]
        read_only_fields = fields


class RunLogSerializer(serializers.ModelSerializer):
    class Meta:
        model = RunLog
        fields = ['id', 'action', 'message', 'details', 'created_at']
        read_only_fields = fields


class ExperimentRunSerializer(serializers.ModelSerializer):
    reset_count = serializers.IntegerField(read_only=True)
    artifacts = ModelArtifactSerializer(many=True, read_only=True)

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'mode', 'status', 'status_message', 'seed', 'config',
            'config_hash', 'output_dir', 'reset_count', 'artifacts',
            'created_at', 'completed_at'
        ]
        read_only_fields = fields


class ExperimentConfigSerializer(serializers.Serializer):
    """Validates a merged experiment configuration before a run starts"""

    mode = serializers.ChoiceField(choices=MODES)
    seed = serializers.IntegerField(required=False, allow_null=True, min_value=0)
    order = serializers.IntegerField(min_value=2, max_value=60)

    # Inputs
    dataset = serializers.CharField(required=False, allow_null=True, allow_blank=True)
    gait_model = serializers.CharField(required=False, allow_null=True, allow_blank=True)
    torque_model = serializers.CharField(required=False, allow_null=True, allow_blank=True)
    strides_csv = serializers.CharField(required=False, allow_null=True, allow_blank=True)

    # Scenario and synthetic data
    scenario = serializers.ChoiceField(choices=SCENARIOS)
    duration = serializers.FloatField(required=False, allow_null=True, min_value=1.0)
    subjects = serializers.IntegerField(min_value=1, max_value=200)
    strides_per_condition = serializers.IntegerField(min_value=1, max_value=50)
    sample_rate = serializers.FloatField(min_value=10.0, max_value=10000.0)
    coefficient_jitter = serializers.FloatField(min_value=0.0, max_value=1.0)
    stride_rate_jitter = serializers.FloatField(min_value=0.0, max_value=0.5)
    stream_noise = serializers.ListField(child=serializers.FloatField(), min_length=6, max_length=6)

    # Filter tuning
    noise_preset = serializers.ChoiceField(choices=NOISE_PRESETS)
    sigma_q = serializers.ListField(
        child=serializers.FloatField(), min_length=3, max_length=3, required=False, allow_null=True
    )
    sigma_sensor = serializers.ListField(child=serializers.FloatField(), min_length=6, max_length=6)
    beta = serializers.FloatField()
    max_time_step = serializers.FloatField(required=False, allow_null=True)

    # Heel strikes and ground truth
    hs_mode = serializers.ChoiceField(choices=list(HS_MODES))
    hs_velocity_threshold = serializers.FloatField()
    hs_height_threshold = serializers.FloatField()
    hs_refractory = serializers.FloatField(min_value=0.0)
    ground_truth = serializers.ChoiceField(choices=list(GROUND_TRUTH_MODES))
    warmup_strides = serializers.IntegerField(min_value=0)

    # Execution
    workers = serializers.IntegerField(min_value=1, max_value=64)
    output_dir = serializers.CharField()

    def _positive(self, values, name):
        if values is not None and any(v <= 0 for v in values):
            raise serializers.ValidationError(f"Every {name} standard deviation must be positive.")
        return values

    def validate_sigma_q(self, value):
        return self._positive(value, "process noise")

    def validate_sigma_sensor(self, value):
        return self._positive(value, "sensor")

    def validate_stream_noise(self, value):
        if any(v < 0 for v in value):
            raise serializers.ValidationError("Stream noise cannot be negative.")
        return value

    def validate_beta(self, value):
        if not 0.0 < value <= 1.0:
            raise serializers.ValidationError("beta must lie in (0, 1].")
        return value

    def validate_max_time_step(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("max_time_step must be positive.")
        return value

    def validate_hs_refractory(self, value):
        if value < HS_REFRACTORY / 10:
            raise serializers.ValidationError("Refractory period is implausibly short.")
        return value

    def _existing(self, value, what):
        if value and not Path(value).exists():
            raise serializers.ValidationError(f"{what} not found: {value}")
        return value or None

    def validate_dataset(self, value):
        return self._existing(value, "Dataset")

    def validate_gait_model(self, value):
        return self._existing(value, "Gait model")

    def validate_torque_model(self, value):
        return self._existing(value, "Torque model")

    def validate_strides_csv(self, value):
        return self._existing(value, "Per-stride CSV")

    def validate(self, attrs):
        if attrs["mode"] == "gen" and attrs.get("seed") is None:
            raise serializers.ValidationError({"seed": "--seed is required for data generation."})
        if attrs["mode"] == "fit" and not attrs.get("dataset") and attrs.get("seed") is None:
            raise serializers.ValidationError(
                {"dataset": "Fitting needs a dataset, or a seed to generate one."}
            )
        if attrs["mode"] == "report" and not attrs.get("strides_csv"):
            default = Path(attrs["output_dir"]) / "strides.csv"
            if not default.exists():
                raise serializers.ValidationError(
                    {"strides_csv": f"No per-stride CSV given and {default} does not exist."}
                )
        if attrs["mode"] not in SCENARIO_MODES and attrs.get("scenario", "steady") != "steady":
            raise serializers.ValidationError(
                {"scenario": f"--scenario only applies to {' and '.join(SCENARIO_MODES)}."}
            )
        return attrs
