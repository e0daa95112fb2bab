"""
Management command for gait lab experiments.

Usage:
    python manage.py gait gen --seed 7 --subjects 10      # Synthetic stride dataset + stream
    python manage.py gait fit --dataset runs/gen/dataset.csv
    python manage.py gait replay --gait-model runs/fit/gait.npz --scenario ramp
    python manage.py gait crossval --seed 7 --workers 4   # Leave-one-subject-out
    python manage.py gait ablation --seed 7               # Crossval with the no-task EKF
    python manage.py gait report --strides-csv runs/crossval/strides.csv

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
from dataclasses import fields

from django.core.management.base import BaseCommand, CommandError

from core.model_store import ModelFileError
from core.models import ExperimentRun
from core.services.experiment_service import (
    NUMERICAL_ERRORS,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    ExperimentManager,
    build_config,
)
from core.simdata import DatasetError, GROUND_TRUTH_MODES, SCENARIOS

INPUT_ERRORS = (ConfigError, ExperimentError, DatasetError, ModelFileError)


def float_list(value):
    try:
        return [float(item) for item in value.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{value}'")


class Command(BaseCommand):
    help = 'Gait-state estimation experiments'

    def add_arguments(self, parser):
        parser.add_argument(
            'action',
            choices=[mode for mode, _ in ExperimentRun.MODE_CHOICES],
            help='Experiment to run'
        )
        parser.add_argument('--config', help='JSON config file; overrides flags')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--order', type=int, help='Fourier order of the phase basis')
        parser.add_argument('--output-dir', dest='output_dir')
        parser.add_argument('--workers', type=int)

        inputs = parser.add_argument_group('inputs')
        inputs.add_argument('--dataset', help='Stride dataset CSV')
        inputs.add_argument('--gait-model', dest='gait_model')
        inputs.add_argument('--torque-model', dest='torque_model')
        inputs.add_argument('--strides-csv', dest='strides_csv')

        data = parser.add_argument_group('synthetic data')
        data.add_argument('--scenario', choices=SCENARIOS)
        data.add_argument('--duration', type=float, help='Seconds (steady scenario only)')
        data.add_argument('--subjects', type=int)
        data.add_argument('--strides-per-condition', dest='strides_per_condition', type=int)
        data.add_argument('--sample-rate', dest='sample_rate', type=float)
        data.add_argument('--coefficient-jitter', dest='coefficient_jitter', type=float)
        data.add_argument('--stride-rate-jitter', dest='stride_rate_jitter', type=float)
        data.add_argument('--stream-noise', dest='stream_noise', type=float_list)
        data.add_argument('--ground-truth', dest='ground_truth', choices=GROUND_TRUTH_MODES)

        tuning = parser.add_argument_group('filter')
        tuning.add_argument('--noise-preset', dest='noise_preset', choices=['default', 'outdoor'])
        tuning.add_argument('--sigma-q', dest='sigma_q', type=float_list)
        tuning.add_argument('--sigma-sensor', dest='sigma_sensor', type=float_list)
        tuning.add_argument('--beta', type=float, help='Backup reset threshold')
        tuning.add_argument('--max-time-step', dest='max_time_step', type=float)
        tuning.add_argument('--hs-mode', dest='hs_mode', choices=['oracle', 'detected'])
        tuning.add_argument('--warmup-strides', dest='warmup_strides', type=int)

    def handle(self, *args, **options):
        action = options['action']
        flags = {f.name: options.get(f.name) for f in fields(ExperimentConfig) if f.name != 'mode'}

        try:
            config = build_config(action, flags, options.get('config'))
        except ConfigError as e:
            raise CommandError(f"Invalid configuration: {e}", returncode=2)

        self.stdout.write(f"Running {action} (config {config.config_hash[:12]}, seed {config.seed})...")

        manager = ExperimentManager()
        try:
            run, result = manager.execute(config)
        except NUMERICAL_ERRORS as e:
            raise CommandError(f"Numerical failure: {e}", returncode=3)
        except INPUT_ERRORS as e:
            raise CommandError(str(e), returncode=2)

        self.show_summary(result.report)
        for path in result.files:
            self.stdout.write(f"  wrote {path}")
        if result.resets:
            self.stdout.write(self.style.WARNING(f"  {len(result.resets)} backup reset(s)"))
        self.stdout.write(self.style.SUCCESS(f"Run #{run.pk} complete"))

    def show_summary(self, report):
        """Mean phase RMSE per estimator and the paired tests"""
        for estimator, entry in report.get('summary', {}).items():
            phase = entry.get('phase_rmse_pct')
            if phase:
                self.stdout.write(
                    f"  {estimator:8s} phase RMSE {phase['mean']:.2f} ± {phase['std']:.2f} % "
                    f"({entry['strides']} strides)"
                )
        for name, comparison in report.get('comparisons', {}).items():
            test = comparison.get('per_subject') or comparison.get('per_stride')
            if test:
                self.stdout.write(f"  {name}: t={test['t']}, p={test['p']}")
        if 'constraint_violation' in report:
            self.stdout.write(f"  constraint violation {report['constraint_violation']:.3g}")
