# Generated by Django 5.2.9 on 2026-10-18 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('mode', models.CharField(choices=[('fit', 'Fit Models'), ('gen', 'Generate Data'), ('replay', 'Scenario Replay'), ('crossval', 'Cross-Validation'), ('ablation', 'No-Task Ablation'), ('report', 'Re-aggregate Report')], max_length=20)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('complete', 'Complete'), ('error', 'Error')], default='pending', max_length=20)),
                ('status_message', models.TextField(blank=True, help_text='Error details or status info')),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('config_hash', models.CharField(blank=True, db_index=True, max_length=64)),
                ('output_dir', models.CharField(blank=True, max_length=1024)),
                ('report', models.JSONField(blank=True, default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('completed_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='ModelArtifact',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('gait', 'Gait Model'), ('torque', 'Torque Surface')], max_length=20)),
                ('path', models.CharField(max_length=1024)),
                ('phase_order', models.PositiveIntegerField()),
                ('regressor_length', models.PositiveIntegerField()),
                ('has_covariance_table', models.BooleanField(default=False)),
                ('sha256', models.CharField(max_length=64)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.CASCADE, related_name='artifacts', to='core.experimentrun')),
            ],
            options={
                'verbose_name': 'Model Artifact',
                'verbose_name_plural': 'Model Artifacts',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='RunLog',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('action', models.CharField(choices=[('fit', 'Fit Models'), ('gen', 'Generate Data'), ('replay', 'Scenario Replay'), ('crossval', 'Cross-Validation'), ('ablation', 'No-Task Ablation'), ('report', 'Re-aggregate Report'), ('reset', 'Backup Reset'), ('error', 'Error')], max_length=20)),
                ('message', models.TextField()),
                ('details', models.JSONField(blank=True, default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.CASCADE, related_name='logs', to='core.experimentrun')),
            ],
            options={
                'verbose_name': 'Run Log',
                'verbose_name_plural': 'Run Logs',
                'ordering': ['-created_at'],
            },
        ),
    ]
