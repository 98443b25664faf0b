# Generated by Django 5.2.10 on 2026-10-19 09:12

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
                ('kind', models.CharField(choices=[('exp1', 'Experiment 1 (residual traces)'), ('exp2', 'Experiment 2 (SAA convergence)'), ('single', 'Single solve')], max_length=10)),
                ('status', models.CharField(choices=[('Converged', 'Converged'), ('MaxIters', 'Max iterations'), ('Error', 'Error')], max_length=12)),
                ('tau', models.FloatField()),
                ('lb', models.FloatField()),
                ('ub', models.FloatField()),
                ('sample_size', models.PositiveIntegerField()),
                ('instance_index', models.PositiveIntegerField(default=0)),
                ('init_index', models.PositiveIntegerField(blank=True, null=True)),
                ('master_seed', models.BigIntegerField(default=0)),
                ('instance_seed', models.BigIntegerField(blank=True, null=True)),
                ('scenario_seed', models.BigIntegerField(blank=True, null=True)),
                ('init_seed', models.BigIntegerField(blank=True, null=True)),
                ('iterations', models.PositiveIntegerField(default=0)),
                ('final_resval', models.FloatField(blank=True, null=True)),
                ('objective', models.FloatField(blank=True, null=True)),
                ('psi_inner_max', models.FloatField(blank=True, null=True)),
                ('resampled', models.PositiveIntegerField(default=0)),
                ('trace_path', models.CharField(blank=True, max_length=500)),
                ('error', models.TextField(blank=True)),
                ('elapsed_seconds', models.FloatField(default=0.0)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'indexes': [models.Index(fields=['created_at'], name='experiments_created_1c13fb_idx'), models.Index(fields=['kind', 'status'], name='experiments_kind_5b1049_idx')],
            },
        ),
    ]
