# Generated by Django 4.2.7 on 2026-10-18 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(max_length=100)),
                ('config', models.JSONField(default=dict)),
                ('seed', models.IntegerField(default=0)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('steps', models.IntegerField(default=0)),
                ('best_auc', models.FloatField(blank=True, null=True)),
                ('best_epoch', models.IntegerField(blank=True, null=True)),
                ('final_auc', models.FloatField(blank=True, null=True)),
                ('error', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='Evaluation',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('checkpoint', models.CharField(max_length=500)),
                ('dataset', models.CharField(max_length=500)),
                ('overall_auc', models.FloatField(blank=True, null=True)),
                ('per_video_mean_auc', models.FloatField(blank=True, null=True)),
                ('num_frames', models.IntegerField(default=0)),
                ('num_videos', models.IntegerField(default=0)),
                ('exclude_warmup', models.BooleanField(default=False)),
                ('per_class', models.JSONField(default=list)),
                ('failed_videos', models.JSONField(default=list)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='evaluations', to='anomaly.trainingrun')),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='AblationResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('axis', models.CharField(max_length=20)),
                ('value', models.CharField(max_length=20)),
                ('seed', models.IntegerField(default=0)),
                ('best_auc', models.FloatField(blank=True, null=True)),
                ('best_epoch', models.IntegerField(blank=True, null=True)),
                ('final_auc', models.FloatField(blank=True, null=True)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('error', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('run', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='ablation_results', to='anomaly.trainingrun')),
            ],
            options={
                'ordering': ['axis', 'value', 'seed'],
            },
        ),
        migrations.CreateModel(
            name='EpochMetric',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.IntegerField()),
                ('mean_loss', models.FloatField()),
                ('auc', models.FloatField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='anomaly.trainingrun')),
            ],
            options={
                'ordering': ['run', 'epoch'],
                'unique_together': {('run', 'epoch')},
            },
        ),
    ]
