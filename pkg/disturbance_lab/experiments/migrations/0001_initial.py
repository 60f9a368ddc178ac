# Generated by Django 5.1.1

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('experiment', models.CharField(max_length=32)),
                ('status', models.CharField(choices=[('SUCCEEDED', 'Succeeded'), ('DIVERGED', 'Diverged'), ('FAILED', 'Failed')], max_length=16)),
                ('seed', models.CharField(max_length=20)),
                ('output_dir', models.CharField(max_length=500)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('manifest_sha256', models.CharField(blank=True, max_length=64)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
