from django.db import models


class ExperimentRun(models.Model):
    """Log of experiment runs and where their artifacts were written"""

    STATUS_CHOICES = [
        ('SUCCEEDED', 'Succeeded'),
        ('DIVERGED', 'Diverged'),
        ('FAILED', 'Failed'),
    ]

    experiment = models.CharField(max_length=32)
    status = models.CharField(max_length=16, choices=STATUS_CHOICES)
    # uint64 seeds do not fit a signed BigIntegerField
    seed = models.CharField(max_length=20)
    output_dir = models.CharField(max_length=500)
    summary = models.JSONField(default=dict, blank=True)
    manifest_sha256 = models.CharField(max_length=64, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = 'Experiment Run'
        verbose_name_plural = 'Experiment Runs'

    def __str__(self):
        return f"{self.experiment} (seed {self.seed}) - {self.get_status_display()} - {self.created_at}"
