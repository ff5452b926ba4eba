from django.db import models


class TrainingRun(models.Model):
    STATUS_RUNNING = 'running'
    STATUS_COMPLETED = 'completed'
    STATUS_FAILED = 'failed'
    STATUS_CHOICES = [
        (STATUS_RUNNING, 'Running'),
        (STATUS_COMPLETED, 'Completed'),
        (STATUS_FAILED, 'Failed'),
    ]

    name = models.CharField(max_length=100)  # Config name (e.g., "toy", "swin_b")
    config = models.JSONField(default=dict)  # Resolved RunConfig document
    seed = models.IntegerField(default=0)
    output_dir = models.CharField(max_length=500, blank=True)  # Directory holding checkpoints and metrics
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default=STATUS_RUNNING)
    steps = models.IntegerField(default=0)  # Optimizer steps taken
    best_auc = models.FloatField(null=True, blank=True)  # Highest per-epoch frame AUC
    best_epoch = models.IntegerField(null=True, blank=True)
    final_auc = models.FloatField(null=True, blank=True)  # AUC after the last epoch
    error = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.name} (seed {self.seed}): {self.status}"

    @property
    def nf(self):
        return self.config.get('model', {}).get('stmm', {}).get('nf')

    @property
    def lstm_cells(self):
        return self.config.get('model', {}).get('head', {}).get('lstm_cells')


class EpochMetric(models.Model):
    run = models.ForeignKey(TrainingRun, on_delete=models.CASCADE, related_name='epochs')
    epoch = models.IntegerField()  # 1-based
    mean_loss = models.FloatField()  # Mean weighted cross-entropy over the epoch's steps
    auc = models.FloatField(null=True, blank=True)  # Frame AUC when the epoch was evaluated

    class Meta:
        unique_together = ['run', 'epoch']
        ordering = ['run', 'epoch']

    def __str__(self):
        return f"{self.run.name} epoch {self.epoch}: loss {self.mean_loss:.4f}"


class Evaluation(models.Model):
    run = models.ForeignKey(TrainingRun, on_delete=models.SET_NULL, related_name='evaluations', null=True, blank=True)
    checkpoint = models.CharField(max_length=500)
    dataset = models.CharField(max_length=500)
    overall_auc = models.FloatField(null=True, blank=True)  # Pooled frame-level AUC
    per_video_mean_auc = models.FloatField(null=True, blank=True)  # Diagnostic, single-class videos skipped
    num_frames = models.IntegerField(default=0)  # Frames that entered the pooled AUC
    num_videos = models.IntegerField(default=0)
    exclude_warmup = models.BooleanField(default=False)
    per_class = models.JSONField(default=list)  # One row per category: ego and non-ego AUC and video counts
    failed_videos = models.JSONField(default=list)  # Rows of {video, error}
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.checkpoint} on {self.dataset}: {self.overall_auc}"


class AblationResult(models.Model):
    axis = models.CharField(max_length=20)  # nf, lstm_cells, vcl or memory_onoff
    value = models.CharField(max_length=20)  # Grid value, stored as text so "both" and "4" share a column
    seed = models.IntegerField(default=0)
    best_auc = models.FloatField(null=True, blank=True)
    best_epoch = models.IntegerField(null=True, blank=True)
    final_auc = models.FloatField(null=True, blank=True)
    status = models.CharField(max_length=20, choices=TrainingRun.STATUS_CHOICES, default=TrainingRun.STATUS_RUNNING)
    error = models.TextField(blank=True)
    run = models.ForeignKey(TrainingRun, on_delete=models.SET_NULL, related_name='ablation_results', null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['axis', 'value', 'seed']

    def __str__(self):
        return f"{self.axis}={self.value} seed {self.seed}: {self.best_auc}"
