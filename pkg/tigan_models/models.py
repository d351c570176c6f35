# tigan_models/models.py
from django.db import models


class TrainingRun(models.Model):
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"
    STATUS_CHOICES = [(RUNNING, "Running"), (FINISHED, "Finished"), (FAILED, "Failed")]

    created_at = models.DateTimeField(auto_now_add=True)
    seed = models.IntegerField(default=0)
    config = models.JSONField(default=dict)
    vocab_hash = models.CharField(max_length=64)
    output_dir = models.CharField(max_length=500)
    status = models.CharField(max_length=16, choices=STATUS_CHOICES, default=RUNNING)
    steps = models.PositiveIntegerField(default=0)
    final_checkpoint = models.CharField(max_length=500, blank=True, default="")
    error = models.TextField(blank=True, default="")

    class Meta:
        app_label = "tigan_models"
        ordering = ["-created_at", "-id"]

    def __str__(self):
        return f"run {self.pk} (seed {self.seed}, {self.status})"


class CheckpointRecord(models.Model):
    run = models.ForeignKey(TrainingRun, on_delete=models.CASCADE, related_name="checkpoints")
    epoch = models.PositiveIntegerField()
    step = models.PositiveIntegerField()
    path = models.CharField(max_length=500)

    class Meta:
        app_label = "tigan_models"
        ordering = ["run", "step"]

    def __str__(self):
        return self.path


class EvaluationRecord(models.Model):
    TIGAN = "tigan"
    BASELINE = "baseline"
    KIND_CHOICES = [(TIGAN, "TIGAN"), (BASELINE, "Embedding average + k-means")]

    run = models.ForeignKey(TrainingRun, on_delete=models.SET_NULL, null=True, blank=True, related_name="evaluations")
    created_at = models.DateTimeField(auto_now_add=True)
    kind = models.CharField(max_length=16, choices=KIND_CHOICES)
    accuracy = models.FloatField(null=True, blank=True)
    coherence = models.FloatField(null=True, blank=True)
    report_path = models.CharField(max_length=500)

    class Meta:
        app_label = "tigan_models"
        ordering = ["-created_at", "-id"]

    def __str__(self):
        return f"{self.kind} evaluation -> {self.report_path}"
