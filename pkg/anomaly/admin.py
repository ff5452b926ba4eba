from django.contrib import admin
from .models import TrainingRun, EpochMetric, Evaluation, AblationResult


class EpochMetricInline(admin.TabularInline):
    model = EpochMetric
    extra = 0
    readonly_fields = ['epoch', 'mean_loss', 'auc']


@admin.register(TrainingRun)
class TrainingRunAdmin(admin.ModelAdmin):
    list_display = ['name', 'seed', 'status', 'steps', 'best_auc', 'best_epoch', 'final_auc', 'created_at']
    list_filter = ['status', 'name']
    search_fields = ['name', 'output_dir']
    ordering = ['-created_at']
    inlines = [EpochMetricInline]


@admin.register(EpochMetric)
class EpochMetricAdmin(admin.ModelAdmin):
    list_display = ['run', 'epoch', 'mean_loss', 'auc']
    list_filter = ['run']
    ordering = ['run', 'epoch']


@admin.register(Evaluation)
class EvaluationAdmin(admin.ModelAdmin):
    list_display = ['checkpoint', 'dataset', 'overall_auc', 'per_video_mean_auc', 'num_frames', 'exclude_warmup', 'created_at']
    list_filter = ['exclude_warmup']
    search_fields = ['checkpoint', 'dataset']
    ordering = ['-created_at']


@admin.register(AblationResult)
class AblationResultAdmin(admin.ModelAdmin):
    list_display = ['axis', 'value', 'seed', 'best_auc', 'final_auc', 'status']
    list_filter = ['axis', 'status']
    search_fields = ['axis', 'value']
    ordering = ['axis', 'value', 'seed']
