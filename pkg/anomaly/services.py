import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from django.conf import settings
from django.utils import timezone

from .ablation import AblationGrid, AblationReport, AblationRun, run_ablation
from .config import RunConfig
from .datasets import VideoDataset, open_source
from .engine import OnlineScorer
from .evaluation import EvalResult, evaluate
from .exceptions import ConfigurationError
from .models import AblationResult, EpochMetric, Evaluation, TrainingRun
from .serializers import AblationResultSerializer, EvaluationSerializer, TrainingRunSerializer
from .synthetic import SyntheticSpec, generate_synthetic, write_dataset
from .training import TrainingSummary, Trainer, load_checkpoint

logger = logging.getLogger(__name__)


def default_output_dir(name: str) -> Path:
    return Path(settings.MOVAD['OUTPUT_ROOT']) / name


def resolve_device_model(model):
    return model.to(settings.MOVAD['DEVICE'])


def train_model(run_config: RunConfig, output_dir: Optional[Union[str, Path]] = None,
                resume: Optional[Union[str, Path]] = None) -> Tuple[TrainingRun, TrainingSummary]:
    """Train one configuration, recording the run and its epochs in the database"""
    if not run_config.data.train_root:
        raise ConfigurationError("No training dataset given (data.train_root / --dataset)")
    size = run_config.model.input.size
    train_set = VideoDataset.from_directory(run_config.data.train_root, size, run_config.data.train_split)
    eval_set = None
    if run_config.data.eval_root:
        eval_set = VideoDataset.from_directory(run_config.data.eval_root, size, run_config.data.eval_split)

    output_dir = Path(output_dir or run_config.output_dir or default_output_dir(run_config.name))
    run = TrainingRun.objects.create(
        name=run_config.name,
        config=run_config.to_dict(),
        seed=run_config.seed,
        output_dir=str(output_dir),
    )

    def record_epoch(row: Dict):
        EpochMetric.objects.update_or_create(
            run=run, epoch=row['epoch'],
            defaults={'mean_loss': row['mean_loss'], 'auc': row['auc']},
        )

    evaluator = None
    if eval_set is not None:
        def evaluator(model):
            return evaluate(model, eval_set).overall_auc

    try:
        trainer = Trainer(run_config, train_set, output_dir, evaluator=evaluator, on_epoch_end=record_epoch,
                          resume=resume)
        summary = trainer.fit()
    except Exception as e:
        logger.error(f"Training run {run.pk} failed: {e}")
        run.status = TrainingRun.STATUS_FAILED
        run.error = str(e)
        run.finished_at = timezone.now()
        run.save()
        raise

    run.status = TrainingRun.STATUS_COMPLETED
    run.steps = summary.steps
    run.best_auc = summary.best_auc
    run.best_epoch = summary.best_epoch
    run.final_auc = summary.final_auc
    run.finished_at = timezone.now()
    run.save()
    with open(output_dir / 'run.json', 'w', encoding='utf-8') as handle:
        json.dump(TrainingRunSerializer(run).data, handle, indent=2)
    return run, summary


def evaluate_checkpoint(checkpoint: Union[str, Path], dataset: Union[str, Path], exclude_warmup: bool = False,
                        split: Optional[str] = None, workers: int = 1,
                        output: Optional[Union[str, Path]] = None) -> Tuple[Evaluation, EvalResult, Path]:
    """Evaluate a checkpoint on a dataset directory; writes a JSON report and a per-class CSV"""
    loaded = load_checkpoint(checkpoint)
    model = resolve_device_model(loaded.model)
    eval_set = VideoDataset.from_directory(dataset, loaded.run_config.model.input.size, split)
    result = evaluate(model, eval_set, exclude_warmup=exclude_warmup, workers=workers)

    record = Evaluation.objects.create(
        run=TrainingRun.objects.filter(output_dir=str(Path(checkpoint).parent)).first(),
        checkpoint=str(checkpoint),
        dataset=str(dataset),
        overall_auc=result.overall_auc,
        per_video_mean_auc=result.per_video_mean_auc,
        num_frames=result.num_frames,
        num_videos=result.num_videos,
        exclude_warmup=exclude_warmup,
        per_class=result.per_class_rows(),
        failed_videos=result.failed_videos,
    )

    output = Path(output) if output else Path(checkpoint).parent / 'eval.json'
    output.parent.mkdir(parents=True, exist_ok=True)
    report = dict(EvaluationSerializer(record).data)
    report['split'] = split
    with open(output, 'w', encoding='utf-8') as handle:
        json.dump(report, handle, indent=2)
    result.per_class_table().to_csv(output.with_suffix('.per_class.csv'), index=False)
    return record, result, output


def score_video(checkpoint: Union[str, Path], video: Union[str, Path], dump_every: Optional[int] = None,
                state_dir: Optional[Union[str, Path]] = None) -> List[float]:
    """Stream one video through a fresh session; optionally snapshot the session every K frames"""
    loaded = load_checkpoint(checkpoint)
    scorer = OnlineScorer(resolve_device_model(loaded.model))
    source = open_source(video)
    session = scorer.open_session()
    if dump_every:
        state_dir = Path(state_dir or Path(checkpoint).parent / 'states')

    scores = []
    for index in range(source.count()):
        scores.append(scorer.push_frame(session, source.get_frame(index)))
        if dump_every and (index + 1) % dump_every == 0:
            scorer.dump_state(session, state_dir / f"state_{index + 1:06d}.pt")
    logger.info(f"Scored {len(scores)} frames of {video}")
    return scores


def format_scores(scores: List[float]) -> str:
    return ''.join(f"{index}\t{score:.6f}\n" for index, score in enumerate(scores))


def run_ablation_sweep(grid: AblationGrid, output_dir: Union[str, Path]) -> AblationReport:
    """Run a sweep, mirroring every finished run into a TrainingRun with its epochs and an AblationResult row"""
    results = []

    def record_run(run: AblationRun):
        training_run = None
        if run.config is not None:
            training_run = TrainingRun.objects.create(
                name=run.config.get('name', 'run'),
                config=run.config,
                seed=run.seed,
                output_dir=run.output_dir,
                status=run.status,
                steps=run.steps,
                best_auc=run.best_auc,
                best_epoch=run.best_epoch,
                final_auc=run.final_auc,
                error=run.error,
                finished_at=timezone.now(),
            )
            EpochMetric.objects.bulk_create([
                EpochMetric(run=training_run, epoch=row['epoch'], mean_loss=row['mean_loss'], auc=row['auc'])
                for row in run.curve
            ])
        results.append(AblationResult.objects.create(
            run=training_run,
            axis=run.axis,
            value=str(run.value),
            seed=run.seed,
            best_auc=run.best_auc,
            best_epoch=run.best_epoch,
            final_auc=run.final_auc,
            status=run.status,
            error=run.error,
        ))

    report = run_ablation(grid, output_dir, on_run_end=record_run)
    with open(Path(output_dir) / 'results.json', 'w', encoding='utf-8') as handle:
        json.dump(AblationResultSerializer(results, many=True).data, handle, indent=2)
    return report


def synthesize_dataset(spec: SyntheticSpec, output_dir: Union[str, Path]) -> Path:
    return write_dataset(generate_synthetic(spec), output_dir)
