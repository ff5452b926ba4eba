"""
Training harness: weighted cross-entropy, VCL clip sampling, the SGD loop,
parameter initialization and checkpoints.

Each sampled clip is a window of VCL consecutive frames from one video. The
recurrent state starts from zero at the beginning of the window and is
stepped once per frame; every frame's STMM input is the NF-frame clip ending
at that frame, front-padded inside the window exactly like the online engine
does during warm-up.
"""
import logging
import math
import os
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
import torch.nn as nn
import torch.nn.functional as F
from django.conf import settings

from .config import ModelConfig, RunConfig, TrainConfig, save_run_config
from .datasets import VideoDataset
from .engine import preprocess_frame
from .exceptions import CheckpointError, EmptyDatasetError, NonFiniteLossError, SingleClassError
from .ltmm import RecurrentState
from .network import AnomalyDetector
from .stmm import WindowAttention3D

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
METRIC_COLUMNS = ['step', 'epoch', 'loss', 'lr', 'acc_normal', 'acc_anomaly']
EPOCH_COLUMNS = ['epoch', 'mean_loss', 'auc']
WEIGHT_DECIMALS = 12


def seed_everything(seed: int, num_threads: Optional[int] = None) -> np.random.Generator:
    """Seed torch, pin the thread count and return the numpy generator used for sampling"""
    torch.manual_seed(seed)
    torch.set_num_threads(num_threads or settings.MOVAD['NUM_THREADS'])
    torch.use_deterministic_algorithms(True, warn_only=True)
    return np.random.default_rng(seed)


# Loss

def class_weights(counts: Sequence[float]) -> Tuple[float, ...]:
    """
    w_i proportional to e / e_i, normalized to sum to 1 and rounded to 12
    decimals so that proportional counts such as (7, 3) give exactly (0.3, 0.7).
    """
    counts = np.asarray(counts, dtype=np.float64)
    if (counts <= 0).any():
        raise SingleClassError(f"Every class needs at least one example, got counts {counts.tolist()}")
    raw = counts.sum() / counts
    return tuple(round(float(weight), WEIGHT_DECIMALS) for weight in raw / raw.sum())


def weighted_cross_entropy(logits: torch.Tensor, labels: torch.Tensor, weights: Sequence[float]) -> torch.Tensor:
    """Mean over all N rows of w_y * -log softmax(logits)[y]"""
    weights = torch.as_tensor(weights, dtype=logits.dtype, device=logits.device)
    nll = F.cross_entropy(logits, labels, reduction='none')
    return (weights[labels] * nll).mean()


# Sampling

@dataclass
class ClipBatch:
    clips: torch.Tensor  # [B, VCL, H, W, 3], preprocessed
    labels: torch.Tensor  # [B, VCL], long
    video_indices: List[int]
    offsets: List[int]


def sample_batch(dataset: VideoDataset, train_config: TrainConfig, rng: np.random.Generator,
                 model_config: ModelConfig, dtype: torch.dtype = torch.float32) -> ClipBatch:
    """
    Draw B videos (with replacement) and a window of VCL consecutive frames
    from each at a uniform random offset. Videos shorter than VCL are
    front-padded by repeating their first frame and label.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("Cannot sample from an empty dataset")
    vcl = train_config.vcl
    clips, labels, indices, offsets = [], [], [], []
    for index in rng.integers(0, len(dataset), size=train_config.batch_size):
        index = int(index)
        frames = dataset.frames(index)
        video_labels = dataset.labels(index)
        if len(frames) >= vcl:
            offset = int(rng.integers(0, len(frames) - vcl + 1))
            window = frames[offset:offset + vcl]
            window_labels = video_labels[offset:offset + vcl]
        else:
            offset = 0
            pad = vcl - len(frames)
            window = np.concatenate([np.repeat(frames[:1], pad, axis=0), frames])
            window_labels = np.concatenate([np.repeat(video_labels[:1], pad), video_labels])
        clips.append(np.stack([preprocess_frame(frame, model_config.input) for frame in window]))
        labels.append(window_labels)
        indices.append(index)
        offsets.append(offset)
    return ClipBatch(
        clips=torch.from_numpy(np.stack(clips)).to(dtype),
        labels=torch.from_numpy(np.stack(labels)).long(),
        video_indices=indices,
        offsets=offsets,
    )


def warmup_index(length: int, nf: int) -> torch.Tensor:
    """[length, nf] frame indices of the clip ending at each frame, earliest frame repeated at the start"""
    steps = torch.arange(length).unsqueeze(1) + torch.arange(nf).unsqueeze(0) - (nf - 1)
    return steps.clamp(min=0)


# Parameters

def init_params(model: nn.Module, generator: Optional[torch.Generator] = None) -> None:
    """
    Linear and patch-projection weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    LSTM matrices (semi-)orthogonal, every bias exactly zero.
    """
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Linear, nn.Conv3d)):
                bound = 1.0 / math.sqrt(module.weight[0].numel())
                module.weight.uniform_(-bound, bound, generator=generator)
            elif isinstance(module, nn.LSTMCell):
                nn.init.orthogonal_(module.weight_ih, generator=generator)
                nn.init.orthogonal_(module.weight_hh, generator=generator)
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
            elif isinstance(module, WindowAttention3D) and module.relative_position_bias_table is not None:
                nn.init.trunc_normal_(module.relative_position_bias_table, std=0.02, generator=generator)
        for name, parameter in model.named_parameters():
            if name.rsplit('.', 1)[-1].startswith('bias'):
                parameter.zero_()


def build_model(model_config: ModelConfig, seed: int = 0) -> AnomalyDetector:
    model = AnomalyDetector(model_config)
    init_params(model, torch.Generator().manual_seed(seed))
    return model


def build_optimizer(model: nn.Module, train_config: TrainConfig) -> torch.optim.SGD:
    return torch.optim.SGD(model.parameters(), lr=train_config.learning_rate, momentum=train_config.momentum)


# One step

@dataclass
class StepMetrics:
    loss: float
    acc_normal: Optional[float]
    acc_anomaly: Optional[float]


def _accuracy(predictions: torch.Tensor, labels: torch.Tensor, target: int) -> Optional[float]:
    selected = labels == target
    if not selected.any():
        return None
    return float((predictions[selected] == target).double().mean())


def train_step(model: AnomalyDetector, optimizer: torch.optim.Optimizer, batch: ClipBatch,
               weights: Sequence[float], initial_state: Optional[RecurrentState] = None,
               grad_clip: Optional[float] = None) -> Tuple[StepMetrics, RecurrentState]:
    """
    Unroll the head over the VCL frames of every row and take one optimizer
    step on the mean weighted cross-entropy of all B * VCL predictions.
    With ``grad_clip`` the global gradient norm is clipped before the step.
    """
    model.train()
    batch_size, vcl = batch.labels.shape
    clips = batch.clips[:, warmup_index(vcl, model.nf)]  # [B, VCL, NF, H, W, 3]
    features = model.features(clips.flatten(0, 1)).view(batch_size, vcl, -1)

    state = initial_state if initial_state is not None else model.init_state(batch_size)
    logits = []
    for t in range(vcl):
        step_logits, state = model.head(features[:, t], state)
        logits.append(step_logits)
    logits = torch.stack(logits, dim=1).reshape(-1, 2)
    labels = batch.labels.reshape(-1).to(logits.device)

    loss = weighted_cross_entropy(logits, labels, weights)
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"Loss became {loss.item()} on videos {batch.video_indices} at offsets {batch.offsets}")

    optimizer.zero_grad()
    loss.backward()
    if grad_clip is not None:
        nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
    optimizer.step()

    predictions = logits.detach().argmax(dim=-1)
    metrics = StepMetrics(
        loss=float(loss.detach()),
        acc_normal=_accuracy(predictions, labels, 0),
        acc_anomaly=_accuracy(predictions, labels, 1),
    )
    return metrics, state.detach()


# Checkpoints

@dataclass
class Checkpoint:
    model: AnomalyDetector
    run_config: RunConfig
    optimizer_state: Optional[Dict[str, Any]] = None
    step: int = 0
    epoch: int = 0
    numpy_rng_state: Optional[Dict[str, Any]] = None
    torch_rng_state: Optional[torch.Tensor] = None
    history: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    # Detached head state carried into the next batch when train.carry_state is on
    recurrent_state: Optional[Dict[str, Any]] = None


def save_checkpoint(path: Union[str, Path], model: AnomalyDetector, run_config: RunConfig,
                    optimizer: Optional[torch.optim.Optimizer] = None, step: int = 0, epoch: int = 0,
                    rng: Optional[np.random.Generator] = None,
                    history: Optional[Dict[str, List[Dict[str, Any]]]] = None,
                    recurrent_state: Optional[RecurrentState] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'config': run_config.to_dict(),
        'model_state': model.state_dict(),
        'optimizer_state': optimizer.state_dict() if optimizer is not None else None,
        'step': step,
        'epoch': epoch,
        'numpy_rng_state': rng.bit_generator.state if rng is not None else None,
        'torch_rng_state': torch.get_rng_state(),
        'history': history or {},
        'recurrent_state': recurrent_state.to_dict() if recurrent_state is not None else None,
    }
    temporary = path.with_suffix(path.suffix + '.tmp')
    torch.save(payload, temporary)
    os.replace(temporary, path)
    return path


def load_checkpoint(path: Union[str, Path], expected_model: Optional[ModelConfig] = None) -> Checkpoint:
    """Raises CheckpointError for unreadable files, unknown versions and config mismatches"""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint {path} does not exist")
    try:
        payload = torch.load(path, map_location='cpu', weights_only=False)
    except (OSError, RuntimeError, EOFError, ValueError, pickle.UnpicklingError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get('format_version') != CHECKPOINT_FORMAT_VERSION:
        version = payload.get('format_version') if isinstance(payload, dict) else None
        raise CheckpointError(f"Checkpoint {path} has format version {version}, expected {CHECKPOINT_FORMAT_VERSION}")

    run_config = RunConfig.from_dict(payload['config'])
    if expected_model is not None and expected_model != run_config.model:
        raise CheckpointError(
            f"Checkpoint {path} was trained with nf={run_config.model.nf}, "
            f"lstm_cells={run_config.model.head.lstm_cells}; requested nf={expected_model.nf}, "
            f"lstm_cells={expected_model.head.lstm_cells}"
        )

    model = AnomalyDetector(run_config.model)
    try:
        model.load_state_dict(payload['model_state'])
    except (RuntimeError, KeyError) as e:
        raise CheckpointError(f"Checkpoint {path} does not match its own config: {e}") from e
    return Checkpoint(
        model=model,
        run_config=run_config,
        optimizer_state=payload.get('optimizer_state'),
        step=payload.get('step', 0),
        epoch=payload.get('epoch', 0),
        numpy_rng_state=payload.get('numpy_rng_state'),
        torch_rng_state=payload.get('torch_rng_state'),
        history=payload.get('history') or {},
        recurrent_state=payload.get('recurrent_state'),
    )


# The loop

@dataclass
class TrainingSummary:
    output_dir: Path
    steps: int
    epochs: List[Dict[str, Any]]
    best_auc: Optional[float] = None
    best_epoch: Optional[int] = None
    final_auc: Optional[float] = None
    last_checkpoint: Optional[Path] = None
    best_checkpoint: Optional[Path] = None


class Trainer:
    """
    Runs epochs of ``steps_per_epoch`` SGD steps (default ceil(N / B)),
    writes ``metrics.csv`` (one row per step) and ``epochs.csv`` and keeps
    ``last.pt`` / ``best.pt`` checkpoints in the output directory.
    """

    def __init__(self, run_config: RunConfig, train_set: VideoDataset, output_dir: Union[str, Path],
                 evaluator: Optional[Callable[[AnomalyDetector], Optional[float]]] = None,
                 on_epoch_end: Optional[Callable[[Dict[str, Any]], None]] = None,
                 resume: Optional[Union[str, Path]] = None):
        self.run_config = run_config
        self.train_config = run_config.train
        self.train_set = train_set
        self.output_dir = Path(output_dir)
        self.evaluator = evaluator
        self.on_epoch_end = on_epoch_end

        self.rng = seed_everything(run_config.seed)
        self.model = build_model(run_config.model, run_config.seed)
        self.optimizer = build_optimizer(self.model, self.train_config)
        self.weights = self.train_config.class_weights or class_weights(train_set.label_counts())
        self.steps_per_epoch = self.train_config.steps_per_epoch or math.ceil(len(train_set) / self.train_config.batch_size)

        self.step = 0
        self.start_epoch = 1
        self.step_rows: List[Dict[str, Any]] = []
        self.epoch_rows: List[Dict[str, Any]] = []
        self.best_auc: Optional[float] = None
        self.best_epoch: Optional[int] = None
        self.state: Optional[RecurrentState] = None
        if resume:
            self._resume(resume)

    def _resume(self, path: Union[str, Path]) -> None:
        checkpoint = load_checkpoint(path, expected_model=self.run_config.model)
        self.model.load_state_dict(checkpoint.model.state_dict())
        if checkpoint.optimizer_state is not None:
            self.optimizer.load_state_dict(checkpoint.optimizer_state)
        if checkpoint.numpy_rng_state is not None:
            self.rng.bit_generator.state = checkpoint.numpy_rng_state
        if checkpoint.torch_rng_state is not None:
            torch.set_rng_state(checkpoint.torch_rng_state)
        if checkpoint.recurrent_state is not None:
            self.state = RecurrentState.from_dict(checkpoint.recurrent_state, self.run_config.model.head)
        self.step = checkpoint.step
        self.start_epoch = checkpoint.epoch + 1
        self.step_rows = list(checkpoint.history.get('steps', []))
        self.epoch_rows = list(checkpoint.history.get('epochs', []))
        for row in self.epoch_rows:
            self._track_best(row)
        logger.info(f"Resumed from {path} at epoch {checkpoint.epoch}, step {checkpoint.step}")

    def _track_best(self, row: Dict[str, Any]) -> bool:
        auc = row.get('auc')
        if auc is None or (isinstance(auc, float) and math.isnan(auc)):
            return False
        if self.best_auc is None or auc > self.best_auc:
            self.best_auc, self.best_epoch = auc, row['epoch']
            return True
        return False

    def _history(self) -> Dict[str, List[Dict[str, Any]]]:
        return {'steps': list(self.step_rows), 'epochs': list(self.epoch_rows)}

    def _write_tables(self) -> None:
        pd.DataFrame(self.step_rows, columns=METRIC_COLUMNS).to_csv(self.output_dir / 'metrics.csv', index=False)
        pd.DataFrame(self.epoch_rows, columns=EPOCH_COLUMNS).to_csv(self.output_dir / 'epochs.csv', index=False)

    def _should_evaluate(self, epoch: int) -> bool:
        return self.evaluator is not None and (
            epoch % self.train_config.eval_every == 0 or epoch == self.train_config.epochs
        )

    def fit(self) -> TrainingSummary:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        save_run_config(self.run_config, self.output_dir / 'config.yaml')
        logger.info(
            f"Training {self.run_config.name} for {self.train_config.epochs} epochs of {self.steps_per_epoch} steps "
            f"(nf={self.model.nf}, cells={self.run_config.model.head.lstm_cells}, weights={self.weights})"
        )
        last_path = self.output_dir / 'last.pt'
        best_path = None

        for epoch in range(self.start_epoch, self.train_config.epochs + 1):
            losses = []
            for _ in range(self.steps_per_epoch):
                batch = sample_batch(self.train_set, self.train_config, self.rng, self.run_config.model,
                                     dtype=next(self.model.parameters()).dtype)
                initial = self.state if self.train_config.carry_state else None
                metrics, state = train_step(self.model, self.optimizer, batch, self.weights, initial,
                                            grad_clip=self.train_config.grad_clip)
                if self.train_config.carry_state:
                    self.state = state
                self.step += 1
                losses.append(metrics.loss)
                self.step_rows.append({
                    'step': self.step,
                    'epoch': epoch,
                    'loss': metrics.loss,
                    'lr': self.optimizer.param_groups[0]['lr'],
                    'acc_normal': metrics.acc_normal,
                    'acc_anomaly': metrics.acc_anomaly,
                })
                logger.debug(f"step {self.step}: loss {metrics.loss:.6f}")

            auc = self.evaluator(self.model) if self._should_evaluate(epoch) else None
            row = {'epoch': epoch, 'mean_loss': float(np.mean(losses)), 'auc': auc}
            self.epoch_rows.append(row)
            improved = self._track_best(row)
            logger.info(
                f"Epoch {epoch}: mean loss {row['mean_loss']:.6f}" + (f", AUC {auc:.4f}" if auc is not None else "")
            )

            save_checkpoint(last_path, self.model, self.run_config, self.optimizer, self.step, epoch,
                            self.rng, self._history(), self.state)
            if improved:
                best_path = save_checkpoint(self.output_dir / 'best.pt', self.model, self.run_config,
                                            self.optimizer, self.step, epoch, self.rng, self._history(), self.state)
            self._write_tables()
            if self.on_epoch_end is not None:
                self.on_epoch_end(row)

        if best_path is None and (self.output_dir / 'best.pt').is_file():
            best_path = self.output_dir / 'best.pt'
        final_auc = self.epoch_rows[-1]['auc'] if self.epoch_rows else None
        return TrainingSummary(
            output_dir=self.output_dir,
            steps=self.step,
            epochs=list(self.epoch_rows),
            best_auc=self.best_auc,
            best_epoch=self.best_epoch,
            final_auc=final_auc,
            last_checkpoint=last_path if last_path.is_file() else None,
            best_checkpoint=best_path,
        )
