import shutil
from pathlib import Path
from typing import Any, Dict, Optional

import cv2
import numpy as np
import torch

from anomaly.config import RunConfig, apply_overrides, write_yaml
from anomaly.datasets import parse_annotations
from anomaly.synthetic import SyntheticSpec, generate_synthetic, to_dataset
from anomaly.training import build_model

FIXTURE_ROOT = Path(__file__).resolve().parent / 'fixtures' / 'dota'

# Smallest model that still has shifted windows: 16x16 input -> 4x4 tokens in 2x2 windows
TINY_CONFIG: Dict[str, Any] = {
    'name': 'tiny',
    'seed': 0,
    'model': {
        'stmm': {'nf': 2, 'embed_dim': 8, 'depths': [2], 'num_heads': [2], 'window_size': [2, 2, 2], 'mlp_ratio': 2.0},
        'head': {'lstm_cells': 2, 'lstm_width': 8, 'dropout': 0.0},
        'input': {'height': 16, 'width': 16},
    },
    'train': {
        'batch_size': 2, 'vcl': 4, 'learning_rate': 0.05, 'momentum': 0.9, 'epochs': 1,
        'class_weights': None, 'steps_per_epoch': 2,
    },
}

TINY_SYNTHETIC: Dict[str, Any] = {
    'num_videos': 4,
    'frames_per_video': 16,
    'height': 16,
    'width': 16,
    'min_window': 4,
    'max_window': 6,
    'seed': 0,
}


def tiny_run_config(overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    return RunConfig.from_dict(apply_overrides(TINY_CONFIG, overrides))


def tiny_model(overrides: Optional[Dict[str, Any]] = None, seed: int = 0, dtype=torch.float64):
    model = build_model(tiny_run_config(overrides).model, seed).to(dtype)
    return model.eval()


def tiny_synthetic(**fields) -> SyntheticSpec:
    return SyntheticSpec(**{**TINY_SYNTHETIC, **fields})


def synthetic_dataset(**fields):
    return to_dataset(generate_synthetic(tiny_synthetic(**fields)))


def write_tiny_config(path, overrides: Optional[Dict[str, Any]] = None) -> Path:
    return write_yaml(apply_overrides(TINY_CONFIG, overrides), path)


def write_fixture_dataset(root, size=(16, 16), seed: int = 0) -> Path:
    """Copy the annotation fixture to ``root`` and render random PNG frames for every video"""
    root = Path(root)
    shutil.copytree(FIXTURE_ROOT, root, dirs_exist_ok=True)
    rng = np.random.default_rng(seed)
    for annotation in parse_annotations(root):
        images = root / 'frames' / annotation.video_id / 'images'
        images.mkdir(parents=True, exist_ok=True)
        for index in range(annotation.num_frames):
            frame = rng.integers(0, 256, size=(size[0], size[1], 3), dtype=np.uint8)
            cv2.imwrite(str(images / f"{index + 1:06d}.png"), frame)
    return root
