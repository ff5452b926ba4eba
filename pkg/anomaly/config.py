"""
Run configuration: frozen dataclasses, YAML presets and overrides.

Raw YAML documents are validated with the DRF serializers in
``anomaly.serializers`` before they are turned into dataclasses, so every
``RunConfig`` in memory has already passed range and cross-field checks.
"""
import copy
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml
from django.conf import settings

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

PATCH_SIZE = (2, 4, 4)  # temporal, height, width
NUM_CLASSES = 2

# Kinetics/ImageNet channel statistics, fixed for reproducibility
PIXEL_MEAN = (0.485, 0.456, 0.406)
PIXEL_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class StmmConfig:
    nf: int = 3
    embed_dim: int = 128
    depths: Tuple[int, ...] = (2, 2, 18, 2)
    num_heads: Tuple[int, ...] = (4, 8, 16, 32)
    window_size: Tuple[int, int, int] = (2, 7, 7)
    mlp_ratio: float = 4.0
    patch_norm: bool = True
    relative_position_bias: bool = True

    @property
    def num_stages(self) -> int:
        return len(self.depths)

    def stage_dim(self, stage: int) -> int:
        return self.embed_dim * 2 ** stage

    @property
    def feature_dim(self) -> int:
        """Channel count of the last stage, i.e. the Reducer output width"""
        return self.stage_dim(self.num_stages - 1)


@dataclass(frozen=True)
class HeadConfig:
    input_dim: int = 1024
    lstm_cells: int = 2
    lstm_width: int = 1024
    dropout: float = 0.3
    num_classes: int = NUM_CLASSES


@dataclass(frozen=True)
class InputConfig:
    height: int = 240
    width: int = 320
    mean: Tuple[float, float, float] = PIXEL_MEAN
    std: Tuple[float, float, float] = PIXEL_STD

    @property
    def size(self) -> Tuple[int, int]:
        return self.height, self.width


@dataclass(frozen=True)
class ModelConfig:
    stmm: StmmConfig = field(default_factory=StmmConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    input: InputConfig = field(default_factory=InputConfig)

    def __post_init__(self):
        if self.head.input_dim != self.stmm.feature_dim:
            raise ConfigurationError(
                f"Head input width {self.head.input_dim} does not match "
                f"STMM feature width {self.stmm.feature_dim}"
            )

    @property
    def nf(self) -> int:
        return self.stmm.nf


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    vcl: int = 8
    learning_rate: float = 0.0001
    momentum: float = 0.9
    epochs: int = 1
    # None means "derive from the training set label counts"
    class_weights: Optional[Tuple[float, float]] = (0.3, 0.7)
    carry_state: bool = False
    steps_per_epoch: Optional[int] = None
    eval_every: int = 1
    # Max global gradient norm; None leaves gradients unclipped
    grad_clip: Optional[float] = None


@dataclass(frozen=True)
class DataConfig:
    train_root: Optional[str] = None
    eval_root: Optional[str] = None
    train_split: Optional[str] = None
    eval_split: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    name: str = 'run'
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output_dir: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> 'RunConfig':
        from .serializers import RunConfigSerializer

        serializer = RunConfigSerializer(data=raw)
        if not serializer.is_valid():
            raise ConfigurationError(f"Invalid run configuration: {serializer.errors}", serializer.errors)
        return build_run_config(serializer.validated_data)

    def with_overrides(self, overrides: Dict[str, Any]) -> 'RunConfig':
        return RunConfig.from_dict(apply_overrides(self.to_dict(), overrides))


def build_run_config(data: Dict[str, Any]) -> RunConfig:
    """Materialise validated serializer data as a RunConfig"""
    model = data['model']
    stmm = model['stmm']
    stmm_config = StmmConfig(
        nf=stmm['nf'],
        embed_dim=stmm['embed_dim'],
        depths=tuple(stmm['depths']),
        num_heads=tuple(stmm['num_heads']),
        window_size=tuple(stmm['window_size']),
        mlp_ratio=stmm['mlp_ratio'],
        patch_norm=stmm['patch_norm'],
        relative_position_bias=stmm['relative_position_bias'],
    )
    head = model['head']
    head_config = HeadConfig(
        input_dim=head.get('input_dim') or stmm_config.feature_dim,
        lstm_cells=head['lstm_cells'],
        lstm_width=head['lstm_width'],
        dropout=head['dropout'],
        num_classes=head['num_classes'],
    )
    image = model['input']
    input_config = InputConfig(
        height=image['height'],
        width=image['width'],
        mean=tuple(image['mean']),
        std=tuple(image['std']),
    )
    train = data['train']
    weights = train.get('class_weights')
    train_config = TrainConfig(
        batch_size=train['batch_size'],
        vcl=train['vcl'],
        learning_rate=train['learning_rate'],
        momentum=train['momentum'],
        epochs=train['epochs'],
        class_weights=tuple(weights) if weights else None,
        carry_state=train['carry_state'],
        steps_per_epoch=train.get('steps_per_epoch'),
        eval_every=train['eval_every'],
        grad_clip=train.get('grad_clip'),
    )
    data_config = DataConfig(**{key: data['data'].get(key) for key in ('train_root', 'eval_root', 'train_split', 'eval_split')})
    return RunConfig(
        name=data['name'],
        seed=data['seed'],
        model=ModelConfig(stmm=stmm_config, head=head_config, input=input_config),
        train=train_config,
        data=data_config,
        output_dir=data.get('output_dir'),
    )


def _plain(value):
    """Tuples to lists so the YAML dump stays a plain document"""
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def apply_overrides(raw: Dict[str, Any], overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Apply dotted-key overrides (``model.stmm.nf``) to a raw config document"""
    result = copy.deepcopy(raw)
    for dotted_key, value in (overrides or {}).items():
        if value is None:
            continue
        node = result
        *parents, leaf = dotted_key.split('.')
        for key in parents:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"Cannot override {dotted_key}: {key} is not a section")
        node[leaf] = value
    return result


def presets_dir() -> Path:
    return Path(settings.MOVAD['PRESETS_DIR'])


def resolve_config_path(name_or_path: Union[str, Path]) -> Path:
    """A path to an existing file, or the name of a bundled preset"""
    candidate = Path(name_or_path)
    if candidate.is_file():
        return candidate
    preset = presets_dir() / f"{name_or_path}.yaml"
    if preset.is_file():
        return preset
    raise ConfigurationError(f"No config file or preset named '{name_or_path}'")


def read_yaml(name_or_path: Union[str, Path]) -> Dict[str, Any]:
    path = resolve_config_path(name_or_path)
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            document = yaml.safe_load(handle) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Cannot parse {path}: {e}") from e
    if not isinstance(document, dict):
        raise ConfigurationError(f"{path} does not contain a mapping")
    logger.debug(f"Loaded config document from {path}")
    return document


def write_yaml(document: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        yaml.safe_dump(_plain(document), handle, sort_keys=False, default_flow_style=None)
    return path


def load_run_config(name_or_path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    return RunConfig.from_dict(apply_overrides(read_yaml(name_or_path), overrides))


def save_run_config(run_config: RunConfig, path: Union[str, Path]) -> Path:
    return write_yaml(run_config.to_dict(), path)

