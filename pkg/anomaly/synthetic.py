"""
Procedural anomaly videos for desk-scale experiments.

Every video is a circle bouncing over a smooth random texture. Inside the
anomaly window one signal switches on:

* ``appearance``: the circle changes colour;
* ``motion``: the circle jumps around its trajectory erratically.

With ``long_range`` set, a coloured cue patch is flashed once, well before
the window, and the circle takes the cue colour only during the window. The
normal colour is the other one and the cue colour alternates between videos,
so across the dataset both colours occur in normal and anomalous frames alike, and telling them apart needs a memory of
the cue that is older than any short clip.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import cv2
import numpy as np

from .datasets import CATEGORIES, AnnotatedVideo, ArraySource, VideoAnnotation, VideoDataset, write_annotation
from .exceptions import ConfigurationError, InfeasibleSpecError

logger = logging.getLogger(__name__)

NORMAL_COLOR = (40, 200, 40)
ANOMALY_COLOR = (220, 40, 40)
# Long-range mode: one of these is the cue (and anomaly) colour, the other the normal colour
CUE_COLORS = ((220, 40, 40), (40, 80, 220))


@dataclass(frozen=True)
class SyntheticSpec:
    num_videos: int = 8
    frames_per_video: int = 32
    height: int = 32
    width: int = 32
    signal: str = 'appearance'
    long_range: bool = False
    min_window: int = 6
    max_window: int = 12
    cue_length: int = 2
    min_cue_gap: int = 8
    ego_fraction: float = 0.5
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> 'SyntheticSpec':
        from .serializers import SyntheticSpecSerializer

        serializer = SyntheticSpecSerializer(data=raw)
        if not serializer.is_valid():
            raise ConfigurationError(f"Invalid synthetic spec: {serializer.errors}", serializer.errors)
        return cls(**serializer.validated_data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def earliest_window_start(self) -> int:
        # At least one normal frame before the window; room for cue and gap in long-range mode
        return self.cue_length + self.min_cue_gap if self.long_range else 1

    def check_feasible(self) -> None:
        if self.min_window > self.max_window:
            raise InfeasibleSpecError(f"min_window {self.min_window} exceeds max_window {self.max_window}")
        latest_start = self.frames_per_video - self.max_window
        if latest_start < self.earliest_window_start():
            raise InfeasibleSpecError(
                f"A {self.max_window}-frame window cannot start at or after frame "
                f"{self.earliest_window_start()} in a {self.frames_per_video}-frame video"
            )


@dataclass
class SyntheticVideo:
    annotation: VideoAnnotation
    frames: np.ndarray  # uint8 [F, H, W, 3]
    cue_start: int = -1  # -1 when the video has no cue


def _background(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    coarse = rng.integers(0, 256, size=(max(2, height // 4), max(2, width // 4), 3)).astype(np.uint8)
    texture = cv2.resize(coarse, (width, height), interpolation=cv2.INTER_LINEAR)
    # Squeeze into a mid-grey band so the shape colours stay distinct
    return (60 + texture.astype(np.float64) * (80 / 255)).astype(np.uint8)


def render_video(spec: SyntheticSpec, index: int) -> SyntheticVideo:
    """One video, fully determined by (spec.seed, index)"""
    rng = np.random.default_rng([spec.seed, index])
    frames_count, height, width = spec.frames_per_video, spec.height, spec.width

    window = int(rng.integers(spec.min_window, spec.max_window + 1))
    start = int(rng.integers(spec.earliest_window_start(), frames_count - window + 1))
    end = start + window - 1
    category = list(CATEGORIES)[int(rng.integers(0, len(CATEGORIES)))]
    ego = bool(rng.random() < spec.ego_fraction)

    cue_start = -1
    normal_color, anomaly_color = NORMAL_COLOR, ANOMALY_COLOR
    if spec.long_range:
        # Alternating cues keep both colours equally often normal and anomalous
        cue = index % 2
        anomaly_color, normal_color = CUE_COLORS[cue], CUE_COLORS[1 - cue]
        cue_start = int(rng.integers(0, start - spec.min_cue_gap - spec.cue_length + 1))

    background = _background(rng, height, width)
    radius = max(2, min(height, width) // 5)
    position = np.array([rng.uniform(radius, width - radius), rng.uniform(radius, height - radius)])
    velocity = rng.uniform(-1.5, 1.5, size=2)
    jitter = rng.integers(-2 * radius, 2 * radius + 1, size=(frames_count, 2))
    cue_size = max(2, min(height, width) // 4)

    frames = np.empty((frames_count, height, width, 3), dtype=np.uint8)
    for t in range(frames_count):
        position += velocity
        for axis, limit in enumerate((width, height)):
            if position[axis] < radius or position[axis] > limit - radius:
                velocity[axis] = -velocity[axis]
                position[axis] = np.clip(position[axis], radius, limit - radius)

        anomalous = start <= t <= end
        center = position.copy()
        if anomalous and spec.signal == 'motion':
            center = np.clip(center + jitter[t], radius, [width - radius, height - radius])
        color = anomaly_color if anomalous and (spec.signal == 'appearance' or spec.long_range) else normal_color

        frame = background.copy()
        cv2.circle(frame, (int(round(center[0])), int(round(center[1]))), radius, color, thickness=-1)
        if spec.long_range and cue_start <= t < cue_start + spec.cue_length:
            frame[:cue_size, :cue_size] = anomaly_color
        frames[t] = frame

    annotation = VideoAnnotation(
        video_id=f"synth_{index:04d}",
        num_frames=frames_count,
        anomaly_start=start,
        anomaly_end=end,
        category=category,
        ego_involved=ego,
        accident_id=CATEGORIES[category][0],
    )
    return SyntheticVideo(annotation=annotation, frames=frames, cue_start=cue_start)


def generate_synthetic(spec: SyntheticSpec) -> List[SyntheticVideo]:
    spec.check_feasible()
    videos = [render_video(spec, index) for index in range(spec.num_videos)]
    logger.info(
        f"Generated {len(videos)} synthetic videos ({spec.signal}, long_range={spec.long_range}, seed={spec.seed})"
    )
    return videos


def to_dataset(videos: List[SyntheticVideo], size: Tuple[int, int] = None) -> VideoDataset:
    """In-memory VideoDataset over generated videos"""
    if size is None:
        size = videos[0].frames.shape[1:3]
    return VideoDataset([AnnotatedVideo(video.annotation, ArraySource(video.frames)) for video in videos], size)


def write_dataset(videos: List[SyntheticVideo], root: Union[str, Path]) -> Path:
    """Write DoTA layout: PNG frames, one JSON record per video and a train split listing them all"""
    root = Path(root)
    for video in videos:
        images = root / 'frames' / video.annotation.video_id / 'images'
        images.mkdir(parents=True, exist_ok=True)
        for t, frame in enumerate(video.frames):
            cv2.imwrite(str(images / f"{t + 1:06d}.png"), cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
        write_annotation(video.annotation, root)

    split_dir = root / 'dataset'
    split_dir.mkdir(parents=True, exist_ok=True)
    with open(split_dir / 'train_split.txt', 'w', encoding='utf-8') as handle:
        handle.writelines(f"{video.annotation.video_id}\n" for video in videos)
    logger.info(f"Wrote {len(videos)} videos to {root}")
    return root
