"""
DoTA-layout datasets.

A dataset root looks like the DoTA release::

    <root>/annotations/<video>.json        one metadata record per video
    <root>/frames/<video>/images/*.jpg     decoded frames (or <root>/frames/<video>/*.png)
    <root>/dataset/train_split.txt         optional lists of video names
    <root>/dataset/val_split.txt

The synthetic generator writes the same layout, so both paths go through
``parse_annotations`` and ``VideoDataset``.
"""
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence, Tuple, Union

import cv2
import numpy as np

from .exceptions import AnnotationError, DecodeError, EmptyDatasetError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = ('.jpg', '.jpeg', '.png', '.bmp')

# code -> (id, DoTA class names)
CATEGORIES: Dict[str, Tuple[int, Tuple[str, ...]]] = {
    'ST': (1, ('start_stop_or_stationary',)),
    'AH': (2, ('moving_ahead_or_waiting',)),
    'LA': (3, ('lateral',)),
    'OC': (4, ('oncoming',)),
    'TC': (5, ('turning',)),
    'VP': (6, ('pedestrian',)),
    'VO': (7, ('obstacle',)),
    'OO': (8, ('leave_to_left', 'leave_to_right')),
    'UK': (9, ('unknown',)),
}
CLASS_NAME_TO_CODE = {name: code for code, (_, names) in CATEGORIES.items() for name in names}


def parse_category(anomaly_class: str) -> Tuple[str, bool]:
    """
    Category code and ego flag from a DoTA class string.

    Accepts DoTA's ``"ego: turning"`` / ``"other: turning"`` form as well as
    bare codes, where a trailing ``*`` marks a non-ego category (``"TC*"``).
    """
    text = anomaly_class.strip()
    if ':' in text:
        actor, name = [part.strip() for part in text.split(':', 1)]
        code = CLASS_NAME_TO_CODE.get(name.lower())
        if code is None:
            raise AnnotationError(f"Unknown anomaly class '{name}'")
        return code, actor.lower() == 'ego'
    code = text.rstrip('*').upper()
    if code not in CATEGORIES:
        raise AnnotationError(f"Unknown anomaly category '{anomaly_class}'")
    return code, not text.endswith('*')


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    num_frames: int
    anomaly_start: int
    anomaly_end: int  # inclusive
    category: str
    ego_involved: bool
    accident_id: Optional[int] = None

    @property
    def category_id(self) -> int:
        return CATEGORIES[self.category][0]

    @property
    def bucket(self) -> Tuple[str, bool]:
        return self.category, self.ego_involved

    @property
    def anomaly_class(self) -> str:
        actor = 'ego' if self.ego_involved else 'other'
        return f"{actor}: {CATEGORIES[self.category][1][0]}"

    def to_record(self) -> Dict:
        """DoTA metadata record"""
        return {
            'video_name': self.video_id,
            'num_frames': self.num_frames,
            'anomaly_start': self.anomaly_start,
            'anomaly_end': self.anomaly_end,
            'anomaly_class': self.anomaly_class,
            'ego_involve': self.ego_involved,
            'accident_id': self.accident_id,
        }

    @classmethod
    def from_record(cls, record: Dict) -> 'VideoAnnotation':
        from .serializers import VideoAnnotationSerializer

        serializer = VideoAnnotationSerializer(data=record)
        if not serializer.is_valid():
            raise AnnotationError(f"Invalid annotation record: {serializer.errors}")
        data = serializer.validated_data
        category, ego = parse_category(data['anomaly_class'])
        if data.get('ego_involve') is not None:
            ego = data['ego_involve']
        return cls(
            video_id=data['video_name'],
            num_frames=data['num_frames'],
            anomaly_start=data['anomaly_start'],
            anomaly_end=data['anomaly_end'],
            category=category,
            ego_involved=ego,
            accident_id=data.get('accident_id'),
        )


def frame_labels(annotation: VideoAnnotation) -> np.ndarray:
    """1 on frames anomaly_start..anomaly_end (both inclusive), 0 elsewhere"""
    labels = np.zeros(annotation.num_frames, dtype=np.int64)
    labels[annotation.anomaly_start:annotation.anomaly_end + 1] = 1
    return labels


def read_split(root: Union[str, Path], split: Optional[str]) -> Optional[List[str]]:
    """Video names listed by a split name (``train``, ``val``) or a split file path"""
    if not split:
        return None
    candidate = Path(split)
    if not candidate.is_file():
        candidate = Path(root) / 'dataset' / f"{split}_split.txt"
    if not candidate.is_file():
        raise AnnotationError(f"No split file for '{split}' under {root}")
    with open(candidate, 'r', encoding='utf-8') as handle:
        return [line.strip() for line in handle if line.strip()]


def parse_annotations(root: Union[str, Path], split: Optional[str] = None) -> List[VideoAnnotation]:
    """
    Read every ``annotations/*.json`` record under ``root``.

    Unreadable or invalid records are logged and skipped; the result is
    sorted by video id.
    """
    annotations_dir = Path(root) / 'annotations'
    if not annotations_dir.is_dir():
        raise AnnotationError(f"{root} has no annotations directory")

    wanted = read_split(root, split)
    annotations = []
    skipped = 0
    for path in sorted(annotations_dir.glob('*.json')):
        try:
            with open(path, 'r', encoding='utf-8') as handle:
                record = json.load(handle)
            annotation = VideoAnnotation.from_record(record)
        except (OSError, ValueError, AnnotationError) as e:
            logger.warning(f"Skipping annotation {path.name}: {e}")
            skipped += 1
            continue
        if wanted is not None and annotation.video_id not in wanted:
            continue
        annotations.append(annotation)

    annotations.sort(key=lambda annotation: annotation.video_id)
    logger.info(f"Parsed {len(annotations)} annotations from {annotations_dir} ({skipped} skipped)")
    return annotations


def write_annotation(annotation: VideoAnnotation, root: Union[str, Path]) -> Path:
    path = Path(root) / 'annotations' / f"{annotation.video_id}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(annotation.to_record(), handle, indent=2)
    return path


# Frame sources

class FrameSource(Protocol):
    def count(self) -> int:
        ...

    def get_frame(self, index: int) -> np.ndarray:
        """RGB uint8 frame [H, W, 3]"""
        ...


def _numeric_key(path: Path):
    numbers = re.findall(r'\d+', path.stem)
    return (int(numbers[-1]) if numbers else -1, path.name)


class ImageDirectorySource:
    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise DecodeError(f"Frame directory {self.directory} does not exist")
        self.paths = sorted(
            (path for path in self.directory.iterdir() if path.suffix.lower() in IMAGE_SUFFIXES),
            key=_numeric_key,
        )

    def count(self) -> int:
        return len(self.paths)

    def get_frame(self, index: int) -> np.ndarray:
        image = cv2.imread(str(self.paths[index]), cv2.IMREAD_COLOR)
        if image is None:
            raise DecodeError(f"Cannot decode {self.paths[index]}", frame_index=index)
        return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)


class VideoFileSource:
    """Video container decoded once through OpenCV"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        capture = cv2.VideoCapture(str(self.path))
        if not capture.isOpened():
            raise DecodeError(f"Cannot open video {self.path}")
        self.frames = []
        try:
            while True:
                ok, image = capture.read()
                if not ok:
                    break
                self.frames.append(cv2.cvtColor(image, cv2.COLOR_BGR2RGB))
        finally:
            capture.release()
        if not self.frames:
            raise DecodeError(f"No decodable frames in {self.path}", frame_index=0)

    def count(self) -> int:
        return len(self.frames)

    def get_frame(self, index: int) -> np.ndarray:
        return self.frames[index]


class ArraySource:
    def __init__(self, frames: np.ndarray):
        self.frames = np.asarray(frames)

    def count(self) -> int:
        return len(self.frames)

    def get_frame(self, index: int) -> np.ndarray:
        return self.frames[index]


def open_source(path: Union[str, Path]) -> FrameSource:
    """An image directory (``images/`` subdirectory honoured) or a video file"""
    path = Path(path)
    if path.is_dir():
        images = path / 'images'
        return ImageDirectorySource(images if images.is_dir() else path)
    if path.is_file():
        return VideoFileSource(path)
    raise DecodeError(f"{path} is neither a frame directory nor a video file")


def resize_frame(frame: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    height, width = size
    if frame.shape[:2] == (height, width):
        return frame
    return cv2.resize(frame, (width, height), interpolation=cv2.INTER_LINEAR)


def load_frames(source: Union[FrameSource, str, Path], size: Tuple[int, int]) -> np.ndarray:
    """All frames of a source, in order, resized to ``size`` (H, W)"""
    if isinstance(source, (str, Path)):
        source = open_source(source)
    frames = []
    for index in range(source.count()):
        try:
            frame = source.get_frame(index)
        except DecodeError:
            raise
        except Exception as e:
            raise DecodeError(f"Failed to read frame: {e}", frame_index=index) from e
        frames.append(resize_frame(frame, size))
    if not frames:
        raise DecodeError("Source has no frames")
    return np.stack(frames)


# Datasets

@dataclass
class AnnotatedVideo:
    annotation: VideoAnnotation
    source: FrameSource

    @property
    def video_id(self) -> str:
        return self.annotation.video_id

    @property
    def labels(self) -> np.ndarray:
        return frame_labels(self.annotation)


def frames_directory(root: Union[str, Path], video_id: str) -> Path:
    root = Path(root)
    for candidate in (root / 'frames' / video_id / 'images', root / 'frames' / video_id, root / video_id):
        if candidate.is_dir():
            return candidate
    raise DecodeError(f"No frames found for video {video_id} under {root}")


class VideoDataset:
    """Annotated videos with lazily decoded, resized and cached frames"""

    def __init__(self, videos: Sequence[AnnotatedVideo], size: Tuple[int, int], cache: bool = True):
        if not videos:
            raise EmptyDatasetError("Dataset has no videos")
        self.videos = list(videos)
        self.size = tuple(size)
        self.cache = cache
        self._frames: Dict[int, np.ndarray] = {}

    @classmethod
    def from_directory(cls, root: Union[str, Path], size: Tuple[int, int],
                       split: Optional[str] = None, cache: bool = True) -> 'VideoDataset':
        videos = []
        for annotation in parse_annotations(root, split):
            try:
                source = ImageDirectorySource(frames_directory(root, annotation.video_id))
            except DecodeError as e:
                logger.warning(f"Skipping video {annotation.video_id}: {e}")
                continue
            videos.append(AnnotatedVideo(annotation, source))
        if not videos:
            raise EmptyDatasetError(f"No usable videos under {root}")
        return cls(videos, size, cache)

    def __len__(self) -> int:
        return len(self.videos)

    def __getitem__(self, index: int) -> AnnotatedVideo:
        return self.videos[index]

    @property
    def annotations(self) -> List[VideoAnnotation]:
        return [video.annotation for video in self.videos]

    def frames(self, index: int) -> np.ndarray:
        """uint8 frames [N, H, W, 3], N equal to the annotation's frame count"""
        if index in self._frames:
            return self._frames[index]
        video = self.videos[index]
        frames = load_frames(video.source, self.size)
        expected = video.annotation.num_frames
        if len(frames) != expected:
            raise DecodeError(
                f"Video {video.video_id} has {len(frames)} frames, its annotation says {expected}",
                frame_index=min(len(frames), expected),
            )
        if self.cache:
            self._frames[index] = frames
        return frames

    def labels(self, index: int) -> np.ndarray:
        return self.videos[index].labels

    def label_counts(self) -> Tuple[int, int]:
        """(normal, anomalous) frame counts over the whole dataset"""
        anomalous = sum(int(self.labels(index).sum()) for index in range(len(self)))
        total = sum(video.annotation.num_frames for video in self.videos)
        return total - anomalous, anomalous
