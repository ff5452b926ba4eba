"""
Online scoring engine.

A Session holds everything one video stream needs between frames: the ring
of the NF most recent preprocessed frames, the recurrent state and a frame
counter. The model itself is shared read-only by every session.
"""
import logging
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Deque, Iterable, List, Optional, Sequence, Union

import cv2
import numpy as np
import torch

from .config import InputConfig, ModelConfig
from .exceptions import ConfigurationError, DimensionMismatchError, NonFinitePixelsError
from .ltmm import RecurrentState, anomaly_score
from .network import AnomalyDetector

logger = logging.getLogger(__name__)


def preprocess_frame(frame: np.ndarray, input_config: InputConfig) -> np.ndarray:
    """
    Raw RGB frame -> standardized float64 array [H, W, 3] at the configured size.

    uint8 frames are scaled to [0, 1]; float frames are taken to be in
    [0, 1] already. Frames already at the target size are not resampled.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionMismatchError(f"Expected an RGB frame of shape [H, W, 3], got {frame.shape}")
    if frame.dtype == np.uint8:
        image = frame.astype(np.float64) / 255.0
    else:
        image = frame.astype(np.float64)
        if not np.isfinite(image).all():
            raise NonFinitePixelsError("Frame contains NaN or infinite pixel values")

    height, width = input_config.size
    if image.shape[:2] != (height, width):
        image = cv2.resize(image, (width, height), interpolation=cv2.INTER_LINEAR)

    mean = np.asarray(input_config.mean, dtype=np.float64)
    std = np.asarray(input_config.std, dtype=np.float64)
    return (image - mean) / std


def build_clip(frames: Sequence[torch.Tensor], nf: int) -> torch.Tensor:
    """Stack the last ``nf`` frames, replicating the earliest one while fewer are available"""
    if not frames:
        raise ValueError("Cannot build a clip from no frames")
    frames = list(frames)[-nf:]
    padding = [frames[0]] * (nf - len(frames))
    return torch.stack(padding + frames, dim=0)


@dataclass
class Session:
    nf: int
    state: RecurrentState
    config: ModelConfig
    session_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    ring: Deque[torch.Tensor] = field(default=None)
    frames_seen: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if self.ring is None:
            self.ring = deque(maxlen=self.nf)


class OnlineScorer:
    """Streams frames through a trained AnomalyDetector, one score per frame"""

    def __init__(self, model: AnomalyDetector, dtype: Optional[torch.dtype] = None, device: Optional[str] = None):
        self.device = torch.device(device) if device else next(model.parameters()).device
        self.dtype = dtype or next(model.parameters()).dtype
        self.model = model.to(device=self.device, dtype=self.dtype).eval()
        self.config = model.config

    def open_session(self, config: Optional[ModelConfig] = None) -> Session:
        config = config or self.config
        if config.stmm != self.config.stmm or config.head != self.config.head:
            raise ConfigurationError(
                f"Session config (nf={config.nf}, cells={config.head.lstm_cells}) does not match the loaded model "
                f"(nf={self.config.nf}, cells={self.config.head.lstm_cells})"
            )
        state = RecurrentState.zeros(1, config.head, dtype=self.dtype, device=self.device)
        session = Session(nf=config.nf, state=state, config=config)
        logger.debug(f"Opened session {session.session_id}")
        return session

    def reset(self, session: Session) -> None:
        with session.lock:
            session.ring.clear()
            session.state = RecurrentState.zeros(1, session.config.head, dtype=self.dtype, device=self.device)
            session.frames_seen = 0

    def push_frame(self, session: Session, frame: np.ndarray) -> float:
        """Score one new frame; advances the session state exactly once"""
        image = preprocess_frame(frame, session.config.input)
        tensor = torch.from_numpy(image).to(device=self.device, dtype=self.dtype)
        with session.lock:
            session.ring.append(tensor)
            clip = build_clip(session.ring, session.nf).unsqueeze(0)
            with torch.no_grad():
                logits, state = self.model(clip, session.state)
            session.state = state
            session.frames_seen += 1
            return float(anomaly_score(logits)[0])

    def score_stream(self, frames: Iterable[np.ndarray], session: Optional[Session] = None) -> List[float]:
        session = session or self.open_session()
        return [self.push_frame(session, frame) for frame in frames]

    def dump_state(self, session: Session, path: Union[str, Path]) -> Path:
        """Snapshot a session so scoring can resume from this frame"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with session.lock:
            torch.save({
                'session_id': session.session_id,
                'frames_seen': session.frames_seen,
                'ring': [frame.detach().cpu().clone() for frame in session.ring],
                'state': session.state.to_dict(),
            }, path)
        return path

    def load_session(self, path: Union[str, Path]) -> Session:
        raw = torch.load(path, map_location='cpu')
        state = RecurrentState.from_dict(raw['state'], self.config.head)
        state = RecurrentState(tuple(
            (h.to(device=self.device, dtype=self.dtype), c.to(device=self.device, dtype=self.dtype))
            for h, c in state.layers
        ))
        session = Session(nf=self.config.nf, state=state, config=self.config, session_id=raw['session_id'])
        for frame in raw['ring']:
            session.ring.append(frame.to(device=self.device, dtype=self.dtype))
        session.frames_seen = raw['frames_seen']
        return session
