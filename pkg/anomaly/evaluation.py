"""
Frame-level AUC evaluation.

Every video is streamed through its own fresh session, exactly as it would be
scored online. Scores and labels are then pooled over all frames for the
overall AUC; per-category AUCs pool only the videos of one (category, ego)
bucket.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from scipy.stats import rankdata

from .datasets import CATEGORIES, VideoDataset
from .engine import OnlineScorer
from .exceptions import DimensionMismatchError, EmptyDatasetError, SingleClassError
from .network import AnomalyDetector

logger = logging.getLogger(__name__)

Bucket = Tuple[str, bool]


def frame_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    ROC AUC as P(anomalous score > normal score) + 0.5 * P(tie), computed
    from mid-ranks in O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise DimensionMismatchError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise SingleClassError("AUC is undefined unless both normal and anomalous frames are present")
    ranks = rankdata(scores, method='average')
    return float((ranks[labels].sum() - positives * (positives + 1) / 2) / (positives * negatives))


@dataclass
class VideoScores:
    video_id: str
    bucket: Bucket
    scores: np.ndarray
    labels: np.ndarray


@dataclass
class EvalResult:
    overall_auc: float
    per_video_mean_auc: Optional[float]
    per_class: Dict[str, Tuple[Optional[float], Optional[float]]]  # category -> (ego AUC, non-ego AUC)
    num_frames: int
    num_videos: int
    exclude_warmup: bool
    buckets: Dict[Bucket, List[str]] = field(default_factory=dict)
    failed_videos: List[Dict[str, str]] = field(default_factory=list)
    videos: List[VideoScores] = field(default_factory=list, repr=False)

    def per_class_rows(self) -> List[Dict]:
        rows = []
        for code, (ego_auc, nonego_auc) in self.per_class.items():
            rows.append({
                'category': code,
                'category_id': CATEGORIES[code][0],
                'ego_auc': ego_auc,
                'nonego_auc': nonego_auc,
                'ego_videos': len(self.buckets.get((code, True), [])),
                'nonego_videos': len(self.buckets.get((code, False), [])),
            })
        return rows

    def per_class_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.per_class_rows(),
            columns=['category', 'category_id', 'ego_auc', 'nonego_auc', 'ego_videos', 'nonego_videos'],
        )

    def to_dict(self) -> Dict:
        return {
            'overall_auc': self.overall_auc,
            'per_video_mean_auc': self.per_video_mean_auc,
            'num_frames': self.num_frames,
            'num_videos': self.num_videos,
            'exclude_warmup': self.exclude_warmup,
            'per_class': self.per_class_rows(),
            'failed_videos': list(self.failed_videos),
        }


def _auc_or_none(scores: np.ndarray, labels: np.ndarray) -> Optional[float]:
    try:
        return frame_auc(scores, labels)
    except SingleClassError:
        return None


def summarize(videos: List[VideoScores], nf: int, exclude_warmup: bool = False,
              failed_videos: Optional[List[Dict[str, str]]] = None) -> EvalResult:
    """Pool per-video scores into an EvalResult; warm-up frames (index < NF - 1) optionally dropped"""
    if not videos:
        raise EmptyDatasetError("No video could be scored")
    skip = nf - 1 if exclude_warmup else 0
    kept = [(video, video.scores[skip:], video.labels[skip:]) for video in videos]

    overall = frame_auc(np.concatenate([s for _, s, _ in kept]), np.concatenate([l for _, _, l in kept]))
    video_aucs = [auc for auc in (_auc_or_none(s, l) for _, s, l in kept) if auc is not None]

    buckets: Dict[Bucket, List[str]] = {}
    for video in videos:
        buckets.setdefault(video.bucket, []).append(video.video_id)

    per_class = {}
    for code in CATEGORIES:
        pair = []
        for ego in (True, False):
            members = [(s, l) for video, s, l in kept if video.bucket == (code, ego)]
            if not members:
                pair.append(None)
                continue
            pair.append(_auc_or_none(np.concatenate([s for s, _ in members]), np.concatenate([l for _, l in members])))
        if (code, True) in buckets or (code, False) in buckets:
            per_class[code] = tuple(pair)

    return EvalResult(
        overall_auc=overall,
        per_video_mean_auc=float(np.mean(video_aucs)) if video_aucs else None,
        per_class=per_class,
        num_frames=int(sum(len(s) for _, s, _ in kept)),
        num_videos=len(videos),
        exclude_warmup=exclude_warmup,
        buckets=buckets,
        failed_videos=list(failed_videos or []),
        videos=videos,
    )


def evaluate(model: AnomalyDetector, dataset: VideoDataset, exclude_warmup: bool = False,
             workers: int = 1, dtype: Optional[torch.dtype] = None) -> EvalResult:
    """
    Score every video of ``dataset`` online and pool the results. A video
    that fails to decode or score is logged, reported in ``failed_videos``
    and left out; the others are still evaluated.
    """
    scorer = OnlineScorer(model, dtype=dtype)

    def score_video(index: int):
        video = dataset[index]
        try:
            scores = np.asarray(scorer.score_stream(dataset.frames(index)), dtype=np.float64)
            return VideoScores(video.video_id, video.annotation.bucket, scores, dataset.labels(index)), None
        except Exception as e:
            logger.error(f"Failed to score video {video.video_id}: {e}")
            return None, {'video': video.video_id, 'error': str(e)}

    indices = range(len(dataset))
    if workers > 1:
        # Sessions are independent; map keeps the dataset order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(score_video, indices))
    else:
        outcomes = [score_video(index) for index in indices]

    videos = [scored for scored, _ in outcomes if scored is not None]
    failed = [failure for _, failure in outcomes if failure is not None]
    result = summarize(videos, model.nf, exclude_warmup, failed)
    logger.info(
        f"Evaluated {result.num_videos} videos ({result.num_frames} frames): AUC {result.overall_auc:.4f}, "
        f"{len(failed)} failed"
    )
    return result
