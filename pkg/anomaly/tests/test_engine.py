import tempfile
import threading
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase

from anomaly.config import PIXEL_MEAN, PIXEL_STD, InputConfig
from anomaly.engine import OnlineScorer, build_clip, preprocess_frame
from anomaly.exceptions import ConfigurationError, DimensionMismatchError, NonFinitePixelsError
from anomaly.ltmm import anomaly_score
from anomaly.synthetic import generate_synthetic
from anomaly.training import warmup_index

from .utils import tiny_model, tiny_run_config, tiny_synthetic


def random_frames(count, size=(16, 16), seed=0):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(count, size[0], size[1], 3), dtype=np.uint8)


def offline_replay(model, frames):
    """Score a whole video at once: every warm-up clip through the backbone, then the head unrolled"""
    images = np.stack([preprocess_frame(frame, model.config.input) for frame in frames])
    clips = torch.from_numpy(images)[warmup_index(len(frames), model.nf)]
    with torch.no_grad():
        features = model.features(clips)
        state = model.init_state(1)
        scores = []
        for t in range(len(frames)):
            logits, state = model.head(features[t:t + 1], state)
            scores.append(float(anomaly_score(logits)[0]))
    return scores


class PreprocessTests(SimpleTestCase):
    def test_uint8_frames_are_scaled_and_standardized(self):
        frame = np.full((8, 8, 3), 255, dtype=np.uint8)
        image = preprocess_frame(frame, InputConfig(height=8, width=8))
        expected = (1.0 - np.asarray(PIXEL_MEAN)) / np.asarray(PIXEL_STD)
        np.testing.assert_allclose(image[3, 5], expected)

    def test_frames_are_resized_to_the_input_size(self):
        image = preprocess_frame(random_frames(1, (24, 40))[0], InputConfig(height=16, width=20))
        self.assertEqual(image.shape, (16, 20, 3))

    def test_float_frames_are_taken_as_unit_range(self):
        frame = np.zeros((4, 4, 3))
        image = preprocess_frame(frame, InputConfig(height=4, width=4, mean=(0.5, 0.5, 0.5), std=(0.5, 0.5, 0.5)))
        np.testing.assert_allclose(image, -np.ones((4, 4, 3)))

    def test_malformed_frames_are_rejected(self):
        with self.assertRaises(DimensionMismatchError):
            preprocess_frame(np.zeros((8, 8), dtype=np.uint8), InputConfig(height=8, width=8))
        frame = np.zeros((8, 8, 3))
        frame[1, 1, 1] = np.nan
        with self.assertRaises(NonFinitePixelsError):
            preprocess_frame(frame, InputConfig(height=8, width=8))


class BuildClipTests(SimpleTestCase):
    def test_warm_up_replicates_the_earliest_frame(self):
        frames = [torch.full((2, 2, 3), float(i)) for i in range(2)]
        clip = build_clip(frames, 4)
        self.assertEqual([float(frame[0, 0, 0]) for frame in clip], [0.0, 0.0, 0.0, 1.0])

    def test_only_the_latest_frames_are_kept(self):
        frames = [torch.full((2, 2, 3), float(i)) for i in range(6)]
        self.assertEqual([float(frame[0, 0, 0]) for frame in build_clip(frames, 3)], [3.0, 4.0, 5.0])

    def test_matches_training_warm_up_index(self):
        frames = [torch.full((1, 1, 3), float(i)) for i in range(5)]
        index = warmup_index(5, 3)
        for t in range(5):
            clip = build_clip(frames[:t + 1], 3)
            self.assertEqual([float(frame[0, 0, 0]) for frame in clip], index[t].double().tolist())


class OnlineScorerTests(SimpleTestCase):
    def setUp(self):
        self.model = tiny_model({'model.stmm.nf': 3})
        self.scorer = OnlineScorer(self.model)
        self.frames = random_frames(7)

    def test_one_score_per_frame_in_unit_interval(self):
        scores = self.scorer.score_stream(self.frames)
        self.assertEqual(len(scores), 7)
        self.assertTrue(all(0.0 < score < 1.0 for score in scores))

    def test_streaming_matches_batch_unroll(self):
        expected = offline_replay(self.model, self.frames)
        np.testing.assert_allclose(self.scorer.score_stream(self.frames), expected, rtol=1e-9, atol=1e-12)

    def test_streaming_matches_offline_replay_on_synthetic_videos(self):
        for video in generate_synthetic(tiny_synthetic(num_videos=20)):
            streamed = self.scorer.score_stream(video.frames)
            np.testing.assert_allclose(streamed, offline_replay(self.model, video.frames), rtol=0, atol=1e-6)

    def test_editing_later_frames_leaves_earlier_scores_alone(self):
        edited = self.frames.copy()
        edited[4:] = random_frames(3, seed=5)
        self.assertEqual(self.scorer.score_stream(edited)[:4], self.scorer.score_stream(self.frames)[:4])

    def test_each_push_advances_the_session_once(self):
        session = self.scorer.open_session()
        for count, frame in enumerate(self.frames[:4], start=1):
            self.scorer.push_frame(session, frame)
            self.assertEqual(session.frames_seen, count)
            self.assertEqual(len(session.ring), min(count, 3))

    def test_interleaved_sessions_do_not_interfere(self):
        other = random_frames(7, seed=1)
        alone_a = self.scorer.score_stream(self.frames)
        alone_b = self.scorer.score_stream(other)

        a, b = self.scorer.open_session(), self.scorer.open_session()
        mixed_a, mixed_b = [], []
        for frame_a, frame_b in zip(self.frames, other):
            mixed_a.append(self.scorer.push_frame(a, frame_a))
            mixed_b.append(self.scorer.push_frame(b, frame_b))
        self.assertEqual(mixed_a, alone_a)
        self.assertEqual(mixed_b, alone_b)

    def test_concurrent_sessions_match_sequential_scores(self):
        streams = [random_frames(5, seed=seed) for seed in range(4)]
        expected = [self.scorer.score_stream(stream) for stream in streams]
        results = [None] * len(streams)

        def run(index):
            results[index] = self.scorer.score_stream(streams[index])

        threads = [threading.Thread(target=run, args=(index,)) for index in range(len(streams))]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        for got, want in zip(results, expected):
            np.testing.assert_allclose(got, want, rtol=1e-9)

    def test_reset_matches_a_fresh_session(self):
        session = self.scorer.open_session()
        self.scorer.score_stream(random_frames(5, seed=2), session)
        self.scorer.reset(session)
        self.assertEqual(session.frames_seen, 0)
        self.assertEqual(self.scorer.score_stream(self.frames, session), self.scorer.score_stream(self.frames))

    def test_dumped_session_resumes_exactly(self):
        straight = self.scorer.score_stream(self.frames)
        session = self.scorer.open_session()
        head = self.scorer.score_stream(self.frames[:4], session)
        with tempfile.TemporaryDirectory() as tmp:
            path = self.scorer.dump_state(session, Path(tmp) / 'session.pt')
            restored = self.scorer.load_session(path)
        self.assertEqual(restored.session_id, session.session_id)
        self.assertEqual(restored.frames_seen, 4)
        self.assertEqual(head + self.scorer.score_stream(self.frames[4:], restored), straight)

    def test_session_config_must_match_the_model(self):
        other = tiny_run_config({'model.head.lstm_cells': 1}).model
        with self.assertRaises(ConfigurationError):
            self.scorer.open_session(other)


class MemoryReachTests(SimpleTestCase):
    """What the last score can depend on: the latest NF frames, plus the whole past through the cells"""

    def histories(self):
        shared = random_frames(3, seed=10)
        return np.concatenate([random_frames(5, seed=11), shared]), np.concatenate([random_frames(5, seed=12), shared])

    def test_without_cells_only_the_latest_clip_matters(self):
        scorer = OnlineScorer(tiny_model({'model.stmm.nf': 3, 'model.head.lstm_cells': 0}))
        first, second = self.histories()
        self.assertLess(abs(scorer.score_stream(first)[-1] - scorer.score_stream(second)[-1]), 1e-9)

    def test_recurrent_cells_remember_earlier_frames(self):
        scorer = OnlineScorer(tiny_model({'model.stmm.nf': 3, 'model.head.lstm_cells': 2}))
        first, second = self.histories()
        self.assertGreater(abs(scorer.score_stream(first)[-1] - scorer.score_stream(second)[-1]), 1e-6)
