import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from anomaly.datasets import VideoDataset, frame_labels
from anomaly.exceptions import ConfigurationError, InfeasibleSpecError
from anomaly.synthetic import CUE_COLORS, SyntheticSpec, generate_synthetic, render_video, write_dataset

from .utils import TINY_SYNTHETIC, tiny_synthetic


class SyntheticSpecTests(SimpleTestCase):
    def test_from_dict_fills_defaults(self):
        spec = SyntheticSpec.from_dict(TINY_SYNTHETIC)
        self.assertEqual(spec, tiny_synthetic())
        self.assertEqual(spec.signal, 'appearance')

    def test_invalid_fields_are_configuration_errors(self):
        with self.assertRaises(ConfigurationError):
            SyntheticSpec.from_dict({**TINY_SYNTHETIC, 'signal': 'smell'})
        with self.assertRaises(ConfigurationError):
            SyntheticSpec.from_dict({**TINY_SYNTHETIC, 'min_window': 8, 'max_window': 4})

    def test_window_longer_than_video_is_infeasible(self):
        with self.assertRaises(InfeasibleSpecError):
            generate_synthetic(tiny_synthetic(min_window=10, max_window=20))

    def test_no_room_for_the_cue_is_infeasible(self):
        with self.assertRaises(InfeasibleSpecError):
            generate_synthetic(tiny_synthetic(long_range=True, min_cue_gap=10))


class RenderTests(SimpleTestCase):
    def test_same_seed_same_videos(self):
        first, second = generate_synthetic(tiny_synthetic()), generate_synthetic(tiny_synthetic())
        for a, b in zip(first, second):
            self.assertEqual(a.annotation, b.annotation)
            self.assertTrue(np.array_equal(a.frames, b.frames))
        other = generate_synthetic(tiny_synthetic(seed=1))
        self.assertFalse(all(np.array_equal(a.frames, b.frames) for a, b in zip(first, other)))

    def test_windows_respect_the_spec(self):
        spec = tiny_synthetic(num_videos=20)
        for video in generate_synthetic(spec):
            annotation = video.annotation
            length = annotation.anomaly_end - annotation.anomaly_start + 1
            self.assertTrue(spec.min_window <= length <= spec.max_window)
            self.assertGreaterEqual(annotation.anomaly_start, 1)
            self.assertLess(annotation.anomaly_end, spec.frames_per_video)
            self.assertEqual(video.frames.shape, (16, 16, 16, 3))
            self.assertEqual(int(frame_labels(annotation).sum()), length)

    def test_appearance_signal_changes_the_frames_inside_the_window(self):
        video = render_video(tiny_synthetic(), 0)
        annotation = video.annotation
        red = (video.frames[..., 0] > 200) & (video.frames[..., 1] < 60)
        per_frame = red.reshape(16, -1).any(axis=1)
        self.assertTrue(per_frame[annotation.anomaly_start:annotation.anomaly_end + 1].all())
        self.assertFalse(per_frame[:annotation.anomaly_start].any())

    def test_long_range_cue_precedes_the_window(self):
        spec = tiny_synthetic(num_videos=20, frames_per_video=32, long_range=True, min_cue_gap=6)
        cues_seen = set()
        for video in generate_synthetic(spec):
            start = video.annotation.anomaly_start
            self.assertGreaterEqual(video.cue_start, 0)
            self.assertGreaterEqual(start - (video.cue_start + spec.cue_length), spec.min_cue_gap)

            cue = video.frames[video.cue_start, 0, 0]
            self.assertIn(tuple(int(v) for v in cue), CUE_COLORS)
            cues_seen.add(tuple(int(v) for v in cue))
            # The corner patch is shown only while the cue is on
            after = video.frames[video.cue_start + spec.cue_length:, 0, 0]
            self.assertFalse((after == cue).all(axis=-1).any())
        self.assertEqual(cues_seen, set(CUE_COLORS))

    def test_cue_colours_alternate_between_videos(self):
        spec = tiny_synthetic(num_videos=8, frames_per_video=32, long_range=True, min_cue_gap=6)
        cues = [tuple(int(v) for v in video.frames[video.cue_start, 0, 0]) for video in generate_synthetic(spec)]
        self.assertEqual(cues, [CUE_COLORS[index % 2] for index in range(8)])


class WriteDatasetTests(SimpleTestCase):
    def test_written_dataset_reads_back(self):
        videos = generate_synthetic(tiny_synthetic(num_videos=2))
        with tempfile.TemporaryDirectory() as tmp:
            root = write_dataset(videos, Path(tmp) / 'synth')
            self.assertTrue((root / 'dataset' / 'train_split.txt').is_file())
            dataset = VideoDataset.from_directory(root, (16, 16), split='train')
            self.assertEqual([a.video_id for a in dataset.annotations], ['synth_0000', 'synth_0001'])
            for index, video in enumerate(videos):
                self.assertEqual(dataset.annotations[index], video.annotation)
                self.assertTrue(np.array_equal(dataset.frames(index), video.frames))
