"""
Desk-scale training experiments on the shipped presets. Minutes on a CPU;
enable with MOVAD_RUN_SLOW_TESTS=True.
"""
import statistics
import tempfile
import unittest
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase, tag

from anomaly.ablation import load_grid, run_ablation
from anomaly.config import load_run_config, read_yaml
from anomaly.evaluation import evaluate
from anomaly.synthetic import SyntheticSpec, generate_synthetic, to_dataset
from anomaly.training import Trainer

slow = unittest.skipUnless(settings.MOVAD['RUN_SLOW_TESTS'], 'set MOVAD_RUN_SLOW_TESTS=True to run')


def preset_dataset(name, size):
    return to_dataset(generate_synthetic(SyntheticSpec.from_dict(read_yaml(name))), size)


def fit_on_train_set(run_config, dataset):
    with tempfile.TemporaryDirectory() as tmp:
        return Trainer(run_config, dataset, Path(tmp), evaluator=lambda model: evaluate(model, dataset).overall_auc).fit()


@tag('slow')
@slow
class AppearanceTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.config = load_run_config('toy')
        cls.dataset = preset_dataset('synthetic_toy', cls.config.model.input.size)

    def test_toy_model_fits_eight_videos_within_500_steps(self):
        self.assertEqual((len(self.dataset), self.config.model.stmm.embed_dim), (8, 32))
        summary = fit_on_train_set(self.config, self.dataset)
        self.assertLessEqual(summary.steps, 500)
        self.assertGreaterEqual(summary.best_auc, 0.95)

    def test_appearance_anomalies_need_no_recurrent_cells(self):
        summary = fit_on_train_set(self.config.with_overrides({'model.head.lstm_cells': 0}), self.dataset)
        self.assertGreaterEqual(summary.best_auc, 0.95)


@tag('slow')
@slow
class MemoryAblationTests(SimpleTestCase):
    """The four memory rows of the shipped grid, three seeds each, trained once for the class"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.tmp = tempfile.TemporaryDirectory()
        cls.grid = load_grid('ablation_memory')
        cls.report = run_ablation(cls.grid, Path(cls.tmp.name))

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        super().tearDownClass()

    def mean_best_auc(self, value):
        return statistics.mean(run.best_auc for run in self.report.runs if run.value == value)

    def test_every_row_completes_for_three_seeds(self):
        self.assertEqual(self.grid.seeds, (0, 1, 2))
        self.assertEqual([run.status for run in self.report.runs], ['completed'] * 12)

    def test_both_memories_beat_short_term_alone(self):
        self.assertGreaterEqual(self.mean_best_auc('both') - self.mean_best_auc('short'), 0.05)

    def test_both_memories_beat_no_memory(self):
        self.assertGreaterEqual(self.mean_best_auc('both') - self.mean_best_auc('none'), 0.05)

    def test_short_clips_alone_cannot_score_the_long_range_anomaly(self):
        self.assertLessEqual(self.mean_best_auc('short'), 0.7)

    def test_two_recurrent_cells_learn_the_long_range_anomaly(self):
        self.assertGreater(self.mean_best_auc('both'), 0.9)
