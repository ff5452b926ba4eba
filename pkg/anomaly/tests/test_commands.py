import json
import re
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from anomaly.config import write_yaml
from anomaly.models import AblationResult, EpochMetric, Evaluation, TrainingRun

from .utils import TINY_SYNTHETIC, write_tiny_config


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        self.config = write_tiny_config(self.root / 'tiny.yaml')
        self.spec = write_yaml(TINY_SYNTHETIC, self.root / 'spec.yaml')
        self.data = self.root / 'data'

    def call(self, *args):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO())
        return out.getvalue()

    def synthesize(self):
        return self.call('synth', '--spec', str(self.spec), '--output', str(self.data))

    def train(self, *extra):
        return self.call('train', '--config', str(self.config), '--dataset', str(self.data),
                         '--output', str(self.root / 'run'), *extra)


class SynthCommandTests(CommandTestCase):
    def test_writes_a_dota_layout_dataset(self):
        out = self.synthesize()
        self.assertIn('Wrote 4 synthetic videos', out)
        self.assertEqual(len(list((self.data / 'annotations').glob('*.json'))), 4)
        self.assertEqual(len(list((self.data / 'frames' / 'synth_0000' / 'images').glob('*.png'))), 16)

    def test_seed_option_overrides_the_spec(self):
        self.call('synth', '--spec', str(self.spec), '--output', str(self.root / 'a'), '--seed', '5')
        self.call('synth', '--spec', str(self.spec), '--output', str(self.root / 'b'))
        first = json.loads((self.root / 'a' / 'annotations' / 'synth_0000.json').read_text())
        second = json.loads((self.root / 'b' / 'annotations' / 'synth_0000.json').read_text())
        self.assertEqual(first['num_frames'], second['num_frames'])
        self.assertNotEqual((self.root / 'a' / 'frames' / 'synth_0000' / 'images' / '000001.png').read_bytes(),
                            (self.root / 'b' / 'frames' / 'synth_0000' / 'images' / '000001.png').read_bytes())

    def test_infeasible_spec_fails(self):
        write_yaml({**TINY_SYNTHETIC, 'min_window': 12, 'max_window': 20}, self.spec)
        with self.assertRaises(CommandError):
            self.synthesize()


class TrainCommandTests(CommandTestCase):
    def test_trains_and_records_the_run(self):
        self.synthesize()
        out = self.train('--epochs', '2', '--eval-dataset', str(self.data), '--lstm-cells', '1', '--seed', '3')
        self.assertIn('Best AUC', out)

        run = TrainingRun.objects.get()
        self.assertEqual(run.status, TrainingRun.STATUS_COMPLETED)
        self.assertEqual((run.seed, run.lstm_cells, run.steps), (3, 1, 4))
        self.assertEqual(list(run.epochs.values_list('epoch', flat=True)), [1, 2])
        self.assertEqual(EpochMetric.objects.filter(run=run, auc__isnull=False).count(), 2)
        self.assertIsNotNone(run.best_auc)
        for name in ('config.yaml', 'metrics.csv', 'epochs.csv', 'last.pt', 'best.pt', 'run.json'):
            self.assertTrue((self.root / 'run' / name).is_file(), name)
        self.assertEqual(json.loads((self.root / 'run' / 'run.json').read_text())['status'], 'completed')

    def test_same_seed_reproduces_the_metric_tables(self):
        self.synthesize()
        tables = []
        for name in ('first', 'second'):
            self.call('train', '--config', str(self.config), '--dataset', str(self.data),
                      '--output', str(self.root / name), '--epochs', '2', '--seed', '4')
            tables.append([(self.root / name / table).read_bytes() for table in ('metrics.csv', 'epochs.csv')])
        self.assertEqual(tables[0], tables[1])

    def test_missing_dataset_fails_before_creating_a_run(self):
        with self.assertRaises(CommandError):
            self.call('train', '--config', str(self.config))
        self.assertFalse(TrainingRun.objects.exists())

    def test_failed_run_is_recorded(self):
        self.synthesize()
        with self.assertRaises(CommandError):
            self.train('--resume', str(self.root / 'missing.pt'))
        run = TrainingRun.objects.get()
        self.assertEqual(run.status, TrainingRun.STATUS_FAILED)
        self.assertIn('missing.pt', run.error)
        self.assertIsNotNone(run.finished_at)

    def test_invalid_override_fails(self):
        self.synthesize()
        with self.assertRaises(CommandError):
            self.train('--nf', '0')


class EvalAndScoreCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.synthesize()
        self.train()
        self.checkpoint = self.root / 'run' / 'last.pt'

    def test_eval_writes_report_and_record(self):
        output = self.root / 'eval' / 'report.json'
        out = self.call('eval', '--checkpoint', str(self.checkpoint), '--dataset', str(self.data),
                        '--exclude-warmup', '--split', 'train', '--workers', '2', '--output', str(output))
        self.assertIn('AUC', out)

        report = json.loads(output.read_text())
        self.assertEqual(report['num_videos'], 4)
        self.assertEqual(report['num_frames'], 4 * 15)
        self.assertTrue(report['exclude_warmup'])
        self.assertEqual(report['split'], 'train')
        self.assertTrue(0.0 <= report['overall_auc'] <= 1.0)
        per_class = pd.read_csv(output.with_suffix('.per_class.csv'))
        self.assertIn('ego_auc', per_class.columns)

        evaluation = Evaluation.objects.get()
        self.assertEqual(evaluation.run, TrainingRun.objects.get())
        self.assertEqual(evaluation.num_frames, 60)

    def test_eval_with_missing_checkpoint_fails(self):
        with self.assertRaises(CommandError):
            self.call('eval', '--checkpoint', str(self.root / 'nope.pt'), '--dataset', str(self.data))

    def test_score_prints_one_line_per_frame(self):
        video = self.data / 'frames' / 'synth_0001'
        out = self.call('score', '--checkpoint', str(self.checkpoint), '--video', str(video))
        lines = out.splitlines()
        self.assertEqual(len(lines), 16)
        for index, line in enumerate(lines):
            self.assertRegex(line, re.compile(rf'^{index}\t[01]\.\d{{6}}$'))

    def test_score_to_file_with_state_dumps(self):
        video = self.data / 'frames' / 'synth_0002' / 'images'
        output = self.root / 'scores.tsv'
        states = self.root / 'states'
        self.call('score', '--checkpoint', str(self.checkpoint), '--video', str(video), '--output', str(output),
                  '--dump-state', 'every=5', '--state-dir', str(states))
        self.assertEqual(len(output.read_text().splitlines()), 16)
        self.assertEqual(sorted(path.name for path in states.glob('*.pt')),
                         ['state_000005.pt', 'state_000010.pt', 'state_000015.pt'])

    def test_bad_dump_state_option(self):
        with self.assertRaises(CommandError):
            self.call('score', '--checkpoint', str(self.checkpoint), '--video', str(self.data / 'frames' / 'synth_0000'),
                      '--dump-state', 'often')


class AblateCommandTests(CommandTestCase):
    def test_sweep_records_results(self):
        grid = write_yaml({
            'axis': 'lstm_cells', 'values': [0, 1], 'epochs': 1, 'base': str(self.config), 'synthetic': str(self.spec),
        }, self.root / 'grid.yaml')
        out = self.call('ablate', '--grid', str(grid), '--output', str(self.root / 'ablation'), '--seed', '2')
        self.assertIn('Ablation results written', out)

        results = AblationResult.objects.order_by('value')
        self.assertEqual([(r.value, r.seed, r.status) for r in results], [('0', 2, 'completed'), ('1', 2, 'completed')])
        runs = pd.read_csv(self.root / 'ablation' / 'runs.csv')
        self.assertEqual(runs['lstm_cells'].tolist(), [0, 1])
        self.assertTrue((self.root / 'ablation' / 'ablation_lstm_cells.png').is_file())
        saved = json.loads((self.root / 'ablation' / 'results.json').read_text())
        self.assertEqual([row['status'] for row in saved], ['completed', 'completed'])
        for result in results:
            self.assertEqual((result.run.status, result.run.seed, result.run.steps), ('completed', 2, 2))
            self.assertEqual(result.run.lstm_cells, int(result.value))
            self.assertEqual(list(result.run.epochs.values_list('epoch', flat=True)), [1])
            self.assertTrue((Path(result.run.output_dir) / 'last.pt').is_file())

    def test_unknown_grid_fails(self):
        with self.assertRaises(CommandError):
            self.call('ablate', '--grid', 'no-such-grid', '--output', str(self.root / 'ablation'))
