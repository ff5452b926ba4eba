import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from anomaly.config import (
    RunConfig, apply_overrides, load_run_config, read_yaml, resolve_config_path, save_run_config,
)
from anomaly.exceptions import ConfigurationError

from .utils import TINY_CONFIG, tiny_run_config


class PresetTests(SimpleTestCase):
    def test_toy_preset_is_desk_scale(self):
        config = load_run_config('toy')
        self.assertEqual(config.model.input.size, (32, 32))
        self.assertEqual(config.model.stmm.embed_dim, 32)
        self.assertEqual(config.model.head.input_dim, 32)

    def test_memory_preset_sees_whole_synthetic_videos(self):
        config = load_run_config('toy_memory')
        spec = read_yaml('synthetic_long_range')
        self.assertEqual(config.train.vcl, spec['frames_per_video'])
        self.assertEqual(config.model.input.size, (spec['height'], spec['width']))
        self.assertEqual((config.model.nf, config.model.head.lstm_cells), (3, 2))
        self.assertEqual(config.train.grad_clip, 1.0)

    def test_full_scale_training_defaults(self):
        config = load_run_config('swin_b')
        self.assertEqual(config.train.batch_size, 8)
        self.assertEqual(config.train.vcl, 8)
        self.assertEqual(config.model.input.size, (240, 320))
        self.assertEqual(config.model.nf, 3)
        self.assertEqual(config.model.head.lstm_cells, 2)
        self.assertEqual(config.train.learning_rate, 0.0001)
        self.assertEqual(config.train.momentum, 0.9)
        self.assertEqual(config.train.class_weights, (0.3, 0.7))
        self.assertEqual(config.model.stmm.depths, (2, 2, 18, 2))
        self.assertEqual(config.model.stmm.feature_dim, 1024)

    def test_best_presets(self):
        best = load_run_config('best')
        self.assertEqual((best.model.nf, best.model.head.lstm_cells, best.train.vcl), (4, 3, 8))
        hires = load_run_config('best_hires')
        self.assertEqual(hires.model.input.size, (480, 640))
        self.assertEqual(hires.model.stmm, best.model.stmm)

    def test_grid_and_synthetic_presets_resolve(self):
        for name in ('synthetic_toy', 'synthetic_long_range', 'ablation_memory', 'ablation_nf',
                     'ablation_cells', 'ablation_vcl'):
            self.assertTrue(resolve_config_path(name).is_file(), name)

    def test_unknown_preset(self):
        with self.assertRaises(ConfigurationError):
            load_run_config('no-such-preset')


class RunConfigTests(SimpleTestCase):
    def test_save_and_load_round_trip(self):
        config = tiny_run_config({'data.train_root': '/data/dota', 'train.class_weights': [0.3, 0.7]})
        with tempfile.TemporaryDirectory() as tmp:
            path = save_run_config(config, Path(tmp) / 'config.yaml')
            self.assertEqual(load_run_config(path), config)
            self.assertEqual(read_yaml(path)['model']['stmm']['depths'], [2])

    def test_dotted_overrides(self):
        config = load_run_config('toy', {'model.stmm.nf': 5, 'train.vcl': 2, 'seed': 9, 'train.epochs': None})
        self.assertEqual((config.model.nf, config.train.vcl, config.seed), (5, 2, 9))
        self.assertEqual(config.train.epochs, load_run_config('toy').train.epochs)

    def test_overrides_leave_the_source_untouched(self):
        overridden = apply_overrides(TINY_CONFIG, {'model.head.lstm_cells': 4})
        self.assertEqual(overridden['model']['head']['lstm_cells'], 4)
        self.assertEqual(TINY_CONFIG['model']['head']['lstm_cells'], 2)

    def test_missing_sections_take_defaults(self):
        raw = {key: value for key, value in TINY_CONFIG.items() if key != 'train'}
        config = RunConfig.from_dict(raw)
        self.assertEqual((config.train.batch_size, config.train.vcl, config.train.momentum), (8, 8, 0.9))
        self.assertIsNone(config.data.train_root)

    def test_invalid_values_carry_field_errors(self):
        with self.assertRaises(ConfigurationError) as context:
            tiny_run_config({'model.input.height': 18})
        self.assertIn('model', context.exception.errors)
        with self.assertRaises(ConfigurationError):
            tiny_run_config({'model.stmm.num_heads': [3]})
        with self.assertRaises(ConfigurationError):
            tiny_run_config({'model.head.input_dim': 64})
        with self.assertRaises(ConfigurationError):
            tiny_run_config({'model.stmm.nf': 0})
        with self.assertRaises(ConfigurationError):
            tiny_run_config({'train.class_weights': [0.0, 1.0]})

    def test_override_into_a_value_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            apply_overrides(TINY_CONFIG, {'name.first': 'x'})
