from anomaly.config import load_run_config
from anomaly.services import train_model

from ._base import MovadCommand


class Command(MovadCommand):
    help = 'Train a MOVAD model from a preset or YAML config'

    # option name -> dotted config key
    OVERRIDES = {
        'dataset': 'data.train_root',
        'eval_dataset': 'data.eval_root',
        'epochs': 'train.epochs',
        'nf': 'model.stmm.nf',
        'lstm_cells': 'model.head.lstm_cells',
        'vcl': 'train.vcl',
        'batch_size': 'train.batch_size',
        'lr': 'train.learning_rate',
        'momentum': 'train.momentum',
        'seed': 'seed',
        'output': 'output_dir',
    }

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--config', type=str, default='toy', help='Preset name or path to a YAML run config')
        parser.add_argument('--dataset', type=str, help='DoTA-layout training dataset directory')
        parser.add_argument('--eval-dataset', type=str, help='Dataset evaluated after every epoch')
        parser.add_argument('--output', type=str, help='Output directory for checkpoints and metrics')
        parser.add_argument('--epochs', type=int)
        parser.add_argument('--nf', type=int, help='Frames per clip')
        parser.add_argument('--lstm-cells', type=int, help='Stacked LSTM cells (0 disables long-term memory)')
        parser.add_argument('--vcl', type=int, help='Video clip length: consecutive clips per sample')
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--lr', type=float, help='SGD learning rate')
        parser.add_argument('--momentum', type=float)
        parser.add_argument('--resume', type=str, help='Checkpoint to resume from')

    def run(self, **options):
        overrides = {key: options.get(option) for option, key in self.OVERRIDES.items()}
        run_config = load_run_config(options['config'], overrides)
        self.stdout.write(
            f'Training {run_config.name}: NF={run_config.model.nf}, '
            f'{run_config.model.head.lstm_cells} LSTM cells, VCL={run_config.train.vcl}, '
            f'{run_config.train.epochs} epochs'
        )
        run, summary = train_model(run_config, resume=options['resume'])

        self.stdout.write(self.style.SUCCESS(f'Finished {summary.steps} steps, outputs in {run.output_dir}'))
        if summary.best_auc is not None:
            self.stdout.write(
                f'Best AUC {summary.best_auc:.4f} (epoch {summary.best_epoch}), final AUC {summary.final_auc:.4f}'
            )
