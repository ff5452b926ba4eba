from anomaly.ablation import load_grid
from anomaly.services import run_ablation_sweep

from ._base import MovadCommand


class Command(MovadCommand):
    help = 'Run an ablation sweep (nf, lstm_cells, vcl or memory_onoff)'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--grid', type=str, required=True, help='Grid preset name or YAML path')
        parser.add_argument('--output', type=str, required=True)

    def run(self, **options):
        overrides = {'seeds': [options['seed']]} if options['seed'] is not None else None
        grid = load_grid(options['grid'], overrides)
        self.stdout.write(f'Sweeping {grid.axis} over {list(grid.values)} with seeds {list(grid.seeds)}')
        report = run_ablation_sweep(grid, options['output'])

        failed = [run for run in report.runs if run.status == 'failed']
        for run in report.runs:
            if run.status == 'completed':
                self.stdout.write(f'{grid.axis}={run.value} seed {run.seed}: best AUC {run.best_auc}')
        if failed:
            self.stdout.write(self.style.WARNING(f'{len(failed)} of {len(report.runs)} runs failed'))
        self.stdout.write(self.style.SUCCESS(f'Ablation results written to {options["output"]}'))
