"""
Ablation sweeps over NF, LSTM cell count, VCL and the memory on/off grid.

Each (value, seed) pair trains a model from scratch, evaluates it after
every epoch and records the AUC curve. Failed runs are recorded with their
error and the sweep moves on.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .config import RunConfig, load_run_config, read_yaml, write_yaml  # noqa: E402
from .datasets import VideoDataset  # noqa: E402
from .evaluation import evaluate  # noqa: E402
from .exceptions import ConfigurationError  # noqa: E402
from .synthetic import SyntheticSpec, generate_synthetic, to_dataset  # noqa: E402
from .training import Trainer  # noqa: E402

logger = logging.getLogger(__name__)

# Memory on/off rows in display order: (short-term memory, long-term memory)
MEMORY_ROWS = {
    'none': (False, False),
    'short': (True, False),
    'long': (False, True),
    'both': (True, True),
}

RUN_COLUMNS = ['axis', 'value', 'seed', 'nf', 'lstm_cells', 'vcl', 'best_auc', 'best_epoch', 'final_auc', 'status', 'error']
CURVE_COLUMNS = ['axis', 'value', 'seed', 'epoch', 'mean_loss', 'auc']


@dataclass(frozen=True)
class AblationGrid:
    axis: str
    values: Tuple[Any, ...]
    epochs: int
    base: str = 'toy'
    seeds: Tuple[int, ...] = (0,)
    dataset: Optional[str] = None
    eval_dataset: Optional[str] = None
    synthetic: Optional[str] = None
    short_term_nf: int = 3
    long_term_cells: int = 2
    exclude_warmup: bool = False

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> 'AblationGrid':
        from .serializers import AblationGridSerializer

        serializer = AblationGridSerializer(data=raw)
        if not serializer.is_valid():
            raise ConfigurationError(f"Invalid ablation grid: {serializer.errors}", serializer.errors)
        data = dict(serializer.validated_data)
        data['values'] = tuple(data['values'])
        data['seeds'] = tuple(data['seeds'])
        return cls(**data)

    def overrides(self, value) -> Dict[str, Any]:
        """Dotted-key config overrides for one grid value"""
        if self.axis == 'nf':
            return {'model.stmm.nf': value}
        if self.axis == 'lstm_cells':
            return {'model.head.lstm_cells': value}
        if self.axis == 'vcl':
            return {'train.vcl': value}
        short, long = MEMORY_ROWS[value]
        return {
            'model.stmm.nf': self.short_term_nf if short else 1,
            'model.head.lstm_cells': self.long_term_cells if long else 0,
        }


@dataclass
class AblationRun:
    axis: str
    value: Any
    seed: int
    nf: int
    lstm_cells: int
    vcl: int
    status: str = 'running'
    best_auc: Optional[float] = None
    best_epoch: Optional[int] = None
    final_auc: Optional[float] = None
    error: str = ''
    curve: List[Dict[str, Any]] = field(default_factory=list)
    steps: int = 0
    output_dir: str = ''
    config: Optional[Dict[str, Any]] = None  # Resolved run config; None when it failed to resolve

    def row(self) -> Dict[str, Any]:
        return {column: getattr(self, column) for column in RUN_COLUMNS}


@dataclass
class AblationReport:
    grid: AblationGrid
    runs: List[AblationRun]

    def runs_table(self) -> pd.DataFrame:
        return pd.DataFrame([run.row() for run in self.runs], columns=RUN_COLUMNS)

    def curves_table(self) -> pd.DataFrame:
        rows = [
            {'axis': run.axis, 'value': run.value, 'seed': run.seed, **point}
            for run in self.runs for point in run.curve
        ]
        return pd.DataFrame(rows, columns=CURVE_COLUMNS)

    def summary_table(self) -> pd.DataFrame:
        """Per grid value: mean and std of best/final AUC over the completed seeds"""
        runs = self.runs_table()
        rows = []
        for value in self.grid.values:
            selected = runs[(runs['value'] == value) & (runs['status'] == 'completed')]
            rows.append({
                'axis': self.grid.axis,
                'value': value,
                'runs': int(len(selected)),
                'failed': int(((runs['value'] == value) & (runs['status'] == 'failed')).sum()),
                'best_auc_mean': selected['best_auc'].mean() if len(selected) else None,
                'best_auc_std': selected['best_auc'].std(ddof=0) if len(selected) else None,
                'final_auc_mean': selected['final_auc'].mean() if len(selected) else None,
            })
        return pd.DataFrame(rows)

    def memory_table(self) -> pd.DataFrame:
        """Four-row short/long-term memory layout"""
        summary = self.summary_table().set_index('value')
        rows = []
        for value, (short, long) in MEMORY_ROWS.items():
            if value not in summary.index:
                continue
            overrides = self.grid.overrides(value)
            rows.append({
                'short_term': 'with' if short else 'w/out',
                'long_term': 'with' if long else 'w/out',
                'nf': overrides['model.stmm.nf'],
                'lstm_cells': overrides['model.head.lstm_cells'],
                'best_auc': summary.loc[value, 'best_auc_mean'],
                'final_auc': summary.loc[value, 'final_auc_mean'],
            })
        return pd.DataFrame(rows)

    def plot(self, path: Union[str, Path]) -> Path:
        """Mean AUC per epoch, one line per grid value"""
        curves = self.curves_table().dropna(subset=['auc'])
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for value in self.grid.values:
            selected = curves[curves['value'] == value]
            if selected.empty:
                continue
            mean = selected.groupby('epoch')['auc'].mean()
            ax.plot(mean.index, mean.values, marker='o', label=f"{self.grid.axis}={value}")
        ax.set_xlabel('epoch')
        ax.set_ylabel('frame AUC')
        ax.set_title(f"AUC per epoch, {self.grid.axis} sweep")
        ax.grid(True, alpha=0.3)
        if ax.lines:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=100)
        plt.close(fig)
        return Path(path)

    def write(self, output_dir: Union[str, Path]) -> Dict[str, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            'runs': output_dir / 'runs.csv',
            'curves': output_dir / 'curves.csv',
            'summary': output_dir / 'summary.csv',
            'summary_xlsx': output_dir / 'summary.xlsx',
            'plot': output_dir / f"ablation_{self.grid.axis}.png",
        }
        self.runs_table().to_csv(paths['runs'], index=False)
        self.curves_table().to_csv(paths['curves'], index=False)
        summary = self.summary_table()
        summary.to_csv(paths['summary'], index=False)
        summary.to_excel(paths['summary_xlsx'], index=False, sheet_name=self.grid.axis)
        self.plot(paths['plot'])
        if self.grid.axis == 'memory_onoff':
            paths['table'] = output_dir / 'table.csv'
            self.memory_table().to_csv(paths['table'], index=False)
        return paths


def load_grid(name_or_path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None) -> AblationGrid:
    raw = read_yaml(name_or_path)
    raw.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return AblationGrid.from_dict(raw)


def load_grid_datasets(grid: AblationGrid, base: RunConfig) -> Tuple[VideoDataset, VideoDataset]:
    size = base.model.input.size
    if grid.synthetic:
        spec = SyntheticSpec.from_dict(read_yaml(grid.synthetic))
        train_set = to_dataset(generate_synthetic(spec), size)
        return train_set, train_set
    train_set = VideoDataset.from_directory(grid.dataset, size)
    eval_set = VideoDataset.from_directory(grid.eval_dataset, size) if grid.eval_dataset else train_set
    return train_set, eval_set


def run_ablation(grid: AblationGrid, output_dir: Union[str, Path],
                 train_set: Optional[VideoDataset] = None, eval_set: Optional[VideoDataset] = None,
                 on_run_end: Optional[Callable[[AblationRun], None]] = None) -> AblationReport:
    output_dir = Path(output_dir)
    base = load_run_config(grid.base, {'train.epochs': grid.epochs})
    if train_set is None:
        train_set, eval_set = load_grid_datasets(grid, base)
    eval_set = eval_set or train_set
    write_yaml({'axis': grid.axis, 'values': list(grid.values), 'base': grid.base, 'seeds': list(grid.seeds),
                'epochs': grid.epochs, 'short_term_nf': grid.short_term_nf,
                'long_term_cells': grid.long_term_cells, 'exclude_warmup': grid.exclude_warmup},
               output_dir / 'grid.yaml')

    def evaluator(model):
        return evaluate(model, eval_set, exclude_warmup=grid.exclude_warmup).overall_auc

    runs = []
    for value in grid.values:
        for seed in grid.seeds:
            overrides = {**grid.overrides(value), 'seed': seed, 'name': f"{grid.axis}-{value}-seed{seed}"}
            run_dir = output_dir / 'runs' / f"{grid.axis}-{value}" / f"seed-{seed}"
            try:
                run_config = base.with_overrides(overrides)
            except ConfigurationError as e:
                logger.error(f"Invalid config for {grid.axis}={value}: {e}")
                run = AblationRun(grid.axis, value, seed, nf=0, lstm_cells=0, vcl=0, status='failed', error=str(e))
                runs.append(run)
                if on_run_end is not None:
                    on_run_end(run)
                continue

            run = AblationRun(
                grid.axis, value, seed,
                nf=run_config.model.nf,
                lstm_cells=run_config.model.head.lstm_cells,
                vcl=run_config.train.vcl,
                output_dir=str(run_dir),
                config=run_config.to_dict(),
            )
            try:
                summary = Trainer(run_config, train_set, run_dir, evaluator=evaluator).fit()
                run.status = 'completed'
                run.best_auc, run.best_epoch, run.final_auc = summary.best_auc, summary.best_epoch, summary.final_auc
                run.curve = summary.epochs
                run.steps = summary.steps
                logger.info(f"{grid.axis}={value} seed {seed}: best AUC {summary.best_auc}, final AUC {summary.final_auc}")
            except Exception as e:
                logger.error(f"Ablation run {grid.axis}={value} seed {seed} failed: {e}")
                run.status = 'failed'
                run.error = str(e)
            runs.append(run)
            if on_run_end is not None:
                on_run_end(run)

    report = AblationReport(grid, runs)
    report.write(output_dir)
    return report
