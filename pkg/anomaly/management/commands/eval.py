from anomaly.services import evaluate_checkpoint

from ._base import MovadCommand


class Command(MovadCommand):
    help = 'Evaluate a checkpoint with frame-level AUC on a DoTA-layout dataset'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', type=str, required=True)
        parser.add_argument('--dataset', type=str, required=True)
        parser.add_argument('--split', type=str, help='Split name (e.g. val) or path to a split file')
        parser.add_argument(
            '--exclude-warmup',
            action='store_true',
            help='Drop the first NF-1 frames of every video from the AUC',
        )
        parser.add_argument('--workers', type=int, default=1, help='Videos scored concurrently')
        parser.add_argument('--output', type=str, help='JSON report path (default: eval.json next to the checkpoint)')

    def run(self, **options):
        record, result, output = evaluate_checkpoint(
            options['checkpoint'],
            options['dataset'],
            exclude_warmup=options['exclude_warmup'],
            split=options['split'],
            workers=options['workers'],
            output=options['output'],
        )
        self.stdout.write(self.style.SUCCESS(
            f'AUC {result.overall_auc:.4f} over {result.num_frames} frames of {result.num_videos} videos'
        ))
        if result.failed_videos:
            self.stdout.write(self.style.WARNING(
                f'{len(result.failed_videos)} videos failed: '
                f'{", ".join(failure["video"] for failure in result.failed_videos)}'
            ))
        self.stdout.write(f'Report written to {output}')
