from pathlib import Path

from django.core.management.base import CommandError

from anomaly.services import format_scores, score_video

from ._base import MovadCommand


def parse_dump_every(value):
    """``every=K`` -> K"""
    key, _, count = (value or '').partition('=')
    if key != 'every' or not count.isdigit() or int(count) < 1:
        raise CommandError(f"--dump-state expects every=K with K >= 1, got '{value}'")
    return int(count)


class Command(MovadCommand):
    help = 'Score a video online, one anomaly score per frame'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', type=str, required=True)
        parser.add_argument('--video', type=str, required=True, help='Video file or directory of frame images')
        parser.add_argument('--output', type=str, help='Scores file (default: standard output)')
        parser.add_argument('--dump-state', type=str, help='Snapshot the session every K frames: every=K')
        parser.add_argument('--state-dir', type=str, help='Directory for session snapshots')

    def run(self, **options):
        dump_every = parse_dump_every(options['dump_state']) if options['dump_state'] else None
        scores = score_video(options['checkpoint'], options['video'], dump_every, options['state_dir'])
        lines = format_scores(scores)

        if options['output']:
            output = Path(options['output'])
            output.parent.mkdir(parents=True, exist_ok=True)
            output.write_text(lines, encoding='utf-8')
            self.stderr.write(self.style.SUCCESS(f'Scored {len(scores)} frames into {output}'))
        else:
            self.stdout.write(lines, ending='')
