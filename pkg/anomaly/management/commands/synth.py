from anomaly.config import read_yaml
from anomaly.services import synthesize_dataset
from anomaly.synthetic import SyntheticSpec

from ._base import MovadCommand


class Command(MovadCommand):
    help = 'Generate a synthetic anomaly dataset in DoTA layout'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--spec', type=str, default='synthetic_toy', help='Synthetic preset name or YAML path')
        parser.add_argument('--output', type=str, required=True)

    def run(self, **options):
        raw = read_yaml(options['spec'])
        if options['seed'] is not None:
            raw['seed'] = options['seed']
        spec = SyntheticSpec.from_dict(raw)
        root = synthesize_dataset(spec, options['output'])
        self.stdout.write(self.style.SUCCESS(f'Wrote {spec.num_videos} synthetic videos to {root}'))
