import logging

import numpy as np
import torch
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from anomaly.exceptions import MovadError

logger = logging.getLogger(__name__)


class MovadCommand(BaseCommand):
    """Shared --seed option; domain errors become CommandError (exit status 1)"""

    def add_arguments(self, parser):
        parser.add_argument(
            '--seed',
            type=int,
            default=None,
            help='Random seed (overrides the config seed where there is one)',
        )

    def handle(self, *args, **options):
        torch.set_num_threads(settings.MOVAD['NUM_THREADS'])
        if options['seed'] is not None:
            torch.manual_seed(options['seed'])
            np.random.seed(options['seed'])
        try:
            return self.run(**options)
        except MovadError as e:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]} failed: {e}")
            raise CommandError(str(e)) from e

    def run(self, **options):
        raise NotImplementedError
