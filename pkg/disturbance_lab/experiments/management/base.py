import logging

from django.core.management.base import BaseCommand, CommandError

from disturbance_lab.exceptions import (
    ConfigurationError, DimensionError, DivergenceError, GridValidationError, HorizonError, SeriesMismatchError,
)
from experiments.config import ExperimentConfig
from experiments.runners import run_experiment

logger = logging.getLogger(__name__)

CONFIG_ERROR_EXIT = 2
DIVERGENCE_EXIT = 3


class ExperimentCommand(BaseCommand):
    """Shared --config/--out/--seed handling and exit-code mapping."""

    experiment = None

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Flat KEY=VALUE experiment config (defaults if omitted)')
        parser.add_argument('--out', help='Output directory (overrides output.dir)')
        parser.add_argument('--seed', type=int, help='Master seed (overrides seed)')

    def load_config(self, options) -> ExperimentConfig:
        overrides = {'experiment': self.experiment}
        if options.get('seed') is not None:
            overrides['seed'] = str(options['seed'])
        if options.get('out'):
            overrides['output.dir'] = options['out']
        if options.get('config'):
            return ExperimentConfig.from_file(options['config'], overrides)
        return ExperimentConfig(overrides)

    def handle(self, *args, **options):
        try:
            cfg = self.load_config(options)
            result = run_experiment(cfg, cfg.output_dir())
        except (ConfigurationError, GridValidationError, SeriesMismatchError, DimensionError, HorizonError) as e:
            logger.error(f"{self.experiment} failed: {e}")
            raise CommandError(f'Configuration error: {e}', returncode=CONFIG_ERROR_EXIT)
        except DivergenceError as e:
            logger.error(f"{self.experiment} diverged: {e}")
            raise CommandError(f'Diverged at step {e.step}: {e}', returncode=DIVERGENCE_EXIT)

        self.report(result)
        self.stdout.write(self.style.SUCCESS(f'{self.experiment} finished; artifacts in {result.directory}'))

    def report(self, result):
        for key, value in result.summary.items():
            if isinstance(value, dict):
                continue
            self.stdout.write(f'  {key}: {value}')
