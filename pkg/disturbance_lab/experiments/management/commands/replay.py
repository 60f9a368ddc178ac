from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from disturbance_lab.exceptions import ConfigurationError
from experiments.runners import replay


class Command(BaseCommand):
    help = 'Re-run an experiment from its manifest and compare CSV checksums'

    def add_arguments(self, parser):
        parser.add_argument('manifest', help='manifest.json or the run directory containing it')
        parser.add_argument('--out', required=True, help='Fresh output directory for the replay')

    def handle(self, *args, **options):
        manifest = Path(options['manifest'])
        if not (manifest.is_file() or (manifest / 'manifest.json').is_file()):
            raise CommandError(f'No manifest at {manifest}', returncode=2)
        try:
            report = replay(manifest, options['out'])
        except ConfigurationError as e:
            raise CommandError(f'Configuration error: {e}', returncode=2)

        for name, ok in report.matches.items():
            if ok:
                self.stdout.write(self.style.SUCCESS(f'  {name}: identical'))
            else:
                self.stdout.write(self.style.ERROR(f'  {name}: differs'))
        if not report.reproduced:
            raise CommandError('Replay did not reproduce the original artifacts')
        self.stdout.write(self.style.SUCCESS(f'Replay reproduced {len(report.matches)} CSV artifacts'))
