from experiments.config import Experiment
from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Train on a known forcing, then estimate an unknown disturbance from observations'
    experiment = Experiment.IDENTIFY.value

    def report(self, result):
        for label, value in result.summary['nrmse'].items():
            self.stdout.write(f'  NRMSE {label}: {value}')
        coverage = result.summary.get('coverage')
        if coverage:
            message = f"  Coverage ratio: {coverage['ratio']} (aspect {coverage['aspect']:.3g})"
            if coverage['degenerate']:
                self.stdout.write(self.style.WARNING(message + ' - training range is degenerate'))
            else:
                self.stdout.write(message)
