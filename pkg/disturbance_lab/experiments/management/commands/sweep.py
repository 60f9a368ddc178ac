from experiments.config import Experiment
from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Attractor distance d(alpha) over a list of control gains'
    experiment = Experiment.SWEEP.value

    def report(self, result):
        for scheme, sweep in result.summary['schemes'].items():
            self.stdout.write(f'  {scheme}:')
            for alpha, distance, stable in zip(sweep['alphas'], sweep['distances'], sweep['stable']):
                if stable:
                    self.stdout.write(f'    alpha={alpha:g}  d={distance:.6g}')
                else:
                    self.stdout.write(self.style.WARNING(f'    alpha={alpha:g}  diverged'))
            if sweep['suggested_gain'] is not None:
                self.stdout.write(f"    suggested gain: {sweep['suggested_gain']:g}")
