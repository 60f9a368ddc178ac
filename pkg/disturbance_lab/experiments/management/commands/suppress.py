from experiments.config import Experiment
from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Suppress the disturbance by feeding the reservoir estimate back (simple or delayed scheme)'
    experiment = Experiment.SUPPRESS.value

    def report(self, result):
        summary = result.summary
        self.stdout.write(f"  {summary['scheme']} control, alpha={summary['alpha']}")
        self.stdout.write(f"  Attractor distance: {summary['distance']}")
        self.stdout.write(f"  Suppression ratio: {summary['suppression_ratio']}")
