from experiments.config import Experiment
from experiments.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Identify a disturbance from recorded CSV data (external.* config keys)'
    experiment = Experiment.IDENTIFY_EXTERNAL.value

    def report(self, result):
        scores = result.summary.get('nrmse')
        if scores:
            for label, value in scores.items():
                self.stdout.write(f'  NRMSE {label}: {value}')
        else:
            self.stdout.write(f"  Filtered estimate written (window {result.summary['window']})")
