"""Subscribers receiving simulation events."""

import csv
import logging
import os

logger = logging.getLogger(__name__)


class Subscriber:
    """Abstract Subscriber class."""

    def update_step(self, event):
        """
        Receive the diagnostics of a time step.

        :param event: StepEvent
        """
        raise NotImplementedError

    def update_adaptation(self, event):
        """
        Receive the outcome of a remeshing pass.

        :param event: AdaptationEvent
        """
        raise NotImplementedError

    def update_forces(self, event):
        """
        Receive a force coefficient sample.

        :param event: ForceEvent
        """
        raise NotImplementedError

    def update_run(self, run):
        """
        Receive a run status change.

        :param run: CaseRun
        """
        raise NotImplementedError


class CsvSubscriber(Subscriber):
    """Write step, adaptation and force events as CSV tables."""

    FILES = {
        'step': 'diagnostics.csv',
        'adaptation': 'adaptation.csv',
        'forces': 'forces.csv',
    }

    def __init__(self, directory):
        """
        Initialize the object.

        directory -- output directory, created if missing
        """
        os.makedirs(directory, exist_ok=True)
        self.directory = directory
        self.columns = {}
        self.rows = {}

    def path(self, name):
        """Get the file path of an event name."""
        return os.path.join(self.directory, self.FILES[name])

    def _write(self, event):
        name = event.get_name()
        row = event.as_event_description()
        if name not in self.columns:
            self.columns[name] = list(row)
            self.rows[name] = 0
            mode = 'w'
        else:
            mode = 'a'

        with open(self.path(name), mode, newline='') as f:
            writer = csv.DictWriter(f, fieldnames=self.columns[name],
                                    lineterminator='\r\n')
            if mode == 'w':
                writer.writeheader()
            writer.writerow(row)
        self.rows[name] += 1

    def update_step(self, event):
        """Append a row to diagnostics.csv."""
        self._write(event)

    def update_adaptation(self, event):
        """Append a row to adaptation.csv."""
        self._write(event)

    def update_forces(self, event):
        """Append a row to forces.csv."""
        self._write(event)

    def update_run(self, run):
        """Log the row counts once the run is over."""
        if run.get_status() in ('completed', 'failed'):
            logger.info('Wrote %s', ', '.join(
                '{} rows to {}'.format(count, self.FILES[name])
                for name, count in sorted(self.rows.items())) or 'no rows')
