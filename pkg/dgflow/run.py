"""CaseRun: the lifecycle of one simulation run."""

import json
import logging
import os

from .errors import DgflowError
from .utils import timestamp

logger = logging.getLogger(__name__)


class CaseRun:
    """A CaseRun drives a Simulation to its end and records the outcome."""

    def __init__(self, simulation, directory=None):
        """
        Initialize the object.

        simulation -- the Simulation to run
        directory -- output directory receiving run.json, or None
        """
        self.simulation = simulation
        self.directory = directory
        self.name = simulation.case.name
        self.status = 'created'
        self.time_requested = timestamp()
        self.time_completed = None
        self.error = None
        self.summary = {}

    def as_run_description(self):
        """
        Get the run description.

        Returns a dictionary describing the run.
        """
        simulation = self.get_simulation()
        description = {
            self.name: {
                'timeRequested': self.time_requested,
                'status': self.status,
                'config': simulation.config.as_dict(),
                'steps': simulation.get_state().step,
                'time': simulation.get_state().time,
                'dt': simulation.dt,
                'C': simulation.cfl,
                'mu': simulation.mu,
                'activeCells': simulation.get_mesh().n_active,
            },
        }

        if self.summary:
            description[self.name]['summary'] = self.summary

        if self.error is not None:
            description[self.name]['error'] = self.error

        if self.time_completed is not None:
            description[self.name]['timeCompleted'] = self.time_completed

        return description

    def get_name(self):
        """Get this run's case name."""
        return self.name

    def get_status(self):
        """Get this run's status."""
        return self.status

    def get_simulation(self):
        """Get the simulation associated with this run."""
        return self.simulation

    def get_time_completed(self):
        """Get the time the run was completed."""
        return self.time_completed

    def start(self):
        """
        Perform the run.

        Failures mark the run failed, are recorded in run.json and are
        re-raised.
        """
        self.status = 'pending'
        self.simulation.run_notify(self)
        logger.info('Starting %s run', self.name)
        try:
            self.perform_run()
        except DgflowError as e:
            self.error = str(e)
            self.finish('failed')
            raise

        self.finish()

    def perform_run(self):
        """Advance the simulation to its final time."""
        self.simulation.run()

    def finish(self, status='completed'):
        """Finish the run and write run.json."""
        self.status = status
        self.time_completed = timestamp()
        self.simulation.run_notify(self)
        if self.directory is not None:
            with open(os.path.join(self.directory, 'run.json'), 'w') as f:
                json.dump(self.as_run_description(), f, indent=2,
                          sort_keys=True)
        logger.info('Run %s %s at step %d', self.name, status,
                    self.simulation.state.step)
