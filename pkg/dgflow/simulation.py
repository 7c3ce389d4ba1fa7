"""The Simulation: mesh, spaces, scheme, state and subscribers of a run."""

import logging
import math

from .adapt import RemeshTrigger, adapt_mesh, transfer_solution
from .analysis import ForceReport, aero_coefficients, pressure_drop
from .cases import CylinderCase, MEAN_INFLOW
from .errors import SolverError
from .event import AdaptationEvent, ForceEvent, StepEvent
from .forms import kinetic_energy
from .schemes import (FlowProblem, SchemeState, build_scheme, check_steady,
                      compute_stability_params)
from .space import Field, build_space

logger = logging.getLogger(__name__)


def count_steps(final_time, dt):
    """Get the number of steps reaching final_time, tolerating round-off."""
    if final_time <= 0.0:
        return 0

    return int(math.ceil(final_time / dt - 0.01))


class Simulation:
    """A flow case being advanced in time."""

    def __init__(self, config):
        """
        Initialize the object.

        config -- CaseConfig
        """
        self.config = config
        self.case = config.get_case()
        self.re = self.case.reynolds(config)
        self.exact = self.case.exact(config)
        self.boundary = self.case.boundary(config)
        self.subscribers = set()
        self.events = []
        self.forces = ForceReport() if isinstance(self.case, CylinderCase) \
            else None
        self.trigger = RemeshTrigger(config.adapt_config()) \
            if config.adapt['enabled'] else None
        self.steady = False
        self.iterations = {}
        self.fixed_point_iterations = {}

        mesh = self.case.build_mesh(config)
        self.dt = config.time_step(mesh, self.re)
        self._build(mesh)
        u0, p0 = self.case.initial_state(self.velocity_space,
                                         self.pressure_space, config)
        self.state = SchemeState(0.0, 0, u0, p0)
        logger.info('Set up %s: %d cells, %d velocity and %d pressure dofs, '
                    'dt=%g, C=%.3g, mu=%.3g', self.case.name, mesh.n_active,
                    self.velocity_space.n_dofs, self.pressure_space.n_dofs,
                    self.dt, self.cfl, self.mu)

    def __repr__(self):
        """Describe the simulation."""
        return 'Simulation({}, {})'.format(self.case.name, self.state)

    def _build(self, mesh):
        config = self.config
        self.mesh = mesh
        self.velocity_space = build_space(mesh, config.degree, mesh.dim)
        self.pressure_space = build_space(mesh, config.degree - 1, 1)
        self.problem = FlowProblem(self.velocity_space, self.pressure_space,
                                   self.boundary)
        scheme_config = config.scheme_config(self.dt, self.re)
        self.scheme = build_scheme(self.problem, scheme_config)
        self.scheme.on('solve', self._count_solve)
        self.scheme.on('fixed_point', self._count_fixed_point)
        self.cfl, self.mu = compute_stability_params(
            scheme_config, mesh, config.degree, config.velocity_scale,
            config.time['length_scale'])

    def _count_solve(self, name, iterations):
        self.iterations[name] = self.iterations.get(name, 0) + iterations

    def _count_fixed_point(self, name, iterations, increments):
        self.fixed_point_iterations[name] = iterations
        logger.debug('%s fixed point: last increment %.2e', name,
                     increments[-1])

    def get_mesh(self):
        """Get the current mesh."""
        return self.mesh

    def get_state(self):
        """Get the current SchemeState."""
        return self.state

    def n_steps(self):
        """Get the number of steps of the configured final time."""
        return count_steps(self.config.time['final'], self.dt)

    def add_subscriber(self, subscriber):
        """
        Add a subscriber.

        :param subscriber: Subscriber
        """
        self.subscribers.add(subscriber)

    def step_notify(self, event):
        """
        Notify all subscribers of a finished step.

        :param event: StepEvent
        """
        self.events.append(event)
        for subscriber in list(self.subscribers):
            subscriber.update_step(event)

    def adapt_notify(self, event):
        """
        Notify all subscribers of a remeshing pass.

        :param event: AdaptationEvent
        """
        self.events.append(event)
        for subscriber in list(self.subscribers):
            subscriber.update_adaptation(event)

    def forces_notify(self, event):
        """
        Notify all subscribers of a force sample.

        :param event: ForceEvent
        """
        for subscriber in list(self.subscribers):
            subscriber.update_forces(event)

    def run_notify(self, run):
        """
        Notify all subscribers of a run status change.

        :param run: CaseRun
        """
        for subscriber in list(self.subscribers):
            subscriber.update_run(run)

    def advance(self):
        """
        Take one time step, notify subscribers and adapt if due.

        Returns the new SchemeState.
        """
        old = self.state
        self.iterations = {}
        self.fixed_point_iterations = {}
        new = self.scheme.step(old)
        if not new.is_finite():
            raise SolverError('step {} (t={:.6g}): non-finite values in the '
                              'solution'.format(new.step, old.time))

        self.state = new
        diagnostics = self.scheme.diagnostics
        event = StepEvent(
            self, new.step, new.time, self.dt, self.cfl, self.mu,
            kinetic_energy(new.u_n), diagnostics['divergence_residual'],
            self.iterations, self.fixed_point_iterations,
            self.scheme.subsystems)
        self.step_notify(event)

        output = self.config.output
        if new.step % output['log_every'] == 0:
            logger.info('step %d t=%.6g E=%.6e residual=%.2e iterations=%d',
                        new.step, new.time, event.data['kinetic_energy'],
                        diagnostics['divergence_residual'],
                        sum(self.iterations.values()))

        if self.forces is not None and new.step % output['force_every'] == 0:
            self.sample_forces()

        tolerance = self.config.time['steady_tolerance']
        if tolerance is not None and check_steady(new, old, tolerance):
            logger.info('Steady state reached at step %d', new.step)
            self.steady = True

        if self.trigger is not None and \
                self.trigger.check(new.step, new.u_n, old.u_n):
            self.adapt()

        return new

    def sample_forces(self):
        """Compute and publish the force coefficients of the state."""
        coefficients = aero_coefficients(self.state, self.mesh, self.re,
                                         MEAN_INFLOW, self.case.diameter)
        dp = pressure_drop(self.state.p_n)
        self.forces.add(self.state.time, coefficients['cd'],
                        coefficients['cl'], dp)
        self.forces_notify(ForceEvent(self, self.state.step, self.state.time,
                                      coefficients['cd'], coefficients['cl'],
                                      dp))

    def adapt(self):
        """Remesh from the vorticity indicator and transfer the state."""
        state = self.state
        old_mesh = self.mesh
        new_mesh = adapt_mesh(old_mesh, state.u_n, self.trigger.config,
                              self.config.threads)
        names = ('u_n', 'p_n', 'u_prev', 'u_gamma', 'p_gamma')
        present = [n for n in names if getattr(state, n) is not None]
        moved = transfer_solution([getattr(state, n) for n in present],
                                  old_mesh, new_mesh)
        self._build(new_mesh)
        fields = {}
        for name, field in zip(present, moved):
            space = self.pressure_space if name.startswith('p') \
                else self.velocity_space
            fields[name] = Field(space, field.values)
        self.state = SchemeState(state.time, state.step, **fields)
        logger.info('Adapted mesh at step %d: %d refined, %d coarsened, %d '
                    'active cells', state.step, new_mesh.n_refined,
                    new_mesh.n_coarsened, new_mesh.n_active)
        self.adapt_notify(AdaptationEvent(
            self, state.step, new_mesh.n_refined, new_mesh.n_coarsened,
            new_mesh.n_closure, new_mesh.n_active))

    def run(self, n_steps=None):
        """
        Advance until the final time or a steady state.

        n_steps -- number of steps, the configured count if omitted

        Returns the final SchemeState.
        """
        n_steps = self.n_steps() if n_steps is None else n_steps
        for _ in range(n_steps):
            self.advance()
            if self.steady:
                break
        return self.state
