"""Run events: steps, adaptations and force samples."""

from .utils import format_float, timestamp


class Event:
    """An Event records something that happened during a simulation."""

    def __init__(self, simulation, name, data=None):
        """
        Initialize the object.

        simulation -- Simulation this event belongs to
        name -- name of the event
        data -- data associated with the event, as a dict
        """
        self.simulation = simulation
        self.name = name
        self.data = data if data is not None else {}
        self.time = timestamp()

    def as_event_description(self):
        """
        Get the event description.

        Returns an ordered dictionary of CSV-ready strings; the wall-clock
        timestamp is left out so that repeated runs write identical rows.
        """
        description = {}
        for key, value in self.data.items():
            if isinstance(value, float):
                value = format_float(value)
            description[key] = value
        return description

    def get_name(self):
        """Get the event's name."""
        return self.name

    def get_data(self):
        """Get the event's data."""
        return self.data

    def get_time(self):
        """Get the event's timestamp."""
        return self.time


class StepEvent(Event):
    """Diagnostics of one time step."""

    def __init__(self, simulation, step, t, dt, cfl, mu, kinetic_energy,
                 divergence_residual, iterations, fixed_point_iterations,
                 subsystems):
        """
        Initialize the object.

        simulation -- Simulation
        step -- step index after the step
        t -- time after the step
        dt -- time step
        cfl -- Courant number
        mu -- diffusion number
        kinetic_energy -- 1/2 int |u|^2 after the step
        divergence_residual -- largest divergence identity residual
        iterations -- dict of linear iterations per subsystem
        fixed_point_iterations -- dict of fixed-point iterations per
                                  subsystem
        subsystems -- subsystem names giving the column order
        """
        data = {
            'step': step,
            't': float(t),
            'dt': float(dt),
            'C': float(cfl),
            'mu': float(mu),
            'kinetic_energy': float(kinetic_energy),
            'divergence_residual': float(divergence_residual),
        }
        for name in subsystems:
            data['iterations_{}'.format(name)] = iterations.get(name, 0)
        for name in subsystems:
            if name.startswith('momentum'):
                data['fixed_point_{}'.format(name)] = \
                    fixed_point_iterations.get(name, 0)
        Event.__init__(self, simulation, 'step', data)


class AdaptationEvent(Event):
    """The outcome of one remeshing pass."""

    def __init__(self, simulation, step, n_refined, n_coarsened, n_closure,
                 n_active_after):
        """
        Initialize the object.

        simulation -- Simulation
        step -- step index at which the mesh changed
        n_refined -- cells refined, closure included
        n_coarsened -- parents restored
        n_closure -- cells refined to keep the mesh 1-irregular
        n_active_after -- active cells of the new mesh
        """
        Event.__init__(self, simulation, 'adaptation', {
            'step': step,
            'n_refined': n_refined,
            'n_coarsened': n_coarsened,
            'n_closure': n_closure,
            'n_active_after': n_active_after,
        })


class ForceEvent(Event):
    """A force coefficient sample of a bluff-body run."""

    def __init__(self, simulation, step, t, cd, cl, dp):
        """
        Initialize the object.

        simulation -- Simulation
        step -- step index
        t -- time
        cd -- drag coefficient
        cl -- lift coefficient
        dp -- pressure difference between the sample points
        """
        Event.__init__(self, simulation, 'forces', {
            't': float(t),
            'cd': float(cd),
            'cl': float(cl),
            'dp': float(dp),
        })
        self.step = step
