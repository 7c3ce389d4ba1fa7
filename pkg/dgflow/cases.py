"""Benchmark flow cases: meshes, boundary data and initial states."""

import logging
import math

import numpy as np

from .analysis import ABC, TAYLOR_GREEN, ExactSolution
from .errors import ConfigError
from .forms import BoundaryConditions
from .mesh import (CHANNEL_HEIGHT, CYLINDER_RADIUS, INLET, OUTLET,
                   distort, generate_cartesian, generate_cylinder_channel,
                   load_mesh)
from .space import Field, interpolate

logger = logging.getLogger(__name__)

LID = 3
MEAN_INFLOW = 1.0
PEAK_INFLOW = 1.5


class FlowCase:
    """
    Base class of the benchmark cases.

    Subclasses set the class attributes and override the hooks that differ
    from the defaults here.
    """

    name = None
    dim = 2
    re = 100.0
    final_time = 1.0
    velocity_scale = 1.0
    target_cfl = 1.0
    box = None

    def build_mesh(self, config):
        """
        Build the mesh of a run.

        config -- CaseConfig

        Returns a Mesh.
        """
        mesh_config = config.mesh
        mesh = generate_cartesian(self.dim, mesh_config['n_el'], self.box)
        distortion = mesh_config.get('distortion', 0.0)
        if distortion:
            mesh = distort(mesh, distortion * mesh.min_edge_length(),
                           mesh_config.get('seed', 42))
        return mesh

    def boundary(self, config):
        """Get the BoundaryConditions of a run."""
        return BoundaryConditions()

    def exact(self, config):
        """Get the ExactSolution of a run, or None."""
        return None

    def reynolds(self, config):
        """Get the Reynolds number entering the equations."""
        return config.re

    def initial_state(self, velocity_space, pressure_space, config):
        """
        Get the initial velocity and pressure.

        Returns (u0, p0) Fields; fluid at rest by default.
        """
        return Field(velocity_space), Field(pressure_space)


class ExactSolutionCase(FlowCase):
    """A periodic-type flow with a known solution on a box."""

    kind = None

    def exact(self, config):
        """Get the ExactSolution of a run."""
        return ExactSolution(self.kind, self.reynolds(config))

    def boundary(self, config):
        """Impose the exact velocity on every boundary."""
        return BoundaryConditions(self.exact(config).velocity)

    def initial_state(self, velocity_space, pressure_space, config):
        """Interpolate the exact solution at t = 0."""
        solution = self.exact(config)
        return (interpolate(velocity_space, solution.velocity),
                interpolate(pressure_space, solution.pressure))


class TaylorGreenCase(ExactSolutionCase):
    """The decaying Taylor-Green vortex on (0, 2 pi)^2."""

    name = 'taylor-green'
    kind = TAYLOR_GREEN
    dim = 2
    re = 100.0
    final_time = 3.2
    target_cfl = 1.63
    box = [(0.0, 2.0 * math.pi)] * 2


class AbcCase(ExactSolutionCase):
    """The decaying Arnold-Beltrami-Childress flow on (0, 2 pi)^3."""

    name = 'abc'
    kind = ABC
    dim = 3
    re = 1.0
    final_time = 3.2
    velocity_scale = 2.0
    box = [(0.0, 2.0 * math.pi)] * 3


def _lid_velocity(x, t):
    out = np.zeros_like(x)
    out[..., 0] = 1.0
    return out


class CavityCase(FlowCase):
    """The lid-driven cavity on (0, 1)^2."""

    name = 'cavity2d'
    dim = 2
    re = 1000.0
    final_time = 100.0
    target_cfl = 1.3

    def boundary(self, config):
        """Move the top wall at unit speed, all other walls fixed."""
        return BoundaryConditions({LID: _lid_velocity})


def inflow_profile(x, t):
    """Parabolic channel inflow with peak PEAK_INFLOW."""
    out = np.zeros_like(x)
    y = x[..., 1]
    out[..., 0] = 4.0 * PEAK_INFLOW * y * (CHANNEL_HEIGHT - y) / \
        CHANNEL_HEIGHT ** 2
    return out


class CylinderCase(FlowCase):
    """
    Flow past a cylinder in a channel.

    The configured Reynolds number is based on the mean inflow and the
    cylinder diameter; the equations are written in the dimensional
    lengths of the channel, so the viscosity entering them is
    MEAN_INFLOW * diameter / Re.
    """

    name = 'cylinder'
    dim = 2
    re = 100.0
    final_time = 8.0
    velocity_scale = MEAN_INFLOW
    diameter = 2.0 * CYLINDER_RADIUS

    def build_mesh(self, config):
        """Build the channel at the configured resolution level."""
        return generate_cylinder_channel(config.mesh.get('level', 0))

    def boundary(self, config):
        """Parabolic inflow, no-slip walls and cylinder, free outlet."""
        return BoundaryConditions({INLET: inflow_profile},
                                  outflow=(OUTLET,))

    def reynolds(self, config):
        """Rescale the diameter-based Reynolds number to unit length."""
        return config.re / (MEAN_INFLOW * self.diameter)


class CustomMeshCase(FlowCase):
    """A no-slip flow on a mesh read from a file."""

    name = 'custom-mesh'

    def build_mesh(self, config):
        """Read the mesh file of the run."""
        path = config.mesh.get('path')
        if not path:
            raise ConfigError(['custom-mesh needs mesh.path'])

        mesh = load_mesh(path)
        if mesh.dim != config.dim:
            raise ConfigError(['mesh file is {}D but dim is {}'.format(
                mesh.dim, config.dim)])
        return mesh


CASES = {
    case.name: case
    for case in (TaylorGreenCase, AbcCase, CavityCase, CylinderCase,
                 CustomMeshCase)
}


def get_case(name):
    """Get a FlowCase instance by name."""
    try:
        return CASES[name]()
    except KeyError:
        raise ConfigError(['unknown case {!r}, expected one of {}'.format(
            name, sorted(CASES))])
