"""Vorticity-driven mesh adaptation and solution transfer."""

import logging
import math

import numpy as np

from .errors import AnalysisError, ConfigError, MeshError
from .mesh import refine_and_coarsen
from .space import Field, build_space, cell_geometry, tensor_points
from .utils import run_chunked

logger = logging.getLogger(__name__)


class AdaptConfig:
    """Parameters of the adaptive remeshing protocol."""

    def __init__(self, refine_fraction=0.10, coarsen_fraction=0.30,
                 remesh_interval=1000, trigger_check_interval=50,
                 trigger_threshold=1e-2, min_diam=None, max_diam=None):
        """
        Initialize the object.

        refine_fraction -- share of active cells refined per remesh
        coarsen_fraction -- share of active cells coarsened per remesh
        remesh_interval -- steps between remeshes
        trigger_check_interval -- steps between checks of the velocity change
        trigger_threshold -- max-norm velocity change between consecutive
                             steps above which remeshing stays on
        min_diam -- smallest diameter a refined cell may reach, or None
        max_diam -- largest diameter a coarsened cell may reach, or None
        """
        self.refine_fraction = refine_fraction
        self.coarsen_fraction = coarsen_fraction
        self.remesh_interval = remesh_interval
        self.trigger_check_interval = trigger_check_interval
        self.trigger_threshold = trigger_threshold
        self.min_diam = min_diam
        self.max_diam = max_diam
        self.validate()

    def __repr__(self):
        """Describe the configuration."""
        return 'AdaptConfig(refine={}, coarsen={}, every {} steps)'.format(
            self.refine_fraction, self.coarsen_fraction,
            self.remesh_interval)

    def validate(self):
        """Check the parameters, raising ConfigError with every problem."""
        problems = []
        for name in ('refine_fraction', 'coarsen_fraction'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                problems.append('{} must lie in [0, 1], got {}'.format(
                    name, value))
        for name in ('remesh_interval', 'trigger_check_interval'):
            if getattr(self, name) < 1:
                problems.append('{} must be at least 1'.format(name))
        if self.trigger_threshold < 0.0:
            problems.append('trigger_threshold must be nonnegative')
        if self.min_diam is not None and self.max_diam is not None and \
                self.min_diam > self.max_diam:
            problems.append('min_diam {} exceeds max_diam {}'.format(
                self.min_diam, self.max_diam))
        if problems:
            raise ConfigError(problems)

    def as_dict(self):
        """Get the parameters as a plain dictionary."""
        return {
            'refine_fraction': self.refine_fraction,
            'coarsen_fraction': self.coarsen_fraction,
            'remesh_interval': self.remesh_interval,
            'trigger_check_interval': self.trigger_check_interval,
            'trigger_threshold': self.trigger_threshold,
            'min_diam': self.min_diam,
            'max_diam': self.max_diam,
        }


def compute_indicator(velocity, threads=1):
    """
    Compute diam(K)^2 times the squared L2(K) norm of the vorticity.

    velocity -- 2D velocity Field
    threads -- worker threads for the cell loop

    Returns one value per active cell.
    """
    space = velocity.space
    if space.dim != 2:
        raise AnalysisError('The vorticity indicator needs a 2D velocity')

    n_points = space.degree + 2
    geo = cell_geometry(space.mesh, n_points)
    diam = space.mesh.cell_diameters()
    local = velocity.local()
    eta = np.zeros(space.n_cells)

    def kernel(cells):
        grad = space.cell_integrator(n_points).gradients(local[cells], cells)
        omega = grad[:, 1, :, 0] - grad[:, 0, :, 1]
        eta[cells] = diam[cells] ** 2 * np.sum(omega ** 2 * geo.jxw[cells],
                                               axis=1)

    run_chunked(space.n_cells, threads, kernel)
    return eta


def mark_cells(indicators, config, mesh):
    """
    Choose the cells to refine and to coarsen.

    indicators -- one value per active cell
    config -- AdaptConfig
    mesh -- Mesh the indicators belong to

    Returns (refine_set, coarsen_set), sorted active positions. The largest
    ceil(refine_fraction n) values are refined and the smallest
    floor(coarsen_fraction n) of the rest coarsened, ties going to the lower
    position; cells whose diameter would leave [min_diam, max_diam] are
    dropped from their set.
    """
    eta = np.asarray(indicators, dtype=float)
    n = mesh.n_active
    if eta.shape != (n,):
        raise MeshError('Need {} indicators, got {}'.format(n, eta.size))

    diam = mesh.cell_diameters()
    index = np.arange(n)
    n_refine = int(math.ceil(config.refine_fraction * n))
    n_coarsen = int(math.floor(config.coarsen_fraction * n))

    by_largest = np.lexsort((index, -eta))
    refine = by_largest[:n_refine]
    chosen = np.zeros(n, dtype=bool)
    chosen[refine] = True
    by_smallest = [p for p in np.lexsort((index, eta)) if not chosen[p]]
    coarsen = np.asarray(by_smallest[:n_coarsen], dtype=int)

    if config.min_diam is not None:
        vetoed = refine[0.5 * diam[refine] < config.min_diam]
        refine = refine[0.5 * diam[refine] >= config.min_diam]
        if len(vetoed):
            logger.debug('min_diam vetoed refining %d cells', len(vetoed))
    if config.max_diam is not None:
        vetoed = coarsen[2.0 * diam[coarsen] > config.max_diam]
        coarsen = coarsen[2.0 * diam[coarsen] <= config.max_diam]
        if len(vetoed):
            logger.debug('max_diam vetoed coarsening %d cells', len(vetoed))

    return sorted(refine.tolist()), sorted(coarsen.tolist())


def _child_points(points, child, dim):
    """Map child reference points into the parent reference cell."""
    bits = np.array([(child >> r) & 1 for r in range(dim)], dtype=float)
    return 0.5 * (points + bits)


def transfer_solution(fields, old_mesh, new_mesh):
    """
    Move Fields from a mesh to its refined and coarsened successor.

    fields -- Fields on old_mesh
    old_mesh -- Mesh the fields live on
    new_mesh -- result of one refine_and_coarsen call on old_mesh

    Returns Fields on new_mesh. Unchanged cells are copied, new children
    get the parent polynomial by injection and restored parents the L2
    projection of their children.
    """
    dim = old_mesh.dim
    n_old = len(old_mesh.active)
    copied = []
    injected = []
    projected = []
    for pos, cell in enumerate(new_mesh.active_cells.tolist()):
        if cell < n_old and old_mesh.active[cell]:
            copied.append((pos, old_mesh.position[cell]))
            continue

        parent = int(new_mesh.parents[cell])
        if 0 <= parent < n_old and old_mesh.active[parent]:
            child = new_mesh.children[parent].tolist().index(cell)
            injected.append((pos, old_mesh.position[parent], child))
            continue

        children = old_mesh.children[cell]
        if cell < n_old and children[0] >= 0 and \
                np.all(old_mesh.active[children]):
            projected.append((pos, old_mesh.position[children]))
            continue

        raise MeshError('Cell {} is not one refinement step away from the '
                        'old mesh'.format(cell), cells=[cell])

    result = []
    for field in fields:
        old_space = field.space
        space = build_space(new_mesh, old_space.degree, old_space.components)
        old = field.local()
        new = space.local(space.zeros())
        for pos, old_pos in copied:
            new[pos] = old[old_pos]

        if injected:
            nodes = tensor_points(space.nodes, dim)
            tables = [space.tabulate(_child_points(nodes, c, dim))[0]
                      for c in range(2 ** dim)]
            for pos, old_pos, child in injected:
                new[pos] = old[old_pos] @ tables[child].T

        if projected:
            new_values = _project_children(old_space, space, old, projected)
            for pos, values in new_values:
                new[pos] = values

        result.append(Field(space, new.ravel()))

    logger.debug('Transferred %d fields: %d copied, %d injected, %d '
                 'projected cells', len(fields), len(copied), len(injected),
                 len(projected))
    return result


def _project_children(old_space, space, old, projected):
    dim = space.dim
    n_points = space.degree + 2
    geo = cell_geometry(old_space.mesh, n_points)
    quad = geo.quadrature.points
    child_values = old_space.tabulate(quad)[0]
    parent_tables = [space.tabulate(_child_points(quad, c, dim))[0]
                     for c in range(2 ** dim)]
    out = []
    for pos, children in projected:
        mass = np.zeros((space.n_basis, space.n_basis))
        rhs = np.zeros((space.components, space.n_basis))
        for child, old_pos in enumerate(children.tolist()):
            table = parent_tables[child] * geo.jxw[old_pos][:, None]
            mass += table.T @ parent_tables[child]
            rhs += (old[old_pos] @ child_values.T) @ table
        out.append((pos, np.linalg.solve(mass, rhs.T).T))
    return out


class RemeshTrigger:
    """Decide when the adaptive protocol remeshes."""

    def __init__(self, config):
        """
        Initialize the object.

        config -- AdaptConfig
        """
        self.config = config
        self.active = True
        self.last_change = None

    def check(self, step, u_new, u_old):
        """
        Update the trigger after a step.

        step -- index of the step just taken
        u_new -- velocity after the step
        u_old -- velocity before the step

        Returns True when the mesh should be adapted now.
        """
        config = self.config
        if step % config.trigger_check_interval == 0:
            self.last_change = float(np.abs(u_new.values -
                                            u_old.values).max(initial=0.0))
            self.active = self.last_change > config.trigger_threshold
            logger.debug('Velocity change %.3e at step %d, remeshing %s',
                         self.last_change, step,
                         'on' if self.active else 'off')
        return self.active and step % config.remesh_interval == 0


def adapt_mesh(mesh, velocity, config, threads=1):
    """
    Run one indicator, marking and refinement pass.

    mesh -- current Mesh
    velocity -- velocity Field on mesh
    config -- AdaptConfig
    threads -- worker threads for the indicator

    Returns the new Mesh; its n_refined, n_coarsened and n_closure
    attributes describe the change.
    """
    eta = compute_indicator(velocity, threads)
    refine, coarsen = mark_cells(eta, config, mesh)
    return refine_and_coarsen(mesh, refine, coarsen)
