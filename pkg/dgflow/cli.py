"""Command line interface: runs, convergence studies, mesh generation."""

import argparse
import csv
import logging
import os
import sys

import meshio
import numpy as np

from .analysis import (cavity_diagnostics, compute_vorticity,
                       convergence_rates, error_norms, solve_streamfunction)
from .cases import MEAN_INFLOW, CavityCase
from .config import HYPERBOLIC, PARABOLIC, SCALINGS, CaseConfig, load_config
from .errors import ConfigError, DgflowError
from .mesh import distort, generate_cartesian, generate_cylinder_channel
from .run import CaseRun
from .simulation import Simulation
from .space import map_points, tensor_points
from .subscriber import CsvSubscriber, Subscriber
from .utils import format_float

logger = logging.getLogger(__name__)

CONVERGENCE_COLUMNS = ['dt', 'n_el', 'C', 'mu', 'err_u_L2', 'rate_u_L2',
                       'err_u_H1', 'rate_u_H1', 'err_u_Linf', 'err_p_L2',
                       'rate_p_L2']

LOG_FORMAT = '%(asctime)s %(filename)s:%(lineno)s %(levelname)s %(message)s'

_VTK_ORDER = {
    2: [(0, 0), (1, 0), (1, 1), (0, 1)],
    3: [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
        (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)],
}


def _subdivision(degree, dim):
    """Get reference points and VTK connectivity of a k-times split cell."""
    n = degree + 1
    ref = tensor_points(np.linspace(0.0, 1.0, n), dim)
    cells = []
    for index in np.ndindex(*([degree] * dim)):
        cells.append([
            sum((index[::-1][r] + corner[r]) * n ** r for r in range(dim))
            for corner in _VTK_ORDER[dim]])
    return ref, np.array(cells, dtype=int)


def _sample(field, ref):
    values, _ = field.space.tabulate(ref)
    return np.einsum('mb,ncb->nmc', values, field.local())


def write_fields(state, mesh, path, streamfunction=False):
    """
    Write a state as a VTK XML unstructured grid.

    state -- SchemeState
    mesh -- Mesh of the state
    path -- destination .vtu file
    streamfunction -- also solve for and write the 2D streamfunction

    Each cell is split degree times per direction; every cell keeps its own
    copy of its points so discontinuities stay visible. Data is written in
    single precision.
    """
    velocity = state.u_n
    dim = mesh.dim
    ref, local_cells = _subdivision(velocity.space.degree, dim)
    points, _ = map_points(mesh.cell_corners(), ref)
    n_ref = len(ref)
    offsets = np.arange(mesh.n_active)[:, None, None] * n_ref
    connectivity = (local_cells[None] + offsets).reshape(-1, 2 ** dim)

    u = _sample(velocity, ref).reshape(-1, dim)
    point_data = {
        'velocity': np.pad(u, ((0, 0), (0, 3 - dim))).astype(np.float32),
        'pressure': _sample(state.p_n, ref).ravel().astype(np.float32),
    }
    if dim == 2:
        vorticity = compute_vorticity(velocity)
        point_data['vorticity'] = _sample(vorticity, ref).ravel().astype(
            np.float32)
        if streamfunction:
            psi = solve_streamfunction(velocity, vorticity)
            point_data['streamfunction'] = _sample(psi, ref).ravel().astype(
                np.float32)

    points = points.reshape(-1, dim)
    if dim == 2:
        points = np.pad(points, ((0, 0), (0, 1)))
    cell_type = 'quad' if dim == 2 else 'hexahedron'
    meshio.write_points_cells(path, points.astype(np.float32),
                              [(cell_type, connectivity)],
                              point_data=point_data, file_format='vtu')
    logger.debug('Wrote %s', path)


class SnapshotSubscriber(Subscriber):
    """Write a VTU snapshot every few steps."""

    def __init__(self, simulation, directory, every, streamfunction=False):
        """
        Initialize the object.

        simulation -- Simulation to snapshot
        directory -- output directory
        every -- steps between snapshots
        streamfunction -- include the streamfunction in 2D
        """
        self.simulation = simulation
        self.directory = directory
        self.every = every
        self.streamfunction = streamfunction

    def write(self):
        """Write the current state."""
        simulation = self.simulation
        path = os.path.join(self.directory, 'fields_{:06d}.vtu'.format(
            simulation.get_state().step))
        write_fields(simulation.get_state(), simulation.get_mesh(), path,
                     self.streamfunction)

    def update_step(self, event):
        """Write a snapshot when the step is due."""
        if event.data['step'] % self.every == 0:
            self.write()

    def update_adaptation(self, event):
        """Adaptations need no snapshot."""
        pass

    def update_forces(self, event):
        """Force samples need no snapshot."""
        pass

    def update_run(self, run):
        """Snapshot the initial and final states."""
        if run.get_status() in ('pending', 'completed'):
            self.write()


class BenchmarkRun(CaseRun):
    """A CaseRun that evaluates the case diagnostics at the end."""

    def __init__(self, simulation, directory=None):
        """
        Initialize the object.

        simulation -- the Simulation to run
        directory -- output directory receiving run.json, or None
        """
        CaseRun.__init__(self, simulation, directory)
        self.report = None

    def perform_run(self):
        """Advance the simulation, then compute its diagnostics."""
        simulation = self.get_simulation()
        simulation.run()
        state = simulation.get_state()
        if simulation.exact is not None:
            self.report = error_norms(state.u_n, state.p_n, simulation.exact,
                                      state.time, simulation.cfl,
                                      simulation.mu)
            self.summary['errors'] = self.report.as_dict()
        if simulation.forces is not None and simulation.forces.samples:
            self.summary['forces'] = simulation.forces.summary(
                simulation.case.diameter, MEAN_INFLOW)
        if isinstance(simulation.case, CavityCase):
            diagnostics = cavity_diagnostics(state.u_n)
            self.summary['cavity'] = {
                key: value for key, value in diagnostics.items()
                if isinstance(value, float)}
            self.summary['cavity']['vortex_center'] = \
                diagnostics['vortex_center'].tolist()
        self.summary['steady'] = simulation.steady


def _n_el(config):
    n_el = config.mesh['n_el']
    return n_el if np.isscalar(n_el) else n_el[0]


def _convergence_rows(results):
    errors = {key: [getattr(r, key) for _, _, r in results]
              for key in ('u_l2', 'u_h1', 'p_l2')}
    rates = {key: [None] + convergence_rates(values)
             for key, values in errors.items()}
    rows = []
    for i, (n_el, dt, report) in enumerate(results):
        rows.append({
            'dt': dt,
            'n_el': n_el,
            'C': report.cfl,
            'mu': report.mu,
            'err_u_L2': report.u_l2,
            'rate_u_L2': rates['u_l2'][i],
            'err_u_H1': report.u_h1,
            'rate_u_H1': rates['u_h1'][i],
            'err_u_Linf': report.u_linf,
            'err_p_L2': report.p_l2,
            'rate_p_L2': rates['p_l2'][i],
        })
    return rows


def write_convergence(rows, path):
    """Write a convergence table as CSV; absent rates are empty fields."""
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=CONVERGENCE_COLUMNS,
                                lineterminator='\r\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({
                key: '' if value is None else
                (value if isinstance(value, int) else format_float(value))
                for key, value in row.items()})


def run_case(config, directory=None):
    """
    Run one case and write its artifacts.

    config -- CaseConfig
    directory -- output directory, config.output['directory'] if omitted

    Returns the finished BenchmarkRun. Its report attribute holds the
    ErrorReport of cases with an exact solution.
    """
    directory = directory or config.output['directory']
    os.makedirs(directory, exist_ok=True)
    simulation = Simulation(config)
    simulation.add_subscriber(CsvSubscriber(directory))
    output = config.output
    if output['snapshot_every'] or config.time['final'] == 0.0:
        simulation.add_subscriber(SnapshotSubscriber(
            simulation, directory, output['snapshot_every'] or 1,
            output['streamfunction']))

    run = BenchmarkRun(simulation, directory)
    run.start()
    if run.report is not None:
        row = (_n_el(config), simulation.dt, run.report)
        write_convergence(_convergence_rows([row]),
                          os.path.join(directory, 'convergence.csv'))
    return run


def _level_config(base, level, scaling):
    data = base.as_dict()
    n_el = data['mesh']['n_el']
    factor = 2 ** level
    data['mesh']['n_el'] = n_el * factor if np.isscalar(n_el) \
        else [n * factor for n in n_el]
    time = data['time']
    if time['dt'] is not None:
        time['dt'] = time['dt'] / (factor if scaling == HYPERBOLIC
                                   else factor ** 2)
    elif time['target_cfl'] is not None and scaling != HYPERBOLIC:
        raise ConfigError(['target_cfl needs hyperbolic scaling'])
    elif time['target_mu'] is not None and scaling != PARABOLIC:
        raise ConfigError(['target_mu needs parabolic scaling'])
    data['output']['directory'] = os.path.join(
        base.output['directory'], 'level_{}'.format(level))
    return CaseConfig(data)


def convergence_study(base_config, levels, scaling, directory=None):
    """
    Run a family of meshes refined by factors of two.

    base_config -- CaseConfig of the coarsest level
    levels -- number of levels, at least 1
    scaling -- HYPERBOLIC halves dt per level, PARABOLIC quarters it
    directory -- output directory of the table

    Returns the table rows. convergence.csv is rewritten after each level
    so a failing level leaves the finished rows behind.
    """
    if scaling not in SCALINGS:
        raise ConfigError(['scaling must be one of {}'.format(SCALINGS)])
    if levels < 1:
        raise ConfigError(['levels must be at least 1'])
    if base_config.get_case().exact(base_config) is None:
        raise ConfigError(['case {} has no exact solution'.format(
            base_config.case)])

    directory = directory or base_config.output['directory']
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, 'convergence.csv')
    results = []
    rows = []
    for level in range(levels):
        config = _level_config(base_config, level, scaling)
        out = os.path.join(directory, 'level_{}'.format(level))
        logger.info('Convergence level %d: n_el=%s', level,
                    config.mesh['n_el'])
        run = run_case(config, out)
        results.append((_n_el(config), run.get_simulation().dt, run.report))
        rows = _convergence_rows(results)
        write_convergence(rows, path)
    return rows


def _apply_flags(args, overrides):
    overrides = list(overrides or [])
    if getattr(args, 'out', None):
        overrides.append('output.directory={}'.format(
            _json_string(args.out)))
    if getattr(args, 'threads', None):
        overrides.append('threads={}'.format(args.threads))
    if getattr(args, 'serial_deterministic', False):
        overrides.append('threads=1')
        overrides.append('serial_deterministic=true')
    return overrides


def _json_string(text):
    return '"{}"'.format(text.replace('\\', '\\\\').replace('"', '\\"'))


def _config_from_args(args):
    return load_config(args.config, _apply_flags(args, args.set),
                       case=args.case)


def _command_run(args):
    config = _config_from_args(args)
    run = run_case(config)
    if run.report is not None:
        logger.info('%r', run.report)
    return 0


def _command_study(args):
    config = _config_from_args(args)
    rows = convergence_study(config, args.levels, args.scaling)
    for row in rows:
        logger.info('n_el=%s dt=%g err_u_L2=%.3e rate=%s', row['n_el'],
                    row['dt'], row['err_u_L2'], row['rate_u_L2'])
    return 0


def _command_mesh(args):
    if args.kind == 'cylinder':
        mesh = generate_cylinder_channel(args.level)
    else:
        box = None
        if args.box:
            values = args.box
            if len(values) != 2 * args.dim:
                raise ConfigError(['--box needs 2 values per direction'])
            box = [(values[2 * r], values[2 * r + 1])
                   for r in range(args.dim)]
        mesh = generate_cartesian(args.dim, args.n_el, box)
        if args.distortion:
            mesh = distort(mesh, args.distortion * mesh.min_edge_length(),
                           args.seed)
    mesh.export(args.output)
    logger.info('Wrote %r to %s', mesh, args.output)
    return 0


def _add_run_options(parser):
    parser.add_argument('config', nargs='?', default=None,
                        help='JSON configuration file')
    parser.add_argument('--case', default=None,
                        help='case name, overriding the file')
    parser.add_argument('--set', action='append', default=[],
                        metavar='KEY=VALUE',
                        help='override a configuration key, e.g. '
                             'time.dt=0.32')
    parser.add_argument('--out', default=None, help='output directory')
    parser.add_argument('--threads', type=int, default=None,
                        help='worker threads for operator loops')
    parser.add_argument('--serial-deterministic', action='store_true',
                        help='single thread, bit-identical outputs')


def build_parser():
    """Build the argument parser of the dgflow command."""
    parser = argparse.ArgumentParser(
        prog='dgflow',
        description='Matrix-free DG incompressible flow solver')
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='log at DEBUG level')
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    run = commands.add_parser('run', help='run one case')
    _add_run_options(run)
    run.set_defaults(func=_command_run)

    study = commands.add_parser('study', help='run a convergence study')
    _add_run_options(study)
    study.add_argument('--levels', type=int, default=4)
    study.add_argument('--scaling', choices=SCALINGS, default=HYPERBOLIC)
    study.set_defaults(func=_command_study)

    mesh = commands.add_parser('mesh', help='generate a mesh file')
    mesh.add_argument('kind', choices=['cartesian', 'cylinder'])
    mesh.add_argument('--dim', type=int, default=2)
    mesh.add_argument('--n-el', type=int, default=8)
    mesh.add_argument('--box', type=float, nargs='+', default=None,
                      help='low and high bound per direction')
    mesh.add_argument('--distortion', type=float, default=0.0,
                      help='vertex displacement as a fraction of the '
                           'shortest edge')
    mesh.add_argument('--seed', type=int, default=42)
    mesh.add_argument('--level', type=int, default=0,
                      help='refinement level of the cylinder channel')
    mesh.add_argument('-o', '--output', required=True)
    mesh.set_defaults(func=_command_mesh)
    return parser


def main(argv=None):
    """
    Run the dgflow command.

    argv -- arguments, sys.argv[1:] if omitted

    Returns the exit status.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=LOG_FORMAT
    )
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error('%s', e)
        return 2
    except DgflowError as e:
        logger.error('%s', e)
        return 1


if __name__ == '__main__':
    sys.exit(main())
