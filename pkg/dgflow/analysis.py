"""Exact solutions, error norms and flow diagnostics."""

import logging
import math

import numpy as np

from .errors import AnalysisError
from .forms import MASS_SOLVE, SipOperator, mass_operator, quadrature_points
from .krylov import SolverSettings, cg_solve, jacobi_preconditioner
from .mesh import CYLINDER
from .space import Field, build_space, cell_geometry, evaluate, tensor_points

logger = logging.getLogger(__name__)

TAYLOR_GREEN = 'taylor-green'
ABC = 'abc'
CUSTOM = 'custom'

STREAMFUNCTION_SOLVE = SolverSettings('cg', rel_tol=1e-10)

PRESSURE_POINTS = ((0.15, 0.2), (0.25, 0.2))


class ExactSolution:
    """An analytic velocity and pressure pair."""

    def __init__(self, kind, re=1.0, velocity=None, pressure=None,
                 gradient=None, dim=None, pressure_decay=False):
        """
        Initialize the object.

        kind -- TAYLOR_GREEN, ABC or CUSTOM
        re -- Reynolds number of the decay rates
        velocity -- f(x, t) -> (..., d), CUSTOM only
        pressure -- f(x, t) -> (...), CUSTOM only
        gradient -- f(x, t) -> (..., d, d) with [i, j] = du_i / dx_j,
                    CUSTOM only
        dim -- dimension, CUSTOM only
        pressure_decay -- let the ABC pressure decay as exp(-2 t / Re);
                          the default keeps it time-independent
        """
        if kind == TAYLOR_GREEN:
            dim = 2
        elif kind == ABC:
            dim = 3
        elif kind == CUSTOM:
            if velocity is None or pressure is None or dim is None:
                raise AnalysisError(
                    'A custom solution needs velocity, pressure and dim')
        else:
            raise AnalysisError('Unknown exact solution {!r}'.format(kind))

        self.kind = kind
        self.re = re
        self.dim = dim
        self.pressure_decay = pressure_decay
        self._velocity = velocity
        self._pressure = pressure
        self._gradient = gradient

    def __repr__(self):
        """Describe the solution."""
        return 'ExactSolution({}, Re={})'.format(self.kind, self.re)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise AnalysisError('{} is {}D, got {}D points'.format(
                self.kind, self.dim, x.shape[-1]))
        return x

    def velocity(self, x, t):
        """Evaluate the velocity at points (..., d)."""
        x = self._check(x)
        if self.kind == TAYLOR_GREEN:
            f = math.exp(-2.0 * t / self.re)
            x1, x2 = x[..., 0], x[..., 1]
            return np.stack([np.cos(x1) * np.sin(x2) * f,
                             -np.sin(x1) * np.cos(x2) * f], axis=-1)

        if self.kind == ABC:
            f = math.exp(-t / self.re)
            x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
            return np.stack([(np.sin(x3) + np.cos(x2)) * f,
                             (np.sin(x1) + np.cos(x3)) * f,
                             (np.sin(x2) + np.cos(x1)) * f], axis=-1)

        return np.asarray(self._velocity(x, t), dtype=float)

    def pressure(self, x, t):
        """Evaluate the pressure at points (..., d)."""
        x = self._check(x)
        if self.kind == TAYLOR_GREEN:
            f = math.exp(-4.0 * t / self.re)
            return -0.25 * (np.cos(2.0 * x[..., 0]) +
                            np.cos(2.0 * x[..., 1])) * f

        if self.kind == ABC:
            f = math.exp(-2.0 * t / self.re) if self.pressure_decay else 1.0
            x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
            return -(np.sin(x1) * np.cos(x3) + np.sin(x2) * np.cos(x1) +
                     np.sin(x3) * np.cos(x2)) * f

        return np.asarray(self._pressure(x, t), dtype=float)

    def gradient(self, x, t):
        """Evaluate the velocity gradient, (..., d, d)."""
        x = self._check(x)
        if self.kind == TAYLOR_GREEN:
            f = math.exp(-2.0 * t / self.re)
            s1, c1 = np.sin(x[..., 0]), np.cos(x[..., 0])
            s2, c2 = np.sin(x[..., 1]), np.cos(x[..., 1])
            return f * np.stack([np.stack([-s1 * s2, c1 * c2], axis=-1),
                                 np.stack([-c1 * c2, s1 * s2], axis=-1)],
                                axis=-2)

        if self.kind == ABC:
            f = math.exp(-t / self.re)
            s = np.sin(x)
            c = np.cos(x)
            zero = np.zeros(x.shape[:-1])
            return f * np.stack([
                np.stack([zero, -s[..., 1], c[..., 2]], axis=-1),
                np.stack([c[..., 0], zero, -s[..., 2]], axis=-1),
                np.stack([-s[..., 0], c[..., 1], zero], axis=-1)], axis=-2)

        if self._gradient is None:
            raise AnalysisError('This custom solution has no gradient')

        return np.asarray(self._gradient(x, t), dtype=float)


def exact_eval(solution, x, t):
    """
    Evaluate an exact solution.

    solution -- ExactSolution
    x -- points (..., d)
    t -- time

    Returns (velocity, pressure).
    """
    return solution.velocity(x, t), solution.pressure(x, t)


class ErrorReport:
    """Relative errors of one run against an exact solution."""

    def __init__(self, u_l2, u_h1, u_linf, p_l2, n_dofs_u, n_dofs_p,
                 cfl=None, mu=None):
        """
        Initialize the object.

        u_l2 -- relative L2 velocity error
        u_h1 -- relative broken H1 velocity error
        u_linf -- relative max-norm velocity error
        p_l2 -- relative L2 error of the mean-free pressure
        n_dofs_u -- velocity dofs
        n_dofs_p -- pressure dofs
        cfl -- Courant number of the run
        mu -- diffusion number of the run
        """
        self.u_l2 = u_l2
        self.u_h1 = u_h1
        self.u_linf = u_linf
        self.p_l2 = p_l2
        self.n_dofs_u = n_dofs_u
        self.n_dofs_p = n_dofs_p
        self.cfl = cfl
        self.mu = mu

    def __repr__(self):
        """Describe the report."""
        return 'ErrorReport(u_L2={:.3e}, u_H1={:.3e}, p_L2={:.3e})'.format(
            self.u_l2, self.u_h1, self.p_l2)

    def as_dict(self):
        """Get the report as a plain dictionary."""
        return {
            'err_u_L2': self.u_l2,
            'err_u_H1': self.u_h1,
            'err_u_Linf': self.u_linf,
            'err_p_L2': self.p_l2,
            'n_dofs_u': self.n_dofs_u,
            'n_dofs_p': self.n_dofs_p,
            'C': self.cfl,
            'mu': self.mu,
        }


def _ratio(error, norm):
    return error / norm if norm > 0.0 else error


def error_norms(field_u, field_p, solution, t, cfl=None, mu=None):
    """
    Compute relative errors against an exact solution.

    field_u -- velocity Field
    field_p -- pressure Field
    solution -- ExactSolution
    t -- time of the exact solution
    cfl, mu -- stability parameters recorded in the report

    Returns an ErrorReport. L2 and H1 use k + 3 points per direction; the
    max norm samples quadrature points and basis nodes.
    """
    vspace = field_u.space
    pspace = field_p.space
    mesh = vspace.mesh
    n_points = vspace.degree + 3
    geo = cell_geometry(mesh, n_points)
    jxw = geo.jxw
    x = geo.points

    cell = vspace.cell_integrator(n_points)
    uh = cell.values(field_u.local()).transpose(0, 2, 1)
    gh = cell.gradients(field_u.local()).transpose(0, 2, 1, 3)
    u = solution.velocity(x, t)
    g = solution.gradient(x, t)
    l2 = np.sum(np.sum((uh - u) ** 2, axis=-1) * jxw)
    l2_ref = np.sum(np.sum(u ** 2, axis=-1) * jxw)
    h1 = l2 + np.sum(np.sum((gh - g) ** 2, axis=(-2, -1)) * jxw)
    h1_ref = l2_ref + np.sum(np.sum(g ** 2, axis=(-2, -1)) * jxw)

    nodes = vspace.node_points()
    un = field_u.local().transpose(0, 2, 1)
    u_nodes = solution.velocity(nodes, t)
    linf = max(np.linalg.norm(uh - u, axis=-1).max(),
               np.linalg.norm(un - u_nodes, axis=-1).max())
    linf_ref = max(np.linalg.norm(u, axis=-1).max(),
                   np.linalg.norm(u_nodes, axis=-1).max())

    ph = pspace.cell_integrator(n_points).values(field_p.local())[:, 0]
    p = solution.pressure(x, t)
    measure = np.sum(jxw)
    ph = ph - np.sum(ph * jxw) / measure
    p = p - np.sum(p * jxw) / measure
    pl2 = np.sum((ph - p) ** 2 * jxw)
    pl2_ref = np.sum(p ** 2 * jxw)

    return ErrorReport(
        _ratio(math.sqrt(l2), math.sqrt(l2_ref)),
        _ratio(math.sqrt(h1), math.sqrt(h1_ref)),
        _ratio(float(linf), float(linf_ref)),
        _ratio(math.sqrt(pl2), math.sqrt(pl2_ref)),
        vspace.n_dofs, pspace.n_dofs, cfl, mu)


def convergence_rates(errors):
    """
    Compute observed rates of a family refined by factors of two.

    errors -- errors from coarsest to finest

    Returns one rate log2(e_coarse / e_fine) per consecutive pair, None
    where an error is zero.
    """
    rates = []
    for coarse, fine in zip(errors[:-1], errors[1:]):
        if not coarse > 0.0 or not fine > 0.0:
            rates.append(None)
        else:
            rates.append(math.log2(coarse / fine))
    return rates


def _scalar_space(velocity):
    space = velocity.space
    key = ('scalar', space.degree)
    if key not in space.cache:
        space.cache[key] = build_space(space.mesh, space.degree, 1)
    return space.cache[key]


def _require_2d(velocity):
    if velocity.space.dim != 2:
        raise AnalysisError('Vorticity is defined for 2D flows only')


def vorticity_at_quadrature(velocity, n_points):
    """Evaluate dv/dx1 - du/dx2 of a 2D velocity at cell quadrature."""
    _require_2d(velocity)
    grad = velocity.space.cell_integrator(n_points).gradients(
        velocity.local())
    return grad[:, 1, :, 0] - grad[:, 0, :, 1]


def compute_vorticity(velocity):
    """
    Project the vorticity of a 2D velocity into the scalar degree-k space.

    Returns a Field.
    """
    space = _scalar_space(velocity)
    n_points = quadrature_points(space)
    omega = vorticity_at_quadrature(velocity, n_points)
    rhs = space.cell_integrator(n_points).integrate(values=omega[:, None])
    mass = mass_operator(space)
    values, _ = cg_solve(mass, rhs.ravel(), MASS_SOLVE,
                         jacobi_preconditioner(mass))
    return Field(space, values)


def solve_streamfunction(velocity, vorticity=None):
    """
    Solve -Laplace(psi) = omega with psi = 0 on the boundary.

    velocity -- 2D velocity Field
    vorticity -- projected vorticity Field, computed if omitted

    Returns the streamfunction Field.
    """
    _require_2d(velocity)
    if vorticity is None:
        vorticity = compute_vorticity(velocity)

    space = vorticity.space
    operator = SipOperator(space, dirichlet=True)
    rhs = mass_operator(space).matvec(vorticity.values)
    values, iterations = cg_solve(operator, rhs, STREAMFUNCTION_SOLVE,
                                  jacobi_preconditioner(operator))
    logger.debug('Streamfunction solved in %d iterations', iterations)
    return Field(space, values)


def point_value(field, point):
    """Evaluate a Field at a physical point of its mesh."""
    pos, xi = field.space.mesh.locate(point)
    value, _ = evaluate(field, pos, xi)
    return value


def sample_line(field, start, end, n_points):
    """
    Sample a Field along a segment.

    field -- Field
    start, end -- physical end points
    n_points -- number of equispaced samples

    Returns (points (n, d), values (n, components)).
    """
    s = np.linspace(0.0, 1.0, n_points)[:, None]
    points = (1.0 - s) * np.asarray(start, float) + s * np.asarray(end,
                                                                   float)
    return points, np.array([point_value(field, x) for x in points])


def pressure_drop(p_field, points=PRESSURE_POINTS):
    """
    Get p(front) - p(back) between two sample points.

    Returns the difference of the point values.
    """
    front, back = points
    return float(point_value(p_field, front)[0] -
                 point_value(p_field, back)[0])


def aero_coefficients(state, mesh, re, U, L, boundary_id=CYLINDER):
    """
    Compute drag and lift coefficients on a tagged boundary.

    state -- SchemeState
    mesh -- Mesh of the state
    re -- Reynolds number of the equations
    U -- reference velocity
    L -- reference length
    boundary_id -- id of the body surface

    Returns a dict with t, cd and cl. The force is the integral of
    -p n + (1 / Re) grad(u) n with n pointing out of the body, taken with
    k + 2 Gauss points per face direction.
    """
    faces = mesh.get_faces()
    body = np.flatnonzero(faces.boundary_id == boundary_id)
    if len(body) == 0:
        raise AnalysisError('Mesh has no boundary with id {}'.format(
            boundary_id))

    vspace = state.u_n.space
    n_points = vspace.degree + 2
    vface = vspace.face_integrator(n_points)
    pface = state.p_n.space.face_integrator(n_points)
    geo = vface.geometry
    grad = vface.gradients(state.u_n.local(), geo.boundary)[body]
    p = pface.values(state.p_n.local(), geo.boundary)[body, 0]
    # Face normals point out of the fluid, into the body.
    n = -geo.boundary_normal[body]
    traction = -p[:, :, None] * n + \
        np.einsum('fcqi,fqi->fqc', grad, n) / re
    force = np.einsum('fqc,fq->c', traction, geo.boundary_jxw[body])
    scale = 2.0 / (U ** 2 * L)
    return {
        't': state.time,
        'cd': float(scale * force[0]),
        'cl': float(scale * force[1]),
    }


def strouhal(lift_series, times, D, U):
    """
    Get the Strouhal number of a lift coefficient history.

    lift_series -- lift coefficients
    times -- sample times
    D -- body diameter
    U -- reference velocity

    Returns D f / U, with f from the mean spacing of upward zero crossings
    of the mean-free lift.
    """
    cl = np.asarray(lift_series, dtype=float)
    t = np.asarray(times, dtype=float)
    s = cl - cl.mean()
    index = np.flatnonzero((s[:-1] < 0.0) & (s[1:] >= 0.0))
    if len(index) < 2:
        raise AnalysisError('Need at least 2 lift zero crossings, got {}'
                            .format(len(index)))

    crossings = t[index] - s[index] * (t[index + 1] - t[index]) / \
        (s[index + 1] - s[index])
    frequency = (len(crossings) - 1) / (crossings[-1] - crossings[0])
    return D * frequency / U


class ForceReport:
    """Force coefficient history of a bluff-body run."""

    def __init__(self):
        """Initialize the object."""
        self.samples = []

    def add(self, t, cd, cl, dp):
        """Append one sample."""
        self.samples.append((t, cd, cl, dp))

    def _window(self, start=None):
        rows = [r for r in self.samples if start is None or r[0] >= start]
        if not rows:
            raise AnalysisError('No force samples in the window')
        return np.array(rows)

    def max_cd(self, start=None):
        """Get the maximal drag coefficient."""
        return float(self._window(start)[:, 1].max())

    def max_cl(self, start=None):
        """Get the maximal lift coefficient."""
        return float(self._window(start)[:, 2].max())

    def dp_at_max_cd(self, start=None):
        """Get the pressure drop at the sample of maximal drag."""
        rows = self._window(start)
        return float(rows[np.argmax(rows[:, 1]), 3])

    def strouhal(self, D, U, start=None):
        """Get the Strouhal number of the lift history."""
        rows = self._window(start)
        return strouhal(rows[:, 2], rows[:, 0], D, U)

    def summary(self, D, U, start=None):
        """Get the derived quantities as a dictionary."""
        summary = {
            'max_cd': self.max_cd(start),
            'max_cl': self.max_cl(start),
            'dp': self.dp_at_max_cd(start),
        }
        try:
            summary['st'] = self.strouhal(D, U, start)
        except AnalysisError as e:
            logger.info('No Strouhal number: %s', e)
            summary['st'] = None
        return summary


def cavity_diagnostics(velocity, n_samples=129):
    """
    Compute the lid-driven cavity diagnostics on (0, 1)^2.

    velocity -- 2D velocity Field
    n_samples -- samples per centerline and per direction of the
                 streamfunction search grid

    Returns a dict with the centerline profiles, the extreme horizontal
    velocity on the vertical centerline, the primary vortex center and the
    vorticity there and at the cavity midpoint.
    """
    _require_2d(velocity)
    vertical, u_line = sample_line(velocity, (0.5, 0.0), (0.5, 1.0),
                                   n_samples)
    horizontal, v_line = sample_line(velocity, (0.0, 0.5), (1.0, 0.5),
                                     n_samples)
    vorticity = compute_vorticity(velocity)
    psi = solve_streamfunction(velocity, vorticity)
    grid = tensor_points(np.linspace(0.02, 0.98, n_samples), 2)
    psi_values = np.array([point_value(psi, x)[0] for x in grid])
    center = grid[int(np.argmin(psi_values))]
    return {
        'vertical': (vertical[:, 1], u_line[:, 0]),
        'horizontal': (horizontal[:, 0], v_line[:, 1]),
        'u_min': float(u_line[:, 0].min()),
        'u_max_abs': float(np.abs(u_line[:, 0]).max()),
        'psi_min': float(psi_values.min()),
        'vortex_center': center,
        'omega_vortex': float(point_value(vorticity, center)[0]),
        'omega_midpoint': float(point_value(vorticity, (0.5, 0.5))[0]),
    }

