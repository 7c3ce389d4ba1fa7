"""
Matrix-free DG forms of the projection schemes.

Face terms are written with the owner's outward normal n, and on a hanging
face the owner is the fine cell, so the coarse trace is evaluated at the
subface quadrature points. Dirichlet data enters through the mirror state
u_ext = 2 g - u, never through ghost cells.

Velocity operators use k + 1 quadrature points per direction, advection is
over-integrated with k + 2.
"""

import collections
import copy
import logging

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .errors import ConfigError, SpaceError
from .krylov import SolverSettings, cg_solve, jacobi_preconditioner
from .space import Field
from .utils import run_chunked

logger = logging.getLogger(__name__)

DIRICHLET = 'dirichlet'
OUTFLOW = 'outflow'

# Stage weights of TR-BDF2.
GAMMA = 2.0 - np.sqrt(2.0)
A33 = 1.0 / (2.0 - GAMMA)
A32 = (1.0 - GAMMA) / (2.0 * (2.0 - GAMMA))
A31 = A32

MASS_SOLVE = SolverSettings('cg', rel_tol=1e-12)

# One explicitly treated viscous and advective contribution:
# -viscous * a(velocity, v) - advection * c(advecting; velocity, v), with
# Dirichlet data taken at the given time. With skew set, c carries the
# divergence and normal-jump corrections of the advecting field.
ExplicitTerm = collections.namedtuple(
    'ExplicitTerm',
    ['viscous', 'advection', 'velocity', 'advecting', 'time', 'skew'],
    defaults=(False,))


def _zero_velocity(x, t):
    return np.zeros_like(x)


class BoundaryConditions:
    """Velocity boundary conditions per boundary id."""

    def __init__(self, dirichlet=None, outflow=()):
        """
        Initialize the object.

        dirichlet -- callable g(x, t) returning (..., dim) used on every
                     boundary that is not an outflow, or a dict
                     {boundary id: callable}; ids missing from the dict are
                     no-slip walls
        outflow -- boundary ids carrying the zero-stress outflow condition
        """
        if dirichlet is None:
            dirichlet = _zero_velocity

        self.dirichlet = dirichlet
        self.outflow = frozenset(int(b) for b in outflow)

    def __repr__(self):
        """Describe the conditions."""
        return 'BoundaryConditions(outflow={})'.format(sorted(self.outflow))

    def kind(self, boundary_id):
        """Get DIRICHLET or OUTFLOW for a boundary id."""
        return OUTFLOW if int(boundary_id) in self.outflow else DIRICHLET

    def function_for(self, boundary_id):
        """Get the Dirichlet function of a boundary id."""
        if callable(self.dirichlet):
            return self.dirichlet

        return self.dirichlet.get(int(boundary_id), _zero_velocity)

    def dirichlet_mask(self, boundary_ids):
        """Get a boolean mask of the Dirichlet faces among boundary ids."""
        ids = np.asarray(boundary_ids, dtype=int)
        if not self.outflow:
            return np.ones(len(ids), dtype=bool)

        return ~np.isin(ids, sorted(self.outflow))

    def data(self, points, time, boundary_ids):
        """
        Evaluate the Dirichlet data at boundary face points.

        points -- (nf, nq, d) physical points
        time -- evaluation time
        boundary_ids -- boundary id per face

        Returns (nf, nq, d); rows of outflow faces are zero.
        """
        ids = np.asarray(boundary_ids, dtype=int)
        out = np.zeros(points.shape)
        for bid in np.unique(ids).tolist():
            if bid in self.outflow:
                continue

            index = np.flatnonzero(ids == bid)
            out[index] = self.function_for(bid)(points[index], time)
        return out


class PenaltyTable:
    """
    Interior penalty constants of a mesh for one polynomial degree.

    interior and boundary hold C = (degree + 1)^2 diam(face) / diam(cell),
    averaged over both sides on interior faces. The penalty applied in the
    forms is tau = C |dK| / |K|, with the larger ratio of the two sides on
    interior faces and a factor 2 on boundary faces.
    """

    def __init__(self, mesh, degree):
        """
        Initialize the object.

        mesh -- Mesh
        degree -- polynomial degree of the penalized space
        """
        faces = mesh.get_faces()
        diam = mesh.cell_diameters()
        ratio = mesh.surface_to_volume()
        sigma = (degree + 1) ** 2
        self.degree = degree
        self.interior = 0.5 * sigma * (
            faces.interior_diam / diam[faces.owner] +
            faces.interior_diam / diam[faces.neighbor])
        self.boundary = sigma * faces.boundary_diam / diam[faces.boundary_cell]
        self.interior_tau = self.interior * np.maximum(ratio[faces.owner],
                                                       ratio[faces.neighbor])
        self.boundary_tau = 2.0 * self.boundary * ratio[faces.boundary_cell]


def penalty_table(mesh, degree):
    """Get the cached PenaltyTable of a mesh and degree."""
    key = ('penalty', degree)
    if key not in mesh.cache:
        mesh.cache[key] = PenaltyTable(mesh, degree)
    return mesh.cache[key]


class OperatorContext:
    """Parameters shared by the operator applications of one solve."""

    def __init__(self, re, c, dt, stage_weight=1.0, viscous_weight=1.0,
                 advection_weight=None, advecting=None, boundary=None,
                 time=0.0, skew=False, threads=1):
        """
        Initialize the object.

        re -- Reynolds number
        c -- artificial sound speed
        dt -- time step
        stage_weight -- alpha, the fraction of dt covered by the stage
        viscous_weight -- weight of the implicit viscous term
        advection_weight -- weight of the implicit advection, defaults to
                            viscous_weight
        advecting -- velocity Field transporting the unknown
        boundary -- BoundaryConditions, no-slip everywhere if omitted
        time -- time at which implicit Dirichlet data is taken
        skew -- add -(div w) u / 2 on cells and [w . n] {u} / 2 on
                interior faces, so that c(w; u, u) >= 0 for any w
        threads -- worker threads for cell loops
        """
        self.re = re
        self.c = c
        self.dt = dt
        self.stage_weight = stage_weight
        self.viscous_weight = viscous_weight
        self.advection_weight = advection_weight
        self.advecting = advecting
        self.boundary = boundary or BoundaryConditions()
        self.time = time
        self.skew = skew
        self.threads = threads
        self.validate()

    def __repr__(self):
        """Describe the context."""
        return ('OperatorContext(Re={}, c={}, dt={}, alpha={:.6f}, '
                't={:.6f})').format(self.re, self.c, self.dt,
                                    self.stage_weight, self.time)

    def validate(self):
        """Check the parameters, raising ConfigError with every problem."""
        problems = []
        for name in ('re', 'c', 'dt', 'stage_weight'):
            if not getattr(self, name) > 0.0:
                problems.append('{} must be positive, got {}'.format(
                    name, getattr(self, name)))
        if self.advecting is not None and not self.advecting.is_finite():
            problems.append('advecting field is not finite')
        if problems:
            raise ConfigError(problems)

    def replace(self, **changes):
        """Get a validated copy with some parameters changed."""
        ctx = copy.copy(self)
        for name, value in changes.items():
            if not hasattr(ctx, name):
                raise ConfigError('OperatorContext has no parameter {!r}'
                                  .format(name))
            setattr(ctx, name, value)
        ctx.validate()
        return ctx

    @property
    def mass_factor(self):
        """1 / (alpha dt)."""
        return 1.0 / (self.stage_weight * self.dt)

    @property
    def viscosity(self):
        """Implicit viscosity viscous_weight / Re."""
        return self.viscous_weight / self.re

    @property
    def advection(self):
        """Implicit advection weight."""
        if self.advection_weight is None:
            return self.viscous_weight

        return self.advection_weight

    @property
    def compressibility(self):
        """1 / (c^2 alpha^2 dt^2)."""
        return 1.0 / (self.c * self.stage_weight * self.dt) ** 2


def quadrature_points(space):
    """
    Get the points per direction of the standard quadrature of a space.

    Velocity spaces of degree k use k + 1; scalar spaces, one degree lower
    for the pressure, use the same count.
    """
    if space.components > 1:
        return space.degree + 1

    return space.degree + 2


def _check_space(field, space, what):
    if not field.space.same_as(space):
        raise SpaceError('{} lives in {}, expected {}'.format(
            what, field.space, space))


def _normal_component(values, normal):
    """Contract canonical (nf, comps, nq) values with (nf, nq, comps)."""
    return np.einsum('fcq,fqc->fq', values, normal)


def _normal_flux(gradients, normal):
    """Contract (nf, comps, nq, d) gradients with the normal."""
    return np.einsum('fcqi,fqi->fcq', gradients, normal)


def _outer_normal(values, normal, jxw):
    """Build weighted u (x) n as (nf, comps, nq, d) gradient data."""
    return values[..., None] * normal[:, None, :, :] * jxw[:, None, :, None]


def _by_normal(values, normal):
    """Scale (nf, nq) scalars by the normal into (nf, d, nq) data."""
    return values[:, None, :] * normal.transpose(0, 2, 1)


def _viscous_faces(space, u, nu, penalty, boundary, out, n_points):
    """Accumulate the SIP face terms of nu * a(u, v)."""
    face = space.face_integrator(n_points)
    geo = face.geometry
    if geo.faces.n_interior:
        n = geo.normal
        jump = face.values(u, geo.owner) - face.values(u, geo.neighbor)
        mean = 0.5 * (face.gradients(u, geo.owner) +
                      face.gradients(u, geo.neighbor))
        flux = nu * (penalty.interior_tau[:, None, None] * jump -
                     _normal_flux(mean, n)) * geo.jxw[:, None, :]
        grad = -0.5 * nu * _outer_normal(jump, n, geo.jxw)
        face.integrate(out, geo.owner, values=flux, gradients=grad)
        face.integrate(out, geo.neighbor, values=-flux, gradients=grad)

    if geo.faces.n_boundary and boundary is not None:
        mask = boundary.dirichlet_mask(geo.boundary_id)
        if np.any(mask):
            n = geo.boundary_normal
            jxw = geo.boundary_jxw * mask[:, None]
            ub = face.values(u, geo.boundary)
            gb = face.gradients(u, geo.boundary)
            flux = nu * (penalty.boundary_tau[:, None, None] * ub -
                         _normal_flux(gb, n)) * jxw[:, None, :]
            grad = -nu * _outer_normal(ub, n, jxw)
            face.integrate(out, geo.boundary, values=flux, gradients=grad)


def _skew_jump(wp, wm, up, um, scale):
    """Get the owner and neighbor face data of [w . n] {u . v} / 2."""
    jump = 0.25 * (wp - wm)[:, None] * scale
    return jump * up, jump * um


def _advection_faces(space, u, w, beta, boundary, out, skew=False):
    """Accumulate the Lax-Friedrichs face terms of beta * c(w; u, v)."""
    face = space.face_integrator(space.degree + 2)
    geo = face.geometry
    if geo.faces.n_interior:
        n = geo.normal
        up = face.values(u, geo.owner)
        um = face.values(u, geo.neighbor)
        wp = _normal_component(face.values(w, geo.owner), n)
        wm = _normal_component(face.values(w, geo.neighbor), n)
        lam = np.maximum(np.abs(wp), np.abs(wm))
        scale = beta * geo.jxw[:, None, :]
        flux = 0.5 * (up * wp[:, None] + um * wm[:, None] +
                      lam[:, None] * (up - um)) * scale
        owner, neighbor = flux, -flux
        if skew:
            jp, jm = _skew_jump(wp, wm, up, um, scale)
            owner, neighbor = owner + jp, neighbor + jm
        face.integrate(out, geo.owner, values=owner)
        face.integrate(out, geo.neighbor, values=neighbor)

    if geo.faces.n_boundary:
        mask = boundary.dirichlet_mask(geo.boundary_id)
        wn = _normal_component(face.values(w, geo.boundary),
                               geo.boundary_normal)
        speed = np.where(mask[:, None], np.abs(wn), np.maximum(wn, 0.0))
        flux = beta * (speed * geo.boundary_jxw)[:, None, :] * \
            face.values(u, geo.boundary)
        face.integrate(out, geo.boundary, values=flux)


def _advection_cells(space, u, w, beta, skew, out, cells):
    cell = space.cell_integrator(space.degree + 2)
    uq = cell.values(u[cells])
    wq = cell.values(w[cells])
    flux = -beta * uq[..., None] * wq.transpose(0, 2, 1)[:, None, :, :]
    values = None
    if skew:
        div = np.einsum('ncqc->nq', cell.gradients(w[cells], cells))
        values = -0.5 * beta * div[:, None, :] * uq
    out[cells] += cell.integrate(values=values, gradients=flux, cells=cells)


class MatrixFreeOperator(LinearOperator):
    """
    A square operator on a FunctionSpace applied without assembly.

    Subclasses implement apply_local on (ncells, comps, nb) coefficients.
    The components of the space must not couple, which lets diagonal()
    extract every component at once.
    """

    def __init__(self, space, threads=1):
        """
        Initialize the object.

        space -- FunctionSpace of the domain and range
        threads -- worker threads for cell loops
        """
        self.space = space
        self.threads = threads
        self._diagonal = None
        LinearOperator.__init__(self, dtype=np.dtype(float),
                                shape=(space.n_dofs, space.n_dofs))

    def apply_local(self, local):
        """Apply the operator to local coefficients."""
        raise NotImplementedError

    def _matvec(self, x):
        local = self.space.local(np.ravel(x))
        return self.apply_local(local).ravel()

    def apply(self, field):
        """Apply the operator to a Field, returning a Field."""
        _check_space(field, self.space, 'Operand')
        return Field(self.space, self._matvec(field.values))

    def diagonal(self):
        """Get the operator diagonal, extracted once per cell color."""
        if self._diagonal is None:
            self._diagonal = extract_diagonal(self)
        return self._diagonal


def extract_diagonal(operator):
    """
    Compute the diagonal of a MatrixFreeOperator by probing.

    Cells of one color share no face, so a unit vector that is one on basis
    function b of every cell of a color returns the diagonal entries of
    those cells.

    Returns the flat diagonal.
    """
    space = operator.space
    colors = space.mesh.cell_coloring()
    shape = (space.n_cells, space.components, space.n_basis)
    diagonal = np.zeros(shape)
    for color in range(int(colors.max()) + 1):
        cells = colors == color
        for b in range(space.n_basis):
            unit = np.zeros(shape)
            unit[cells, :, b] = 1.0
            result = operator.apply_local(unit)
            diagonal[cells, :, b] = result[cells, :, b]
    return diagonal.ravel()


class MassOperator(MatrixFreeOperator):
    """The DG mass matrix, cell-local."""

    def apply_local(self, local):
        """Apply M."""
        cell = self.space.cell_integrator(quadrature_points(self.space))
        out = np.zeros_like(local)

        def kernel(cells):
            out[cells] = cell.integrate(values=cell.values(local[cells]),
                                        cells=cells)

        run_chunked(self.space.n_cells, self.threads, kernel)
        return out


def mass_operator(space):
    """Get the cached MassOperator of a space."""
    if 'mass' not in space.cache:
        space.cache['mass'] = MassOperator(space)
    return space.cache['mass']


def apply_velocity_mass(space, field):
    """
    Apply the mass matrix without assembling it.

    space -- FunctionSpace of the field
    field -- Field

    Returns M field as a Field.
    """
    return mass_operator(space).apply(field)


class MomentumOperator(MatrixFreeOperator):
    """
    The implicit momentum predictor operator.

    Applies (1 / (alpha dt)) M + nu A + beta C(w), where A is the SIP form
    with Dirichlet penalty rows and C the Lax-Friedrichs advection form with
    lambda = max(|w+ . n|, |w- . n|).
    """

    def __init__(self, ctx, space, include_mass=True):
        """
        Initialize the object.

        ctx -- OperatorContext; its advecting field defines w
        space -- velocity FunctionSpace
        include_mass -- whether the (1 / (alpha dt)) M term is applied
        """
        MatrixFreeOperator.__init__(self, space, ctx.threads)
        self.ctx = ctx
        self.include_mass = include_mass
        self.penalty = penalty_table(space.mesh, space.degree)
        self.advecting = None
        if ctx.advecting is not None and ctx.advection != 0.0:
            _check_space(ctx.advecting, space, 'Advecting field')
            self.advecting = ctx.advecting.local()

    def apply_local(self, local):
        """Apply the operator."""
        ctx = self.ctx
        space = self.space
        nu = ctx.viscosity
        beta = ctx.advection
        w = self.advecting
        cell = space.cell_integrator(space.degree + 1)
        out = np.zeros_like(local)

        def kernel(cells):
            u = local[cells]
            values = ctx.mass_factor * cell.values(u) \
                if self.include_mass else None
            gradients = nu * cell.gradients(u, cells) if nu else None
            out[cells] = cell.integrate(values=values, gradients=gradients,
                                        cells=cells)
            if w is not None:
                _advection_cells(space, local, w, beta, ctx.skew, out, cells)

        run_chunked(space.n_cells, self.threads, kernel)
        if nu:
            _viscous_faces(space, local, nu, self.penalty, ctx.boundary, out,
                           space.degree + 1)
        if w is not None:
            _advection_faces(space, local, w, beta, ctx.boundary, out,
                             ctx.skew)
        return out


def apply_momentum_operator(ctx, field, include_mass=True):
    """
    Apply the momentum predictor operator to a velocity Field.

    ctx -- OperatorContext carrying the advecting field and weights
    field -- velocity Field
    include_mass -- whether the (1 / (alpha dt)) M term is applied

    Returns a Field.
    """
    return MomentumOperator(ctx, field.space, include_mass).apply(field)


def _explicit_terms(space, term, boundary, out, threads):
    """
    Accumulate -nu a(u_e, v) - beta c_central(w_e; u_e, v).

    With term.skew set the divergence and jump corrections are included.
    """
    nu = term.viscous
    beta = term.advection
    u = term.velocity.local()
    w = term.advecting.local() if term.advecting is not None else None
    cell = space.cell_integrator(space.degree + 1)
    over = space.cell_integrator(space.degree + 2)

    def kernel(cells):
        if nu:
            out[cells] += cell.integrate(
                gradients=-nu * cell.gradients(u[cells], cells), cells=cells)
        if beta and w is not None:
            uq = over.values(u[cells])
            wq = over.values(w[cells])
            flux = beta * uq[..., None] * wq.transpose(0, 2, 1)[:, None]
            values = None
            if term.skew:
                div = np.einsum('ncqc->nq', over.gradients(w[cells], cells))
                values = 0.5 * beta * div[:, None, :] * uq
            out[cells] += over.integrate(values=values, gradients=flux,
                                         cells=cells)

    run_chunked(space.n_cells, threads, kernel)

    if nu:
        face = space.face_integrator(space.degree + 1)
        geo = face.geometry
        if geo.faces.n_interior:
            mean = 0.5 * (face.gradients(u, geo.owner) +
                          face.gradients(u, geo.neighbor))
            flux = nu * _normal_flux(mean, geo.normal) * geo.jxw[:, None, :]
            face.integrate(out, geo.owner, values=flux)
            face.integrate(out, geo.neighbor, values=-flux)
        if geo.faces.n_boundary:
            mask = boundary.dirichlet_mask(geo.boundary_id)
            flux = nu * _normal_flux(face.gradients(u, geo.boundary),
                                     geo.boundary_normal)
            flux *= (geo.boundary_jxw * mask[:, None])[:, None, :]
            face.integrate(out, geo.boundary, values=flux)

    if beta and w is not None:
        face = space.face_integrator(space.degree + 2)
        geo = face.geometry
        if geo.faces.n_interior:
            n = geo.normal
            up = face.values(u, geo.owner)
            um = face.values(u, geo.neighbor)
            wp = _normal_component(face.values(w, geo.owner), n)
            wm = _normal_component(face.values(w, geo.neighbor), n)
            scale = -beta * geo.jxw[:, None, :]
            flux = 0.5 * (up * wp[:, None] + um * wm[:, None]) * scale
            owner, neighbor = flux, -flux
            if term.skew:
                jp, jm = _skew_jump(wp, wm, up, um, scale)
                owner, neighbor = owner + jp, neighbor + jm
            face.integrate(out, geo.owner, values=owner)
            face.integrate(out, geo.neighbor, values=neighbor)
        if geo.faces.n_boundary:
            mask = boundary.dirichlet_mask(geo.boundary_id)
            wn = _normal_component(face.values(w, geo.boundary),
                                   geo.boundary_normal)
            g = boundary.data(geo.boundary_points, term.time,
                              geo.boundary_id).transpose(0, 2, 1)
            ub = face.values(u, geo.boundary)
            state = np.where(mask[:, None, None], g * wn[:, None],
                             ub * np.maximum(wn, 0.0)[:, None])
            face.integrate(out, geo.boundary,
                           values=-beta * state *
                           geo.boundary_jxw[:, None, :])


def _dirichlet_data(ctx, space, out):
    """Accumulate the Dirichlet data terms of the implicit operator."""
    boundary = ctx.boundary
    nu = ctx.viscosity
    face = space.face_integrator(space.degree + 1)
    geo = face.geometry
    if not geo.faces.n_boundary:
        return

    mask = boundary.dirichlet_mask(geo.boundary_id)
    if not np.any(mask):
        return

    if nu:
        penalty = penalty_table(space.mesh, space.degree)
        g = boundary.data(geo.boundary_points, ctx.time,
                          geo.boundary_id).transpose(0, 2, 1)
        jxw = geo.boundary_jxw * mask[:, None]
        values = nu * penalty.boundary_tau[:, None, None] * g * \
            jxw[:, None, :]
        grad = -nu * _outer_normal(g, geo.boundary_normal, jxw)
        face.integrate(out, geo.boundary, values=values, gradients=grad)

    beta = ctx.advection
    if beta and ctx.advecting is not None:
        face = space.face_integrator(space.degree + 2)
        geo = face.geometry
        w = ctx.advecting.local()
        g = boundary.data(geo.boundary_points, ctx.time,
                          geo.boundary_id).transpose(0, 2, 1)
        wn = _normal_component(face.values(w, geo.boundary),
                               geo.boundary_normal)
        jxw = geo.boundary_jxw * mask[:, None]
        values = beta * g * ((np.abs(wn) - wn) * jxw)[:, None, :]
        face.integrate(out, geo.boundary, values=values)


def _pressure_term(space, pressure, out):
    """Accumulate int p div v - sum_F int {p} [v . n] into out."""
    n_points = space.degree + 1
    pspace = pressure.space
    p = pressure.local()
    cell = space.cell_integrator(n_points)
    pq = pspace.cell_integrator(n_points).values(p)[:, 0]
    eye = np.eye(space.dim)
    out += cell.integrate(
        gradients=pq[:, None, :, None] * eye[None, :, None, :])

    face = space.face_integrator(n_points)
    pface = pspace.face_integrator(n_points)
    geo = face.geometry
    if geo.faces.n_interior:
        mean = 0.5 * (pface.values(p, geo.owner) +
                      pface.values(p, geo.neighbor))[:, 0]
        values = -_by_normal(mean * geo.jxw, geo.normal)
        face.integrate(out, geo.owner, values=values)
        face.integrate(out, geo.neighbor, values=-values)
    if geo.faces.n_boundary:
        pb = pface.values(p, geo.boundary)[:, 0]
        face.integrate(out, geo.boundary,
                       values=-_by_normal(pb * geo.boundary_jxw,
                                          geo.boundary_normal))


def momentum_rhs(ctx, space, mass_source=None, explicit=(), pressure=None):
    """
    Evaluate a momentum predictor right-hand side.

    ctx -- OperatorContext of the implicit system
    space -- velocity FunctionSpace
    mass_source -- Field s contributing (1 / (alpha dt)) M s
    explicit -- ExplicitTerm tuples
    pressure -- pressure Field whose weak gradient is subtracted

    Returns the right-hand side vector, including the Dirichlet data of the
    implicit operator at ctx.time.
    """
    out = np.zeros((space.n_cells, space.components, space.n_basis))
    if mass_source is not None:
        _check_space(mass_source, space, 'Mass source')
        out += ctx.mass_factor * space.local(
            mass_operator(space).matvec(mass_source.values))
    for term in explicit:
        _explicit_terms(space, term, ctx.boundary, out, ctx.threads)
    if pressure is not None:
        _pressure_term(space, pressure, out)
    _dirichlet_data(ctx, space, out)
    return out.ravel()


def momentum_rhs_stage1(ctx, u_n, u_extrapolated, p_n):
    """
    Evaluate the first TR-BDF2 stage right-hand side.

    ctx -- stage context: alpha = gamma, time t_n + gamma dt
    u_n -- velocity at t_n
    u_extrapolated -- velocity advecting the explicit half of the advection
    p_n -- pressure at t_n

    Returns the right-hand side vector.
    """
    t_n = ctx.time - ctx.stage_weight * ctx.dt
    term = ExplicitTerm(0.5 / ctx.re, 0.5, u_n, u_extrapolated, t_n,
                        ctx.skew)
    return momentum_rhs(ctx, u_n.space, u_n, [term], p_n)


def momentum_rhs_stage2(ctx, u_n, u_gamma, u_extrapolated, p_gamma):
    """
    Evaluate the second TR-BDF2 stage right-hand side.

    ctx -- stage context: alpha = 1 - gamma, time t_n + dt
    u_n -- velocity at t_n
    u_gamma -- velocity after the first stage
    u_extrapolated -- advecting field of the implicit part; it enters only
                      through ctx.advecting and is accepted for symmetry
                      with the first stage
    p_gamma -- pressure after the first stage

    Returns the right-hand side vector.
    """
    t_gamma = ctx.time - (1.0 - GAMMA) * ctx.dt
    t_n = ctx.time - ctx.dt
    terms = [
        ExplicitTerm(A32 / ctx.re, A32, u_gamma, u_gamma, t_gamma, ctx.skew),
        ExplicitTerm(A31 / ctx.re, A31, u_n, u_n, t_n, ctx.skew),
    ]
    return momentum_rhs(ctx, u_gamma.space, u_gamma, terms, p_gamma)


class SipOperator(MatrixFreeOperator):
    """
    The SIP Laplacian of a scalar space plus a mass shift.

    Without Dirichlet rows only interior faces contribute, which is the
    homogeneous Neumann pressure operator.
    """

    def __init__(self, space, shift=0.0, dirichlet=False, threads=1):
        """
        Initialize the object.

        space -- scalar FunctionSpace
        shift -- coefficient of the mass term
        dirichlet -- add homogeneous Dirichlet penalty rows on the boundary
        threads -- worker threads for cell loops
        """
        MatrixFreeOperator.__init__(self, space, threads)
        self.shift = shift
        self.dirichlet = dirichlet
        self.penalty = penalty_table(space.mesh, space.degree)
        self.boundary = BoundaryConditions() if dirichlet else None

    def apply_local(self, local):
        """Apply shift M + K."""
        space = self.space
        n_points = quadrature_points(space)
        cell = space.cell_integrator(n_points)
        out = np.zeros_like(local)

        def kernel(cells):
            p = local[cells]
            values = self.shift * cell.values(p) if self.shift else None
            out[cells] = cell.integrate(values=values,
                                        gradients=cell.gradients(p, cells),
                                        cells=cells)

        run_chunked(space.n_cells, self.threads, kernel)
        _viscous_faces(space, local, 1.0, self.penalty, self.boundary, out,
                       n_points)
        return out


class HelmholtzOperator(SipOperator):
    """The pressure operator (1 / (c^2 alpha^2 dt^2)) M + K."""

    def __init__(self, ctx, space):
        """
        Initialize the object.

        ctx -- OperatorContext
        space -- pressure FunctionSpace
        """
        SipOperator.__init__(self, space, ctx.compressibility,
                             threads=ctx.threads)
        self.ctx = ctx


def apply_pressure_helmholtz(ctx, field):
    """
    Apply the pressure Helmholtz operator to a pressure Field.

    Returns a Field.
    """
    return HelmholtzOperator(ctx, field.space).apply(field)


def weak_divergence(velocity, pressure_space):
    """
    Evaluate the weak divergence of a velocity against pressure tests.

    D(u)(q) = -int u . grad q + sum_I int {u} . n [q] + sum_B int u . n q,
    with the velocity trace on every boundary face.

    velocity -- velocity Field
    pressure_space -- scalar FunctionSpace of the tests

    Returns a vector over the pressure space.
    """
    vspace = velocity.space
    n_points = vspace.degree + 1
    u = velocity.local()
    out = np.zeros((pressure_space.n_cells, 1, pressure_space.n_basis))
    uq = vspace.cell_integrator(n_points).values(u)
    pcell = pressure_space.cell_integrator(n_points)
    out += pcell.integrate(gradients=-uq.transpose(0, 2, 1)[:, None])

    vface = vspace.face_integrator(n_points)
    pface = pressure_space.face_integrator(n_points)
    geo = vface.geometry
    if geo.faces.n_interior:
        mean = 0.5 * (vface.values(u, geo.owner) +
                      vface.values(u, geo.neighbor))
        values = (_normal_component(mean, geo.normal) * geo.jxw)[:, None]
        pface.integrate(out, geo.owner, values=values)
        pface.integrate(out, geo.neighbor, values=-values)
    if geo.faces.n_boundary:
        trace = vface.values(u, geo.boundary)
        values = (_normal_component(trace, geo.boundary_normal) *
                  geo.boundary_jxw)[:, None]
        pface.integrate(out, geo.boundary, values=values)
    return out.ravel()


def pressure_rhs(ctx, u_double_star, p_old, pressure_space=None):
    """
    Evaluate the Helmholtz right-hand side.

    ctx -- OperatorContext of the stage
    u_double_star -- velocity including the projected old pressure gradient
    p_old -- pressure Field, or None for the increment form
    pressure_space -- needed when p_old is None

    Returns -(1 / (alpha dt)) D(u**) + (1 / (c^2 alpha^2 dt^2)) M p_old.
    """
    space = p_old.space if p_old is not None else pressure_space
    rhs = -ctx.mass_factor * weak_divergence(u_double_star, space)
    if p_old is not None:
        rhs += ctx.compressibility * mass_operator(space).matvec(
            p_old.values)
    return rhs


def divergence_residual(ctx, u_pre, p_new, p_ref=None):
    """
    Measure how well the discrete divergence identity holds after a solve.

    ctx -- OperatorContext of the stage
    u_pre -- velocity the Helmholtz right-hand side was built from
    p_new -- solved pressure (or increment) Field
    p_ref -- pressure in the mass term of the right-hand side, if any

    Returns |D(u_pre) + alpha dt (K p + eps M (p - p_ref))| normalized by
    |D(u_pre)| + alpha dt eps |M p_ref|.
    """
    space = p_new.space
    alpha_dt = ctx.stage_weight * ctx.dt
    div = weak_divergence(u_pre, space)
    mass = mass_operator(space)
    residual = div + alpha_dt * HelmholtzOperator(ctx, space).matvec(
        p_new.values)
    scale = float(np.linalg.norm(div))
    if p_ref is not None:
        reference = ctx.compressibility * mass.matvec(p_ref.values)
        residual -= alpha_dt * reference
        scale += alpha_dt * float(np.linalg.norm(reference))
    norm = float(np.linalg.norm(residual))
    return norm / scale if scale > 0.0 else norm


def project_pressure_gradient(p_field, velocity_space):
    """
    Project the broken gradient of a pressure into the velocity space.

    p_field -- pressure Field
    velocity_space -- velocity FunctionSpace

    Returns the Field u solving M u = P p, P_ij = int grad psi_j . phi_i.
    """
    n_points = velocity_space.degree + 1
    grad = p_field.space.cell_integrator(n_points).gradients(
        p_field.local())[:, 0]
    rhs = velocity_space.cell_integrator(n_points).integrate(
        values=grad.transpose(0, 2, 1))
    mass = mass_operator(velocity_space)
    values, _ = cg_solve(mass, rhs.ravel(), MASS_SOLVE,
                         jacobi_preconditioner(mass))
    return Field(velocity_space, values)


def velocity_update(u_star, grad_proj_new, grad_proj_old, alpha_dt):
    """
    Subtract the projected gradient of the pressure increment.

    u_star -- predicted velocity Field
    grad_proj_new -- projected gradient of the new pressure
    grad_proj_old -- projected gradient of the old pressure, or None
    alpha_dt -- alpha dt of the stage

    Returns u_star - alpha_dt (grad_proj_new - grad_proj_old).
    """
    increment = grad_proj_new.values
    if grad_proj_old is not None:
        increment = increment - grad_proj_old.values
    return Field(u_star.space, u_star.values - alpha_dt * increment)


def kinetic_energy(velocity):
    """Get 1/2 int |u|^2 of a velocity Field."""
    space = velocity.space
    return 0.5 * float(velocity.values @ mass_operator(space).matvec(
        velocity.values))
