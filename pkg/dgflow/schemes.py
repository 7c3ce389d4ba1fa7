"""Projection schemes: TR-BDF2 and the BCG and BDF2 baselines."""

import logging

import numpy as np
from pyee import EventEmitter

from .errors import ConfigError, DgflowError, FixedPointError
from .forms import (A33, GAMMA, ExplicitTerm, HelmholtzOperator,
                    MomentumOperator, OperatorContext, divergence_residual,
                    momentum_rhs, momentum_rhs_stage1, momentum_rhs_stage2,
                    pressure_rhs, project_pressure_gradient, velocity_update)
from .krylov import SolverSettings, jacobi_preconditioner, solve
from .space import Field

logger = logging.getLogger(__name__)

TRBDF2 = 'trbdf2'
BCG = 'bcg'
GQ_BDF2 = 'gq_bdf2'
KINDS = (TRBDF2, BCG, GQ_BDF2)

CONSISTENT = 'consistent'
LITERAL = 'literal'
EXTRAPOLATIONS = (CONSISTENT, LITERAL)


class SchemeState:
    """Everything a projection scheme carries from one step to the next."""

    def __init__(self, time, step, u_n, p_n, u_prev=None, u_gamma=None,
                 p_gamma=None):
        """
        Initialize the object.

        time -- current time t_n
        step -- step index n
        u_n -- velocity Field at t_n
        p_n -- pressure Field at t_n
        u_prev -- velocity at t_{n-1}, None before the first step
        u_gamma -- TR-BDF2 mid-step velocity of the last step, if any
        p_gamma -- TR-BDF2 mid-step pressure of the last step, if any
        """
        self.time = time
        self.step = step
        self.u_n = u_n
        self.p_n = p_n
        self.u_prev = u_prev
        self.u_gamma = u_gamma
        self.p_gamma = p_gamma

    def __repr__(self):
        """Describe the state."""
        return 'SchemeState(step={}, t={:.6g})'.format(self.step, self.time)

    def is_finite(self):
        """Check that every field is free of NaN and Inf."""
        return all(f.is_finite() for f in (self.u_n, self.p_n, self.u_prev,
                                           self.u_gamma, self.p_gamma)
                   if f is not None)

    def copy(self):
        """Get an independent copy."""
        def dup(field):
            return field.copy() if field is not None else None

        return SchemeState(self.time, self.step, dup(self.u_n),
                           dup(self.p_n), dup(self.u_prev),
                           dup(self.u_gamma), dup(self.p_gamma))


class FixedPointSettings:
    """Fixed-point iteration of the momentum predictors."""

    def __init__(self, enabled=False, tolerance=1e-8, max_iterations=100):
        """
        Initialize the object.

        enabled -- iterate the TR-BDF2 predictors
        tolerance -- max-norm velocity increment that stops the loop
        max_iterations -- iteration cap
        """
        self.enabled = enabled
        self.tolerance = tolerance
        self.max_iterations = max_iterations

    def as_dict(self):
        """Get the settings as a plain dictionary."""
        return {
            'enabled': self.enabled,
            'tolerance': self.tolerance,
            'max_iterations': self.max_iterations,
        }


class SchemeConfig:
    """Choice and parameters of a projection scheme."""

    def __init__(self, kind=TRBDF2, dt=0.01, re=100.0, c=1e3,
                 fixed_point=None, momentum=None, pressure=None,
                 extrapolation=CONSISTENT, threads=1):
        """
        Initialize the object.

        kind -- TRBDF2, BCG or GQ_BDF2
        dt -- time step
        re -- Reynolds number
        c -- artificial sound speed
        fixed_point -- FixedPointSettings
        momentum -- SolverSettings of the momentum predictors
        pressure -- SolverSettings of the Helmholtz solves
        extrapolation -- CONSISTENT or LITERAL second-stage
                         extrapolation
        threads -- worker threads for operator cell loops
        """
        self.kind = kind
        self.gamma = GAMMA
        self.dt = dt
        self.re = re
        self.c = c
        self.fixed_point = fixed_point or FixedPointSettings()
        self.momentum = momentum or SolverSettings('gmres')
        self.pressure = pressure or SolverSettings('cg')
        self.extrapolation = extrapolation
        self.threads = threads
        self.validate()

    def __repr__(self):
        """Describe the configuration."""
        return 'SchemeConfig({}, dt={}, Re={}, c={})'.format(
            self.kind, self.dt, self.re, self.c)

    def validate(self):
        """Check the configuration, raising ConfigError with every problem."""
        problems = []
        if self.kind not in KINDS:
            problems.append('kind must be one of {}, got {!r}'.format(
                KINDS, self.kind))
        for name in ('dt', 're', 'c'):
            if not getattr(self, name) > 0.0:
                problems.append('{} must be positive'.format(name))
        if self.extrapolation not in EXTRAPOLATIONS:
            problems.append('extrapolation must be one of {}'.format(
                EXTRAPOLATIONS))
        if not self.fixed_point.tolerance > 0.0:
            problems.append('fixed_point.tolerance must be positive')
        if self.fixed_point.max_iterations < 1:
            problems.append('fixed_point.max_iterations must be at least 1')
        if problems:
            raise ConfigError(problems)


class FlowProblem:
    """The discrete setting a scheme steps in."""

    def __init__(self, velocity_space, pressure_space, boundary):
        """
        Initialize the object.

        velocity_space -- degree-k FunctionSpace with dim components
        pressure_space -- degree k - 1 scalar FunctionSpace
        boundary -- BoundaryConditions of the velocity
        """
        if velocity_space.mesh is not pressure_space.mesh:
            raise ConfigError('Velocity and pressure spaces need one mesh')

        if pressure_space.degree != velocity_space.degree - 1:
            raise ConfigError('Pressure degree must be velocity degree - 1')

        self.velocity_space = velocity_space
        self.pressure_space = pressure_space
        self.boundary = boundary


def extrapolate_stage1(u_n, u_older, gamma=GAMMA):
    """
    Extrapolate the velocity linearly to t_n + gamma dt / 2.

    u_n -- velocity at t_n
    u_older -- first-stage velocity of the previous step, at
               t_n - (1 - gamma) dt, or None on the first step
    gamma -- TR-BDF2 parameter

    Returns a Field; without history this is a copy of u_n.
    """
    if u_older is None:
        return u_n.copy()

    a = gamma / (2.0 * (1.0 - gamma))
    return Field(u_n.space, (1.0 + a) * u_n.values - a * u_older.values)


def stage2_coefficients(gamma=GAMMA, variant=CONSISTENT):
    """
    Get the second-stage extrapolation coefficients.

    The coefficients multiply u_gamma and u_n. The CONSISTENT pair
    extrapolates linearly to t_n + dt. The LITERAL pair
    (1 + (1 + gamma) / gamma, -(1 - gamma) / gamma) sums to 3.
    """
    b = (1.0 - gamma) / gamma
    if variant == LITERAL:
        return 1.0 + (1.0 + gamma) / gamma, -b

    return 1.0 + b, -b


def extrapolate_stage2(u_gamma, u_n, gamma=GAMMA, variant=CONSISTENT):
    """
    Extrapolate the velocity for the second TR-BDF2 stage.

    Returns a Field.
    """
    a, b = stage2_coefficients(gamma, variant)
    return Field(u_n.space, a * u_gamma.values + b * u_n.values)


def check_steady(state_new, state_old, tolerance):
    """
    Check whether the velocity stopped changing.

    Returns True iff the max-norm of the coefficient difference is below
    tolerance.
    """
    diff = np.abs(state_new.u_n.values - state_old.u_n.values)
    return bool(diff.max(initial=0.0) < tolerance)


def compute_stability_params(config, mesh, k, U, length_scale='edge'):
    """
    Compute the Courant and diffusion numbers of a run.

    config -- SchemeConfig (dt and re are used)
    mesh -- Mesh
    k -- velocity degree
    U -- reference velocity
    length_scale -- 'edge' for the shortest cell edge, 'diameter' for the
                    smallest cell diameter

    Returns (C, mu) with C = k U dt / H and mu = k^2 dt / (Re H^2).
    """
    if length_scale == 'edge':
        h = mesh.min_edge_length()
    elif length_scale == 'diameter':
        h = float(mesh.cell_diameters().min())
    else:
        raise ConfigError('Unknown length scale {!r}'.format(length_scale))

    return k * U * config.dt / h, k ** 2 * config.dt / (config.re * h ** 2)


class ProjectionScheme(EventEmitter):
    """
    Base class of the projection schemes.

    Emits 'solve' (subsystem, iterations) after every linear solve and
    'fixed_point' (subsystem, iterations, increments) after every converged
    fixed-point loop.
    """

    kind = None
    subsystems = ()

    def __init__(self, problem, config):
        """
        Initialize the object.

        problem -- FlowProblem
        config -- SchemeConfig
        """
        EventEmitter.__init__(self)
        self.problem = problem
        self.config = config
        self.diagnostics = {}
        self._reset_diagnostics()

    def _reset_diagnostics(self):
        self.diagnostics = {'divergence_residual': 0.0}

    def step(self, state):
        """
        Advance a state by one time step.

        Returns the new SchemeState. Failures are re-raised with the step
        index and time prefixed.
        """
        self._reset_diagnostics()
        try:
            return self._step(state)
        except DgflowError as e:
            prefix = 'step {} (t={:.6g})'.format(state.step + 1, state.time)
            e.args = ('{}: {}'.format(prefix, e.args[0]),) + e.args[1:]
            raise

    def _step(self, state):
        raise NotImplementedError

    def context(self, **params):
        """Get an OperatorContext of this scheme."""
        config = self.config
        return OperatorContext(config.re, config.c, config.dt,
                               boundary=self.problem.boundary,
                               threads=config.threads, **params)

    def _count(self, name, iterations):
        self.emit('solve', name, iterations)

    def predict(self, ctx, rhs, guess, name):
        """
        Solve a momentum predictor system.

        ctx -- OperatorContext of the system
        rhs -- right-hand side vector
        guess -- initial guess Field
        name -- subsystem name used in diagnostics

        Returns the predicted velocity Field.
        """
        space = self.problem.velocity_space
        operator = MomentumOperator(ctx, space)
        values, iterations = solve(operator, rhs, self.config.momentum,
                                   jacobi_preconditioner(operator),
                                   guess.values)
        self._count(name, iterations)
        return Field(space, values)

    def project(self, ctx, u_pre, p_ref, guess, name):
        """
        Solve a pressure Helmholtz system.

        ctx -- OperatorContext of the stage
        u_pre -- velocity entering the weak divergence
        p_ref -- old pressure for the total form, None for the increment
        guess -- initial guess Field, or None
        name -- subsystem name used in diagnostics

        Returns the pressure (or increment) Field.
        """
        space = self.problem.pressure_space
        operator = HelmholtzOperator(ctx, space)
        rhs = pressure_rhs(ctx, u_pre, p_ref, space)
        values, iterations = solve(
            operator, rhs, self.config.pressure,
            jacobi_preconditioner(operator),
            guess.values if guess is not None else None)
        self._count(name, iterations)
        p_new = Field(space, values)
        residual = divergence_residual(ctx, u_pre, p_new, p_ref)
        self.diagnostics['divergence_residual'] = max(
            self.diagnostics['divergence_residual'], residual)
        return p_new

    def fixed_point(self, system, initial, name, settings=None):
        """
        Iterate a momentum predictor on its advecting field.

        system -- callable w -> (ctx, rhs) building the system for the
                  latest iterate w
        initial -- first iterate
        name -- subsystem name used in diagnostics
        settings -- FixedPointSettings, the config's if omitted

        Returns the converged velocity Field.
        """
        settings = settings or self.config.fixed_point
        w = initial
        increments = []
        for iteration in range(1, settings.max_iterations + 1):
            ctx, rhs = system(w)
            u = self.predict(ctx, rhs, w, name)
            increments.append(float(np.abs(u.values - w.values).max(
                initial=0.0)))
            w = u
            if increments[-1] < settings.tolerance:
                self.emit('fixed_point', name, iteration, increments)
                logger.debug('%s fixed point converged in %d iterations',
                             name, iteration)
                return u

        raise FixedPointError(
            '{} fixed point did not converge in {} iterations (last '
            'increment {:.3e})'.format(name, settings.max_iterations,
                                       increments[-1]),
            history=increments, iterations=settings.max_iterations)

    def bcg_update(self, state):
        """Advance by one Bell-Colella-Glaz step."""
        config = self.config
        dt = config.dt
        u_n = state.u_n
        p_n = state.p_n
        space = self.problem.velocity_space
        ctx = self.context(stage_weight=1.0, viscous_weight=0.5,
                           time=state.time + dt)

        def system(u_k):
            w = Field(space, 0.5 * (u_k.values + u_n.values))
            ctx_k = ctx.replace(advecting=w)
            term = ExplicitTerm(0.5 / config.re, 0.5, u_n, w, state.time)
            return ctx_k, momentum_rhs(ctx_k, space, u_n, [term], p_n)

        u_star = self.fixed_point(system, u_n, 'momentum')
        dp = self.project(ctx, u_star, None, None, 'pressure')
        grad = project_pressure_gradient(dp, space)
        u_new = velocity_update(u_star, grad, None, dt)
        p_new = Field(p_n.space, p_n.values + dp.values)
        return SchemeState(state.time + dt, state.step + 1, u_new, p_new,
                           u_prev=u_n)


class TRBDF2Scheme(ProjectionScheme):
    """The two-stage TR-BDF2 projection scheme."""

    kind = TRBDF2
    subsystems = ('momentum1', 'pressure1', 'momentum2', 'pressure2')

    def _step(self, state):
        if self.config.fixed_point.enabled:
            return self.trbdf2_step_fixedpoint(state)

        return self.trbdf2_step(state)

    def trbdf2_step(self, state):
        """Advance by one step with extrapolated advecting fields."""
        return self._advance(state, fixed_point=False)

    def trbdf2_step_fixedpoint(self, state):
        """Advance by one step with fixed-point iterated predictors."""
        return self._advance(state, fixed_point=True)

    def _advance(self, state, fixed_point):
        config = self.config
        g = config.gamma
        dt = config.dt
        space = self.problem.velocity_space
        u_n = state.u_n
        p_n = state.p_n

        u_ext = extrapolate_stage1(u_n, state.u_gamma, g)
        ctx1 = self.context(stage_weight=g, viscous_weight=0.5,
                            time=state.time + g * dt, advecting=u_ext,
                            skew=True)
        if fixed_point:
            def system1(w):
                ctx = ctx1.replace(advecting=w)
                return ctx, momentum_rhs_stage1(ctx, u_n, u_n, p_n)

            u_star = self.fixed_point(system1, u_ext, 'momentum1')
        else:
            rhs = momentum_rhs_stage1(ctx1, u_n, u_ext, p_n)
            u_star = self.predict(ctx1, rhs, u_ext, 'momentum1')

        grad_n = project_pressure_gradient(p_n, space)
        u_ss = Field(space, u_star.values + g * dt * grad_n.values)
        p_gamma = self.project(ctx1, u_ss, p_n, p_n, 'pressure1')
        grad_gamma = project_pressure_gradient(p_gamma, space)
        u_gamma = velocity_update(u_star, grad_gamma, grad_n, g * dt)

        u_ext2 = extrapolate_stage2(u_gamma, u_n, g, config.extrapolation)
        ctx2 = self.context(stage_weight=1.0 - g, viscous_weight=A33,
                            time=state.time + dt, advecting=u_ext2,
                            skew=True)
        if fixed_point:
            def system2(w):
                ctx = ctx2.replace(advecting=w)
                return ctx, momentum_rhs_stage2(ctx, u_n, u_gamma, w,
                                                p_gamma)

            u_star2 = self.fixed_point(system2, u_ext2, 'momentum2')
        else:
            rhs = momentum_rhs_stage2(ctx2, u_n, u_gamma, u_ext2, p_gamma)
            u_star2 = self.predict(ctx2, rhs, u_ext2, 'momentum2')

        u_ss2 = Field(space, u_star2.values +
                      (1.0 - g) * dt * grad_gamma.values)
        p_new = self.project(ctx2, u_ss2, p_gamma, p_gamma, 'pressure2')
        grad_new = project_pressure_gradient(p_new, space)
        u_new = velocity_update(u_star2, grad_new, grad_gamma,
                                (1.0 - g) * dt)
        return SchemeState(state.time + dt, state.step + 1, u_new, p_new,
                           u_prev=u_n, u_gamma=u_gamma, p_gamma=p_gamma)


class BCGScheme(ProjectionScheme):
    """The Crank-Nicolson based Bell-Colella-Glaz projection scheme."""

    kind = BCG
    subsystems = ('momentum', 'pressure')

    def _step(self, state):
        return self.bcg_update(state)

    def bcg_step(self, state):
        """Advance by one step."""
        return self.step(state)


class GQBDF2Scheme(ProjectionScheme):
    """The BDF2 projection scheme of Guermond and Quartapelle."""

    kind = GQ_BDF2
    subsystems = ('momentum', 'pressure')

    def _step(self, state):
        if state.u_prev is None:
            logger.debug('BDF2 history is empty, starting with a BCG step')
            return self.bcg_update(state)

        config = self.config
        dt = config.dt
        alpha = 2.0 / 3.0
        space = self.problem.velocity_space
        u_n = state.u_n
        u_prev = state.u_prev
        p_n = state.p_n

        advecting = Field(space, 2.0 * u_n.values - u_prev.values)
        source = Field(space, (4.0 * u_n.values - u_prev.values) / 3.0)
        ctx = self.context(stage_weight=alpha, viscous_weight=1.0,
                           advection_weight=1.0, skew=True,
                           time=state.time + dt, advecting=advecting)
        rhs = momentum_rhs(ctx, space, source, (), p_n)
        u_star = self.predict(ctx, rhs, advecting, 'momentum')

        grad_n = project_pressure_gradient(p_n, space)
        u_ss = Field(space, u_star.values + alpha * dt * grad_n.values)
        p_new = self.project(ctx, u_ss, p_n, p_n, 'pressure')
        grad_new = project_pressure_gradient(p_new, space)
        u_new = velocity_update(u_star, grad_new, grad_n, alpha * dt)
        return SchemeState(state.time + dt, state.step + 1, u_new, p_new,
                           u_prev=u_n)

    def gq_bdf2_step(self, state):
        """Advance by one step."""
        return self.step(state)


SCHEMES = {
    TRBDF2: TRBDF2Scheme,
    BCG: BCGScheme,
    GQ_BDF2: GQBDF2Scheme,
}


def build_scheme(problem, config):
    """Build the ProjectionScheme named by config.kind."""
    return SCHEMES[config.kind](problem, config)
