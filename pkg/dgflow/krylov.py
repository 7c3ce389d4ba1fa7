"""Krylov solvers and Jacobi preconditioning for matrix-free operators."""

import logging
import math

import numpy as np
from scipy.sparse.linalg import LinearOperator, aslinearoperator, gmres

from .errors import ConfigError, SolverError

logger = logging.getLogger(__name__)

METHODS = ('cg', 'gmres')


class SolverSettings:
    """Parameters of one iterative linear solve."""

    def __init__(self, method='cg', rel_tol=1e-10, abs_tol=1e-30,
                 max_iterations=10000, restart=50):
        """
        Initialize the object.

        method -- 'cg' or 'gmres'
        rel_tol -- tolerance relative to the right-hand side norm
        abs_tol -- absolute residual tolerance
        max_iterations -- iteration cap
        restart -- GMRES restart length
        """
        self.method = method
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.max_iterations = max_iterations
        self.restart = restart
        self.validate()

    def __repr__(self):
        """Describe the settings."""
        return 'SolverSettings({}, rel_tol={:g}, max_iterations={})'.format(
            self.method, self.rel_tol, self.max_iterations)

    def validate(self):
        """Check the settings, raising ConfigError with every problem."""
        problems = []
        if self.method not in METHODS:
            problems.append('method must be one of {}, got {!r}'.format(
                METHODS, self.method))
        if not self.rel_tol > 0.0:
            problems.append('rel_tol must be positive')
        if not self.abs_tol > 0.0:
            problems.append('abs_tol must be positive')
        if self.max_iterations < 1:
            problems.append('max_iterations must be at least 1')
        if self.restart < 1:
            problems.append('restart must be at least 1')
        if problems:
            raise ConfigError(problems)

    def tolerance(self, rhs_norm):
        """Get the absolute residual target for a right-hand side norm."""
        return max(self.rel_tol * rhs_norm, self.abs_tol)

    def as_dict(self):
        """Get the settings as a plain dictionary."""
        return {
            'method': self.method,
            'rel_tol': self.rel_tol,
            'abs_tol': self.abs_tol,
            'max_iterations': self.max_iterations,
            'restart': self.restart,
        }

    @classmethod
    def from_dict(cls, data):
        """Build settings from a dictionary written by as_dict."""
        return cls(**data)


def _residual_norm(operator, rhs, x):
    return float(np.linalg.norm(rhs - operator.matvec(x)))


def cg_solve(operator, rhs, settings=None, preconditioner=None, x0=None):
    """
    Solve a symmetric positive definite system by preconditioned CG.

    operator -- LinearOperator (or anything aslinearoperator accepts)
    rhs -- right-hand side vector
    settings -- SolverSettings, defaults if omitted
    preconditioner -- LinearOperator approximating the inverse, optional
    x0 -- initial guess, zero if omitted

    Returns (solution, iterations).
    """
    settings = settings or SolverSettings('cg')
    A = aslinearoperator(operator)
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    target = settings.tolerance(float(np.linalg.norm(b)))

    r = b - A.matvec(x) if x0 is not None else b.copy()
    res = float(np.linalg.norm(r))
    history = [res]
    if res <= target:
        return x, 0

    s = preconditioner.matvec(r) if preconditioner is not None else r.copy()
    p = s.copy()
    am = float(s @ r)
    iterations = 0
    while res > target:
        if iterations >= settings.max_iterations:
            raise SolverError(
                'CG did not converge in {} iterations (residual {:.3e}, '
                'target {:.3e})'.format(iterations, res, target),
                history=history, iterations=iterations)

        v = A.matvec(p)
        curvature = float(v @ p)
        if curvature <= 0.0:
            raise SolverError(
                'CG met nonpositive curvature {:.3e}; the operator is not '
                'positive definite'.format(curvature),
                history=history, iterations=iterations)

        step = am / curvature
        x += step * p
        r -= step * v
        res = float(np.linalg.norm(r))
        history.append(res)
        iterations += 1
        s = preconditioner.matvec(r) if preconditioner is not None else r
        am1 = float(s @ r)
        p = s + (am1 / am) * p
        am = am1

        if res <= target:
            # The recursive residual drifts from the true one.
            res = _residual_norm(A, b, x)
            history[-1] = res

    logger.debug('CG converged in %d iterations, residual %.3e',
                 iterations, res)
    return x, iterations


def gmres_solve(operator, rhs, settings=None, preconditioner=None, x0=None):
    """
    Solve a general system by restarted GMRES.

    operator -- LinearOperator
    rhs -- right-hand side vector
    settings -- SolverSettings, defaults to GMRES settings if omitted
    preconditioner -- LinearOperator approximating the inverse, optional
    x0 -- initial guess, zero if omitted

    Returns (solution, iterations).
    """
    settings = settings or SolverSettings('gmres')
    A = aslinearoperator(operator)
    b = np.asarray(rhs, dtype=float)
    target = settings.tolerance(float(np.linalg.norm(b)))
    history = []

    def record(norm):
        history.append(float(norm))

    x, info = gmres(
        A, b, x0=x0, rtol=settings.rel_tol, atol=settings.abs_tol,
        restart=settings.restart,
        maxiter=int(math.ceil(settings.max_iterations / settings.restart)),
        M=preconditioner, callback=record, callback_type='pr_norm')
    iterations = len(history)
    res = _residual_norm(A, b, x)
    if info != 0 or res > target:
        raise SolverError(
            'GMRES did not converge in {} iterations (residual {:.3e}, '
            'target {:.3e})'.format(iterations, res, target),
            history=history + [res], iterations=iterations)

    logger.debug('GMRES converged in %d iterations, residual %.3e',
                 iterations, res)
    return x, iterations


def solve(operator, rhs, settings, preconditioner=None, x0=None):
    """
    Dispatch to the solver named by the settings.

    Returns (solution, iterations).
    """
    if settings.method == 'cg':
        return cg_solve(operator, rhs, settings, preconditioner, x0)

    return gmres_solve(operator, rhs, settings, preconditioner, x0)


def jacobi_preconditioner(operator):
    """
    Build the Jacobi preconditioner of an operator.

    operator -- object with a diagonal() method, or the diagonal itself

    Returns a LinearOperator dividing by the diagonal.
    """
    if isinstance(operator, (np.ndarray, list, tuple)):
        diagonal = np.asarray(operator, dtype=float)
    else:
        diagonal = np.asarray(operator.diagonal(), dtype=float)
    zero = np.flatnonzero(diagonal == 0.0)
    if len(zero):
        raise SolverError('Zero diagonal entry at dof {}'.format(
            int(zero[0])))

    inverse = 1.0 / diagonal
    n = len(diagonal)
    return LinearOperator((n, n), matvec=lambda v: inverse * np.ravel(v),
                          dtype=float)
