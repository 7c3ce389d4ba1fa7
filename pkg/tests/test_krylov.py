import logging

import numpy as np
import pytest
from scipy.sparse.linalg import aslinearoperator

from dgflow.errors import ConfigError, SolverError
from dgflow.krylov import (SolverSettings, cg_solve, gmres_solve,
                           jacobi_preconditioner, solve)


def _spd(n, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def test_identity_converges_in_one_iteration():
    b = np.arange(1.0, 6.0)
    x, iterations = cg_solve(aslinearoperator(np.eye(5)), b)
    assert iterations == 1
    assert np.allclose(x, b)


def test_zero_rhs():
    x, iterations = cg_solve(aslinearoperator(_spd(4)), np.zeros(4))
    assert iterations == 0
    assert np.all(x == 0.0)


@pytest.mark.parametrize('method', ['cg', 'gmres'])
@pytest.mark.parametrize('jacobi', [False, True])
def test_dense_spd_agreement(method, jacobi):
    a = _spd(30)
    b = np.random.default_rng(1).standard_normal(30)
    settings = SolverSettings(method, rel_tol=1e-12)
    pc = jacobi_preconditioner(np.diag(a)) if jacobi else None
    x, iterations = solve(aslinearoperator(a), b, settings, pc)
    assert iterations > 0
    assert np.allclose(x, np.linalg.solve(a, b), rtol=1e-9, atol=1e-11)


def test_gmres_solves_nonsymmetric_system():
    rng = np.random.default_rng(2)
    a = 10.0 * np.eye(20) + rng.standard_normal((20, 20))
    b = rng.standard_normal(20)
    x, _ = gmres_solve(aslinearoperator(a), b,
                       SolverSettings('gmres', rel_tol=1e-12))
    assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_initial_guess_is_used():
    a = _spd(10)
    b = np.ones(10)
    exact = np.linalg.solve(a, b)
    x, iterations = cg_solve(aslinearoperator(a), b, x0=exact)
    assert iterations == 0
    assert np.allclose(x, exact)


def test_cg_iteration_cap_reports_history():
    settings = SolverSettings('cg', rel_tol=1e-14, max_iterations=2)
    with pytest.raises(SolverError) as e:
        cg_solve(aslinearoperator(_spd(40)), np.ones(40), settings)
    assert e.value.iterations == 2
    assert len(e.value.history) == 3


def test_cg_rejects_indefinite_operator():
    a = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(SolverError) as e:
        cg_solve(aslinearoperator(a), np.array([0.0, 1.0, 0.0]))
    assert 'positive definite' in str(e.value)


def test_gmres_failure_raises():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((50, 50))
    settings = SolverSettings('gmres', rel_tol=1e-14, max_iterations=3,
                              restart=3)
    with pytest.raises(SolverError):
        gmres_solve(aslinearoperator(a), np.ones(50), settings)


def test_jacobi_rejects_zero_diagonal():
    with pytest.raises(SolverError) as e:
        jacobi_preconditioner(np.array([1.0, 2.0, 0.0, 4.0]))
    assert 'dof 2' in str(e.value)


def test_jacobi_divides_by_diagonal():
    pc = jacobi_preconditioner(np.array([2.0, 4.0]))
    assert np.allclose(pc.matvec(np.array([1.0, 1.0])), [0.5, 0.25])


def test_settings_list_every_problem():
    with pytest.raises(ConfigError) as e:
        SolverSettings('bicgstab', rel_tol=0.0, max_iterations=0)
    assert len(e.value.problems) == 3


def test_settings_tolerance_and_dict():
    settings = SolverSettings('gmres', rel_tol=1e-6, abs_tol=1e-12)
    assert settings.tolerance(10.0) == pytest.approx(1e-5)
    assert settings.tolerance(0.0) == 1e-12
    assert SolverSettings.from_dict(settings.as_dict()).as_dict() == \
        settings.as_dict()


@pytest.mark.parametrize('method', ['cg', 'gmres'])
def test_iterations_do_not_depend_on_the_rhs_scale(method):
    a = _spd(30, seed=4)
    b = np.random.default_rng(5).standard_normal(30)
    settings = SolverSettings(method, rel_tol=1e-10)
    x, iterations = solve(aslinearoperator(a), b, settings)
    for scale in (2.0 ** -20, 2.0 ** 20):
        xs, scaled = solve(aslinearoperator(a), scale * b, settings)
        assert scaled == iterations
        assert np.allclose(xs, scale * x, rtol=1e-9, atol=0.0)


@pytest.mark.parametrize('method', ['cg', 'gmres'])
def test_reported_residual_is_the_true_residual(method, caplog):
    a = _spd(30, seed=6)
    b = np.random.default_rng(7).standard_normal(30)
    with caplog.at_level(logging.DEBUG, logger='dgflow.krylov'):
        x, iterations = solve(aslinearoperator(a), b,
                              SolverSettings(method, rel_tol=1e-10))
    reported = [r for r in caplog.records if 'converged' in r.getMessage()]
    assert len(reported) == 1
    assert reported[0].args[0] == iterations
    assert reported[0].args[1] == pytest.approx(
        np.linalg.norm(b - a @ x), abs=1e-13)


def test_jacobi_never_needs_more_cg_iterations():
    scaling = np.diag(np.logspace(0.0, 1.5, 40))
    a = scaling @ _spd(40, seed=8) @ scaling
    b = np.random.default_rng(9).standard_normal(40)
    settings = SolverSettings('cg', rel_tol=1e-10, max_iterations=500)
    x, plain = cg_solve(aslinearoperator(a), b, settings)
    xj, jacobi = cg_solve(aslinearoperator(a), b, settings,
                          jacobi_preconditioner(np.diag(a)))
    assert jacobi <= plain
    assert np.linalg.norm(a @ xj - b) <= 1e-10 * np.linalg.norm(b)
