"""Benchmark runs against published reference values."""

import numpy as np
import pytest

from dgflow.analysis import error_norms
from dgflow.cases import MEAN_INFLOW
from dgflow.cli import convergence_study, run_case
from dgflow.config import HYPERBOLIC, CaseConfig
from dgflow.simulation import Simulation


def _taylor_green(n_el, dt, **changes):
    data = {'case': 'taylor-green', 're': 100.0, 'mesh': {'n_el': n_el},
            'time': {'dt': dt, 'final': 3.2}}
    data.update(changes)
    return CaseConfig(data)


@pytest.mark.slow
def test_taylor_green_hyperbolic_convergence(tmp_path):
    rows = convergence_study(_taylor_green(8, 0.64), 2, HYPERBOLIC,
                             str(tmp_path))
    assert [row['dt'] for row in rows] == pytest.approx([0.64, 0.32])
    for row, velocity, pressure in zip(rows, (0.38, 0.095), (0.43, 0.14)):
        assert row['err_u_L2'] == pytest.approx(velocity, rel=0.25)
        assert row['err_p_L2'] == pytest.approx(pressure, rel=0.25)
    assert rows[1]['rate_u_L2'] > 1.5


@pytest.mark.slow
def test_trbdf2_is_second_order_in_time():
    solutions = []
    for dt in (0.2, 0.1, 0.05):
        simulation = Simulation(_taylor_green(
            16, dt, time={'dt': dt, 'final': 0.8}))
        solutions.append(simulation.run().u_n.values)
    coarse = np.linalg.norm(solutions[0] - solutions[1])
    fine = np.linalg.norm(solutions[1] - solutions[2])
    assert 3.3 <= coarse / fine <= 4.7


@pytest.mark.slow
def test_trbdf2_is_more_accurate_than_bcg_and_gq_bdf2():
    errors = {}
    for kind in ('trbdf2', 'bcg', 'gq_bdf2'):
        simulation = Simulation(_taylor_green(
            16, 0.32, scheme={'kind': kind}))
        state = simulation.run()
        errors[kind] = error_norms(state.u_n, state.p_n, simulation.exact,
                                   state.time).u_l2
    assert errors['trbdf2'] < errors['bcg']
    assert errors['trbdf2'] < errors['gq_bdf2']


@pytest.mark.extended
def test_abc_flow_convergence(tmp_path):
    base = CaseConfig({'case': 'abc', 're': 1.0, 'mesh': {'n_el': 8},
                       'time': {'dt': None, 'target_cfl': 1.63,
                                'final': 3.2}})
    rows = convergence_study(base, 2, HYPERBOLIC, str(tmp_path))
    for row, velocity in zip(rows, (0.0078, 0.0022)):
        assert row['err_u_L2'] == pytest.approx(velocity, rel=0.3)
    assert rows[1]['rate_u_L2'] == pytest.approx(1.86, abs=0.4)


@pytest.mark.extended
def test_cavity_centerline(tmp_path):
    config = CaseConfig({
        'case': 'cavity2d', 're': 1000.0, 'mesh': {'n_el': 128},
        'time': {'dt': None, 'target_cfl': 1.3, 'final': 100.0,
                 'steady_tolerance': 1e-7}})
    run = run_case(config, str(tmp_path))
    cavity = run.summary['cavity']
    assert run.summary['steady']
    assert cavity['u_max_abs'] == pytest.approx(0.3732, rel=0.02)
    assert abs(cavity['omega_vortex']) == pytest.approx(1.9594, rel=0.02)


@pytest.mark.extended
def test_cylinder_forces():
    simulation = Simulation(CaseConfig({
        'case': 'cylinder', 're': 100.0, 'mesh': {'level': 3},
        'time': {'dt': 0.001, 'final': 8.0}}))
    simulation.run()
    summary = simulation.forces.summary(simulation.case.diameter,
                                        MEAN_INFLOW, start=4.0)
    assert 3.2 <= summary['max_cd'] <= 3.45
    assert 0.97 <= summary['max_cl'] <= 1.05
    assert 2.45 <= summary['dp'] <= 2.7
    assert 0.29 <= summary['st'] <= 0.31


@pytest.mark.extended
def test_taylor_green_hyperbolic_convergence_to_64(tmp_path):
    rows = convergence_study(_taylor_green(8, 0.64), 4, HYPERBOLIC,
                             str(tmp_path))
    assert [row['dt'] for row in rows] == pytest.approx(
        [0.64, 0.32, 0.16, 0.08])
    assert [row['n_el'] for row in rows] == [8, 16, 32, 64]
    for row, velocity, pressure in zip(rows, (0.38, 0.095, 0.016, 0.0031),
                                       (0.43, 0.14, 0.04, 0.011)):
        assert row['err_u_L2'] == pytest.approx(velocity, rel=0.25)
        assert row['err_p_L2'] == pytest.approx(pressure, rel=0.25)
    assert rows[-1]['rate_u_L2'] >= 1.9
    assert rows[-1]['rate_p_L2'] >= 1.6


@pytest.mark.extended
def test_taylor_green_q3_q2_convergence(tmp_path):
    rows = convergence_study(_taylor_green(8, 0.43, degree=3), 4,
                             HYPERBOLIC, str(tmp_path))
    assert rows[-1]['dt'] == pytest.approx(0.43 / 8)
    for row, velocity in zip(rows, (0.062, 0.0068, 0.00044, 0.000031)):
        assert row['err_u_L2'] == pytest.approx(velocity, rel=0.3)
    assert rows[-1]['rate_u_L2'] >= 3.3


@pytest.mark.extended
def test_taylor_green_distorted_convergence(tmp_path):
    base = _taylor_green(8, None, mesh={'n_el': 8, 'distortion': 0.2},
                         time={'dt': None, 'target_cfl': 1.63,
                               'final': 3.2})
    rows = convergence_study(base, 4, HYPERBOLIC, str(tmp_path))
    assert rows[-1]['n_el'] == 64
    assert rows[-1]['err_u_L2'] == pytest.approx(0.0023, rel=0.3)
    assert rows[-1]['rate_u_L2'] >= 1.9


@pytest.mark.extended
def test_trbdf2_beats_bcg_and_gq_bdf2_at_64():
    errors = {}
    for kind in ('trbdf2', 'bcg', 'gq_bdf2'):
        simulation = Simulation(_taylor_green(
            64, 0.08, scheme={'kind': kind}))
        state = simulation.run()
        errors[kind] = error_norms(state.u_n, state.p_n, simulation.exact,
                                   state.time).u_l2
    assert errors['trbdf2'] <= 0.6 * errors['bcg']
    assert errors['trbdf2'] <= 0.6 * errors['gq_bdf2']


@pytest.mark.extended
def test_fixed_point_iterations_at_courant_3(tmp_path):
    def config(enabled):
        return _taylor_green(
            8, None, time={'dt': None, 'target_cfl': 3.0, 'final': 3.2},
            scheme={'fixed_point': {'enabled': enabled}})

    rows = convergence_study(config(True), 4, HYPERBOLIC,
                             str(tmp_path / 'fixed_point'))
    assert rows[0]['dt'] == pytest.approx(1.18, rel=0.01)
    assert rows[-1]['err_u_L2'] == pytest.approx(0.0059, rel=0.3)
    assert rows[-1]['rate_u_L2'] >= 1.9

    simulation = Simulation(_taylor_green(
        64, None, time={'dt': None, 'target_cfl': 3.0, 'final': 3.2}))
    state = simulation.run()
    linearized = error_norms(state.u_n, state.p_n, simulation.exact,
                             state.time).u_l2
    assert linearized > rows[-1]['err_u_L2']
