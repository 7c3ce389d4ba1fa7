import math

import numpy as np
import pytest

from dgflow.cases import (LID, MEAN_INFLOW, PEAK_INFLOW, CavityCase,
                          CylinderCase, get_case, inflow_profile)
from dgflow.config import (CaseConfig, apply_overrides, load_config,
                           save_config)
from dgflow.errors import ConfigError
from dgflow.mesh import CHANNEL_HEIGHT, generate_cartesian
from dgflow.space import gauss_legendre


def _taylor_green(**changes):
    data = {'case': 'taylor-green', 'time': {'dt': 0.1}}
    data.update(changes)
    return CaseConfig(data)


def test_defaults_follow_the_case():
    config = _taylor_green()
    assert config.degree == 2
    assert config.dim == 2
    assert config.re == 100.0
    assert config.c == 1e3
    assert config.time['final'] == 3.2
    assert config.mesh['n_el'] == 8
    assert config.scheme['kind'] == 'trbdf2'
    assert config.adapt['enabled'] is False
    assert config.output['directory'] == 'output'
    assert CaseConfig({'case': 'abc', 'time': {'dt': 0.1}}).velocity_scale \
        == 2.0


def test_time_step_defaults_to_the_case_cfl():
    assert CaseConfig({'case': 'taylor-green'}).time['target_cfl'] == 1.63
    assert CaseConfig({'case': 'cavity2d'}).time['target_cfl'] == 1.3
    assert CaseConfig({'case': 'cylinder'}).time['target_cfl'] == 1.0
    config = _taylor_green()
    assert config.time['dt'] == 0.1
    assert config.time['target_cfl'] is None
    config = _taylor_green(time={'target_mu': 0.05})
    assert config.time['target_cfl'] is None


def test_time_step_must_be_given_once():
    with pytest.raises(ConfigError) as e:
        _taylor_green(time={'dt': 0.1, 'target_cfl': 0.5})
    assert 'exactly one of' in str(e.value)


def test_every_problem_is_listed():
    with pytest.raises(ConfigError) as e:
        CaseConfig({'case': 'taylor-green', 'dim': 3,
                    'time': {'dt': 0.1, 'target_cfl': 0.5}})
    assert len(e.value.problems) >= 2
    assert any('is 2D, got dim 3' in p for p in e.value.problems)


def test_type_errors_stop_validation():
    with pytest.raises(ConfigError) as e:
        CaseConfig({'case': 'taylor-green', 'degree': 'two'})
    assert len(e.value.problems) == 1
    assert e.value.problems[0].startswith('degree')


@pytest.mark.parametrize('data', [
    {'case': 'poiseuille'},
    {'case': 'taylor-green', 'time': {'dt': 0.1}, 'degree': 1},
    {'case': 'taylor-green', 'time': {'dt': 0.1}, 'colour': 'red'},
    {'case': 'taylor-green', 'time': {'dt': -0.1}},
    {'case': 'custom-mesh', 'time': {'dt': 0.1}},
    {'case': 'abc', 'time': {'dt': 0.1}, 'adapt': {'enabled': True}},
    {'case': 'cavity2d', 'time': {'dt': 0.1},
     'adapt': {'min_diam': 0.5, 'max_diam': 0.1}},
    {'case': 'taylor-green', 'time': {'dt': 0.1}, 'threads': 4,
     'serial_deterministic': True},
    [],
])
def test_invalid_configurations(data):
    with pytest.raises(ConfigError):
        CaseConfig(data)


def test_adaptivity_is_2d_only():
    with pytest.raises(ConfigError) as e:
        CaseConfig({'case': 'abc', 'time': {'dt': 0.1},
                    'adapt': {'enabled': True}})
    assert 'adaptivity is available in 2D only' in e.value.problems


def test_dict_round_trip():
    config = _taylor_green(degree=3, mesh={'n_el': [4, 8]})
    assert CaseConfig.from_dict(config.as_dict()) == config
    assert config.as_dict() is not config.data


def test_file_round_trip(tmp_path):
    config = CaseConfig({'case': 'cylinder', 'time': {'dt': 0.001},
                         'mesh': {'level': 1}})
    path = str(tmp_path / 'config.json')
    save_config(config, path)
    assert load_config(path) == config


def test_load_config_applies_case_and_overrides(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text('{"case": "taylor-green", "time": {"dt": 0.1}}')
    config = load_config(str(path), ['re=400', 'scheme.kind=bcg'],
                         case='cavity2d')
    assert config.case == 'cavity2d'
    assert config.re == 400
    assert config.scheme['kind'] == 'bcg'


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text('{"case": ')
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_overrides():
    data = apply_overrides({'time': {'final': 1.0}}, [
        'time.dt=0.05', 'mesh.n_el=[4, 8]', 'output.directory=runs/a',
        'adapt.enabled=true'])
    assert data == {
        'time': {'final': 1.0, 'dt': 0.05},
        'mesh': {'n_el': [4, 8]},
        'output': {'directory': 'runs/a'},
        'adapt': {'enabled': True},
    }
    with pytest.raises(ConfigError):
        apply_overrides({}, ['time.dt'])
    with pytest.raises(ConfigError):
        apply_overrides({'time': 1.0}, ['time.dt=0.1'])


def test_time_step_from_targets():
    mesh = generate_cartesian(2, 8, box=[(0.0, 2.0 * math.pi)] * 2)
    h = math.pi / 4.0
    config = _taylor_green(time={'dt': None, 'target_cfl': 1.63})
    assert config.time_step(mesh, 100.0) == pytest.approx(1.63 * h / 2.0)
    config = _taylor_green(time={'dt': None, 'target_mu': 0.05})
    assert config.time_step(mesh, 100.0) == pytest.approx(
        0.05 * 100.0 * h ** 2 / 4.0)
    config = _taylor_green(time={'dt': None, 'target_cfl': 1.0,
                                 'length_scale': 'diameter'})
    assert config.time_step(mesh, 100.0) == pytest.approx(
        math.sqrt(2.0) * h / 2.0)
    assert _taylor_green().time_step(mesh, 100.0) == 0.1


def test_scheme_and_adapt_configs():
    config = CaseConfig({
        'case': 'cavity2d', 'time': {'dt': 0.01}, 'c': 50.0,
        'scheme': {'kind': 'gq_bdf2'},
        'solvers': {'pressure': {'rel_tol': 1e-8}},
        'adapt': {'enabled': True, 'remesh_interval': 5}})
    scheme = config.scheme_config(0.02, 10.0)
    assert scheme.kind == 'gq_bdf2'
    assert scheme.dt == 0.02
    assert scheme.re == 10.0
    assert scheme.c == 50.0
    assert scheme.pressure.method == 'cg'
    assert scheme.pressure.rel_tol == 1e-8
    adapt = config.adapt_config()
    assert adapt.remesh_interval == 5
    assert adapt.refine_fraction == 0.1


def test_get_case():
    assert isinstance(get_case('cavity2d'), CavityCase)
    with pytest.raises(ConfigError):
        get_case('poiseuille')


def test_cylinder_reynolds_number_is_rescaled():
    config = CaseConfig({'case': 'cylinder', 'time': {'dt': 0.001}})
    assert CylinderCase().reynolds(config) == pytest.approx(1000.0)
    boundary = CylinderCase().boundary(config)
    assert boundary.kind(2) == 'outflow'


def test_cavity_lid():
    config = CaseConfig({'case': 'cavity2d', 'time': {'dt': 0.01}})
    lid = CavityCase().boundary(config).function_for(LID)
    assert np.allclose(lid(np.array([[0.3, 1.0]]), 0.0), [[1.0, 0.0]])
    wall = CavityCase().boundary(config).function_for(0)
    assert np.allclose(wall(np.array([[0.0, 0.3]]), 0.0), 0.0)


def test_inflow_profile():
    y, w = gauss_legendre(4)
    x = np.stack([np.zeros(4), CHANNEL_HEIGHT * y], axis=-1)
    u = inflow_profile(x, 0.0)
    assert np.dot(w, u[:, 0]) == pytest.approx(MEAN_INFLOW)
    assert np.allclose(u[:, 1], 0.0)
    peak = inflow_profile(np.array([[0.0, CHANNEL_HEIGHT / 2]]), 0.0)
    assert peak[0, 0] == pytest.approx(PEAK_INFLOW)
