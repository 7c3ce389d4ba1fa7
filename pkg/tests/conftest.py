import pytest

from dgflow.mesh import generate_cartesian


def pytest_addoption(parser):
    parser.addoption('--slow', action='store_true', default=False,
                     help='run convergence and scheme comparison runs')
    parser.addoption('--extended', action='store_true', default=False,
                     help='run the 3D, cavity and cylinder benchmarks too')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: minutes-long runs')
    config.addinivalue_line('markers', 'extended: long benchmark runs')


def pytest_collection_modifyitems(config, items):
    extended = config.getoption('--extended')
    slow = config.getoption('--slow') or extended
    skip_slow = pytest.mark.skip(reason='needs --slow')
    skip_extended = pytest.mark.skip(reason='needs --extended')
    for item in items:
        if 'extended' in item.keywords and not extended:
            item.add_marker(skip_extended)
        elif 'slow' in item.keywords and not slow:
            item.add_marker(skip_slow)


@pytest.fixture
def square():
    return generate_cartesian(2, 2)


@pytest.fixture
def square4():
    return generate_cartesian(2, 4)
