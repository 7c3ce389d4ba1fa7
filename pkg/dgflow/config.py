"""Case configuration: schema, defaults, overrides and serialization."""

import copy
import json
import logging

from jsonschema import Draft7Validator

from .adapt import AdaptConfig
from .cases import CASES, get_case
from .errors import ConfigError
from .krylov import METHODS, SolverSettings
from .schemes import (EXTRAPOLATIONS, KINDS, FixedPointSettings,
                      SchemeConfig)

logger = logging.getLogger(__name__)

HYPERBOLIC = 'hyperbolic'
PARABOLIC = 'parabolic'
SCALINGS = (HYPERBOLIC, PARABOLIC)
TIME_STEP_KEYS = ('dt', 'target_cfl', 'target_mu')

_positive = {'type': 'number', 'exclusiveMinimum': 0}
_optional_positive = {'type': ['number', 'null'], 'exclusiveMinimum': 0}
_count = {'type': 'integer', 'minimum': 1}
_fraction = {'type': 'number', 'minimum': 0, 'maximum': 1}

_solver_schema = {
    'type': 'object',
    'properties': {
        'method': {'enum': list(METHODS)},
        'rel_tol': _positive,
        'abs_tol': _positive,
        'max_iterations': _count,
        'restart': _count,
    },
    'additionalProperties': False,
}

SCHEMA = {
    'type': 'object',
    'properties': {
        'case': {'enum': sorted(CASES)},
        'dim': {'enum': [2, 3]},
        'degree': {'type': 'integer', 'minimum': 2},
        'mesh': {
            'type': 'object',
            'properties': {
                'n_el': {'anyOf': [_count, {'type': 'array',
                                            'items': _count}]},
                'path': {'type': ['string', 'null']},
                'distortion': {'type': 'number', 'minimum': 0,
                               'exclusiveMaximum': 0.5},
                'seed': {'type': 'integer'},
                'level': {'type': 'integer', 'minimum': 0},
            },
            'additionalProperties': False,
        },
        're': _positive,
        'c': _positive,
        'velocity_scale': _positive,
        'time': {
            'type': 'object',
            'properties': {
                'dt': _optional_positive,
                'target_cfl': _optional_positive,
                'target_mu': _optional_positive,
                'final': {'type': 'number', 'minimum': 0},
                'length_scale': {'enum': ['edge', 'diameter']},
                'steady_tolerance': _optional_positive,
            },
            'additionalProperties': False,
        },
        'scheme': {
            'type': 'object',
            'properties': {
                'kind': {'enum': list(KINDS)},
                'extrapolation': {'enum': list(EXTRAPOLATIONS)},
                'fixed_point': {
                    'type': 'object',
                    'properties': {
                        'enabled': {'type': 'boolean'},
                        'tolerance': _positive,
                        'max_iterations': _count,
                    },
                    'additionalProperties': False,
                },
            },
            'additionalProperties': False,
        },
        'solvers': {
            'type': 'object',
            'properties': {
                'momentum': _solver_schema,
                'pressure': _solver_schema,
            },
            'additionalProperties': False,
        },
        'adapt': {
            'type': 'object',
            'properties': {
                'enabled': {'type': 'boolean'},
                'refine_fraction': _fraction,
                'coarsen_fraction': _fraction,
                'remesh_interval': _count,
                'trigger_check_interval': _count,
                'trigger_threshold': {'type': 'number', 'minimum': 0},
                'min_diam': _optional_positive,
                'max_diam': _optional_positive,
            },
            'additionalProperties': False,
        },
        'output': {
            'type': 'object',
            'properties': {
                'directory': {'type': 'string'},
                'log_every': _count,
                'snapshot_every': {'type': 'integer', 'minimum': 0},
                'force_every': _count,
                'streamfunction': {'type': 'boolean'},
            },
            'additionalProperties': False,
        },
        'threads': _count,
        'serial_deterministic': {'type': 'boolean'},
    },
    'required': ['case'],
    'additionalProperties': False,
}


def _defaults(case):
    adapt = AdaptConfig().as_dict()
    adapt['enabled'] = False
    return {
        'case': case.name,
        'dim': case.dim,
        'degree': 2,
        'mesh': {'n_el': 8, 'path': None, 'distortion': 0.0, 'seed': 42,
                 'level': 0},
        're': case.re,
        'c': 1e3,
        'velocity_scale': case.velocity_scale,
        'time': {'dt': None, 'target_cfl': None, 'target_mu': None,
                 'final': case.final_time, 'length_scale': 'edge',
                 'steady_tolerance': None},
        'scheme': {'kind': 'trbdf2', 'extrapolation': 'consistent',
                   'fixed_point': FixedPointSettings().as_dict()},
        'solvers': {'momentum': SolverSettings('gmres').as_dict(),
                    'pressure': SolverSettings('cg').as_dict()},
        'adapt': adapt,
        'output': {'directory': 'output', 'log_every': 10,
                   'snapshot_every': 0, 'force_every': 1,
                   'streamfunction': False},
        'threads': 1,
        'serial_deterministic': False,
    }


def _merge(base, changes):
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)
    return base


class CaseConfig:
    """A validated run configuration."""

    def __init__(self, data):
        """
        Initialize the object.

        data -- dict following SCHEMA; missing keys take the case defaults,
                and a run that sets none of time.dt, time.target_cfl,
                time.target_mu steps at the case's target_cfl
        """
        if not isinstance(data, dict) or data.get('case') not in CASES:
            raise ConfigError([_describe(e) for e in
                               Draft7Validator(SCHEMA).iter_errors(data)])

        case = get_case(data['case'])
        self.data = _merge(_defaults(case), data)
        time = self.data['time']
        if isinstance(time, dict) and \
                all(time.get(key) is None for key in TIME_STEP_KEYS):
            time['target_cfl'] = case.target_cfl
        self.validate()

    def __repr__(self):
        """Describe the configuration."""
        return 'CaseConfig({}, k={}, dim={})'.format(
            self.case, self.degree, self.dim)

    def __eq__(self, other):
        """Compare two configurations by content."""
        return isinstance(other, CaseConfig) and self.data == other.data

    def __getattr__(self, name):
        """Expose the top-level keys as attributes."""
        data = self.__dict__.get('data')
        if data is not None and name in data:
            return data[name]

        raise AttributeError(name)

    def validate(self):
        """
        Check the schema and the cross-field constraints.

        Raises ConfigError listing every violation.
        """
        data = self.data
        errors = list(Draft7Validator(SCHEMA).iter_errors(data))
        problems = [_describe(e) for e in errors]
        if any(e.validator == 'type' for e in errors):
            # The cross-field checks need well-typed values.
            raise ConfigError(problems)

        time = data['time']
        given = [key for key in TIME_STEP_KEYS
                 if time[key] is not None]
        if len(given) != 1:
            problems.append(
                'exactly one of time.dt, time.target_cfl, time.target_mu '
                'must be set, got {}'.format(given or 'none'))

        case = get_case(data['case'])
        if data['case'] != 'custom-mesh' and data['dim'] != case.dim:
            problems.append('case {} is {}D, got dim {}'.format(
                case.name, case.dim, data['dim']))
        if data['case'] == 'custom-mesh' and not data['mesh']['path']:
            problems.append('custom-mesh needs mesh.path')

        adapt = data['adapt']
        if adapt['enabled'] and data['dim'] != 2:
            problems.append('adaptivity is available in 2D only')
        if adapt['min_diam'] is not None and adapt['max_diam'] is not None \
                and adapt['min_diam'] > adapt['max_diam']:
            problems.append('adapt.min_diam exceeds adapt.max_diam')

        if data['serial_deterministic'] and data['threads'] != 1:
            problems.append('serial_deterministic needs threads 1')

        if problems:
            raise ConfigError(problems)

    def as_dict(self):
        """Get a deep copy of the configuration data."""
        return copy.deepcopy(self.data)

    @classmethod
    def from_dict(cls, data):
        """Build a configuration from a dictionary written by as_dict."""
        return cls(data)

    def get_case(self):
        """Get the FlowCase of this configuration."""
        return get_case(self.case)

    def scheme_config(self, dt, re):
        """
        Build the SchemeConfig of a run.

        dt -- resolved time step
        re -- Reynolds number of the equations
        """
        scheme = self.data['scheme']
        solvers = self.data['solvers']
        return SchemeConfig(
            kind=scheme['kind'], dt=dt, re=re, c=self.c,
            fixed_point=FixedPointSettings(**scheme['fixed_point']),
            momentum=SolverSettings.from_dict(solvers['momentum']),
            pressure=SolverSettings.from_dict(solvers['pressure']),
            extrapolation=scheme['extrapolation'], threads=self.threads)

    def adapt_config(self):
        """Build the AdaptConfig of a run."""
        params = dict(self.data['adapt'])
        params.pop('enabled')
        return AdaptConfig(**params)

    def time_step(self, mesh, re):
        """
        Resolve the time step on a mesh.

        mesh -- Mesh of the run
        re -- Reynolds number of the equations

        Returns dt, either given or derived from the target Courant or
        diffusion number.
        """
        time = self.data['time']
        if time['dt'] is not None:
            return time['dt']

        if time['length_scale'] == 'edge':
            h = mesh.min_edge_length()
        else:
            h = float(mesh.cell_diameters().min())
        k = self.degree
        if time['target_cfl'] is not None:
            return time['target_cfl'] * h / (k * self.velocity_scale)

        return time['target_mu'] * re * h ** 2 / k ** 2


def _describe(error):
    path = '.'.join(str(p) for p in error.absolute_path)
    return '{}: {}'.format(path, error.message) if path else error.message


def _parse_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def apply_overrides(data, overrides):
    """
    Apply key.sub=value overrides to a configuration dictionary.

    data -- dict, changed in place
    overrides -- iterable of 'dotted.key=value' strings; values are parsed
                 as JSON and kept as strings when that fails

    Returns data.
    """
    for item in overrides or ():
        key, sep, text = item.partition('=')
        if not sep or not key:
            raise ConfigError(['override {!r} is not key=value'.format(item)])

        node = data
        parts = key.split('.')
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(['override {!r} descends into a '
                                   'non-object'.format(item)])
        node[parts[-1]] = _parse_value(text)
    return data


def load_config(path=None, overrides=(), case=None):
    """
    Read a configuration file and apply overrides.

    path -- JSON file, or None to start from the case defaults
    overrides -- 'dotted.key=value' strings
    case -- case name replacing the file's

    Returns a CaseConfig.
    """
    data = {}
    if path is not None:
        with open(path) as f:
            try:
                data = json.load(f)
            except ValueError as e:
                raise ConfigError(['{} is not valid JSON: {}'.format(path,
                                                                     e)])
    if case is not None:
        data['case'] = case
    apply_overrides(data, overrides)
    logger.debug('Loaded configuration %s', data)
    return CaseConfig(data)


def save_config(config, path):
    """Write a CaseConfig as JSON."""
    with open(path, 'w') as f:
        json.dump(config.as_dict(), f, indent=2, sort_keys=True)
