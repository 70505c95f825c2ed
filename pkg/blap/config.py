"""Experiment configuration read from INI files."""

import configparser
import json
import os
from pkg_resources import resource_string

from blap.errors import InvalidConfigError
from blap.manifold import KINDS, TORUS
from blap.utils import compute_sha256


KEYS = {
    'manifold': ('kind', 'dimension', 'periods', 'radius', 'resolution',
                 'resolutions'),
    'run': ('command', 'operator', 'mode', 'subspace', 'count', 'tol',
            'kernel_threshold', 'cluster_tol', 'seed', 'samples', 'threads',
            'battery', 'tt_shift', 'cache'),
    'output': ('directory', 'formats'),
}
COMMANDS = ('identities', 'spectrum', 'bounds', 'convergence', 'codazzi')
OPERATORS = ('bourguignon', 'lichnerowicz', 'rough', 'function-laplacian')
MODES = ('composition', 'weitzenboeck')
SUBSPACES = ('full', 'trace-part', 'traceless', 'TT')
FORMATS = ('json', 'csv', 'svg', 'fields')
AUTO = 'auto'


def load_defaults():
    """Packaged defaults (resolutions, tolerances, batteries)."""
    return json.loads(resource_string(__name__, 'defaults.json'))


def _floats(text):
    return [float(v) for v in text.split(',') if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(',') if v.strip()]


class ExperimentConfig:
    """Resolved configuration of a run.

    Values are kept as strings in three sections, exactly as serialized, and
    typed on access. Missing keys are filled from the packaged defaults of
    the manifold kind.

    Parameters
    ----------
    values : dict
        Section name -> dict of key -> string value.
    """

    def __init__(self, values):
        self.values = {section: dict(values.get(section, {}))
                       for section in KEYS}
        self._fill_defaults()
        self.validate()

    @classmethod
    def from_string(cls, text, overrides=(), environ=None):
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as err:
            raise InvalidConfigError('Configuration cannot be parsed: %s' % err)
        for section in parser.sections():
            if section not in KEYS:
                raise InvalidConfigError('Unknown section [%s].' % section)
        values = {s: dict(parser[s]) for s in parser.sections()}
        for override in overrides:
            section, key, value = parse_override(override)
            values.setdefault(section, {})[key] = value
        environ = os.environ if environ is None else environ
        if environ.get('BLAP_THREADS'):
            values.setdefault('run', {})['threads'] = environ['BLAP_THREADS']
        return cls(values)

    @classmethod
    def from_file(cls, fpath, overrides=(), environ=None):
        if not os.path.isfile(fpath):
            raise InvalidConfigError('Configuration file %s not found.' % fpath)
        with open(fpath) as f:
            return cls.from_string(f.read(), overrides, environ)

    def _fill_defaults(self):
        defaults = load_defaults()
        kind = self.values['manifold'].get('kind', TORUS)
        if kind not in KINDS:
            raise InvalidConfigError('Manifold kind %s not supported.' % kind)
        self.values['manifold']['kind'] = kind
        for key, value in defaults['manifold'][kind].items():
            self.values['manifold'].setdefault(key, value)
        for section in ('run', 'output'):
            for key, value in defaults[section].items():
                self.values[section].setdefault(key, value)

    def validate(self):
        """Check keys and values; raise InvalidConfigError on the first issue."""
        for section, keys in KEYS.items():
            for key in self.values[section]:
                if key not in keys:
                    raise InvalidConfigError('Unknown key %s.%s.' % (section, key))
        choices = [('run', 'command', COMMANDS), ('run', 'operator', OPERATORS),
                   ('run', 'mode', MODES), ('run', 'subspace', SUBSPACES)]
        for section, key, allowed in choices:
            if self.values[section][key] not in allowed:
                raise InvalidConfigError(
                    '%s.%s = %s is not one of %s.' % (
                        section, key, self.values[section][key],
                        ', '.join(allowed)))
        for fmt in self.formats:
            if fmt not in FORMATS:
                raise InvalidConfigError('Output format %s not supported.' % fmt)
        typed = ['resolution', 'resolutions', 'count', 'tol', 'seed',
                 'samples', 'threads', 'kernel_threshold', 'cluster_tol',
                 'tt_shift', 'cache']
        typed += ['dimension', 'periods'] if self.kind == TORUS else ['radius']
        try:
            for name in typed:
                getattr(self, name)
        except ValueError as err:
            raise InvalidConfigError('Invalid configuration value: %s' % err)
        if not 1 <= self.count <= 200:
            raise InvalidConfigError('run.count = %d not in [1, 200].' % self.count)
        if self.tol < 1e-12:
            raise InvalidConfigError('run.tol = %g is below 1e-12.' % self.tol)
        if self.samples < 1 or self.threads < 1:
            raise InvalidConfigError('run.samples and run.threads must be positive.')

    def get(self, section, key):
        return self.values[section][key]

    @property
    def kind(self):
        return self.values['manifold']['kind']

    @property
    def dimension(self):
        if self.kind == TORUS:
            return int(self.values['manifold']['dimension'])
        return 2 if self.kind.endswith('2') else 3

    @property
    def periods(self):
        return _floats(self.values['manifold'].get('periods', ''))

    @property
    def radius(self):
        return float(self.values['manifold'].get('radius', 1.0))

    @property
    def resolution(self):
        return _ints(self.values['manifold']['resolution'])

    @property
    def resolutions(self):
        text = self.values['manifold'].get('resolutions', '')
        return [_ints(r) for r in text.split(';') if r.strip()]

    @property
    def command(self):
        return self.values['run']['command']

    @property
    def operator(self):
        return self.values['run']['operator']

    @property
    def mode(self):
        return self.values['run']['mode']

    @property
    def subspace(self):
        return self.values['run']['subspace']

    @property
    def count(self):
        return int(self.values['run']['count'])

    @property
    def tol(self):
        return float(self.values['run']['tol'])

    @property
    def kernel_threshold(self):
        return float(self.values['run']['kernel_threshold'])

    @property
    def cluster_tol(self):
        """Cluster tolerance, None for the per-kind default."""
        value = self.values['run']['cluster_tol']
        return None if value == AUTO else float(value)

    @property
    def seed(self):
        return int(self.values['run']['seed'])

    @property
    def samples(self):
        return int(self.values['run']['samples'])

    @property
    def threads(self):
        return int(self.values['run']['threads'])

    @property
    def battery(self):
        """Field battery names, the per-kind default for 'auto'."""
        value = self.values['run']['battery']
        if value == AUTO:
            return list(load_defaults()['batteries'][self.kind])
        return [v.strip() for v in value.split(',') if v.strip()]

    @property
    def tt_shift(self):
        value = self.values['run']['tt_shift']
        return None if value == AUTO else float(value)

    @property
    def cache(self):
        value = self.values['run']['cache'].lower()
        if value not in ('true', 'false', 'yes', 'no', '1', '0'):
            raise ValueError('run.cache must be a boolean, got %s' % value)
        return value in ('true', 'yes', '1')

    @property
    def directory(self):
        return self.values['output']['directory']

    @property
    def formats(self):
        return [v.strip() for v in self.values['output']['formats'].split(',')
                if v.strip()]

    def with_values(self, section, **values):
        """Copy of the configuration with some keys replaced."""
        copy = {s: dict(v) for s, v in self.values.items()}
        copy[section].update({k: str(v) for k, v in values.items()})
        return ExperimentConfig(copy)

    def to_ini(self):
        """Canonical INI text: fixed section order, sorted keys."""
        lines = []
        for section in KEYS:
            lines.append('[%s]' % section)
            for key in sorted(self.values[section]):
                lines.append('%s = %s' % (key, self.values[section][key]))
            lines.append('')
        return '\n'.join(lines)

    def write(self, fpath):
        with open(fpath, 'w') as f:
            f.write(self.to_ini())
        return fpath

    @property
    def hash(self):
        """SHA-256 of the canonical INI text."""
        return compute_sha256(self.to_ini())

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.values == other.values

    def __repr__(self):
        return 'ExperimentConfig(%s, %s)' % (self.kind, self.command)


def parse_override(text):
    """Split 'section.key=value' into its parts."""
    if '=' not in text or '.' not in text.split('=', 1)[0]:
        raise InvalidConfigError(
            'Override %s is not of the form section.key=value.' % text)
    name, value = text.split('=', 1)
    section, key = name.strip().split('.', 1)
    if section not in KEYS or key not in KEYS[section]:
        raise InvalidConfigError('Unknown key %s.' % name.strip())
    return section, key, value.strip()
