"""
Run configuration: an INI file with typed, documented keys.

Every key has a default, so an empty file is a valid configuration. Unknown
sections and keys are errors.
"""

from __future__ import division

import os
from collections import OrderedDict
from configparser import ConfigParser, Error as ConfigParserError

from simpc.errors import ConfigError, ParameterError
from simpc.geometry import SHAPE_KINDS, NoiseModel
from simpc.mpgm import LOSS_MODES, MIRROR_NEIGHBORHOODS
from simpc.network import ModelHyper
from simpc.utils import atomicWrite


def _parseBool(text):
    lower = text.strip().lower()
    if lower in ('1', 'yes', 'true', 'on'):
        return True
    if lower in ('0', 'no', 'false', 'off'):
        return False
    raise ValueError('not a boolean: %r' % text)


def _parseList(text):
    return [item.strip() for item in text.split(',') if item.strip()]


def _parseShapes(text):
    """
    Parse 'kind:count, kind:count'.

    @return: A C{list} of (C{str} kind, C{int} count) pairs.
    """
    result = []
    for item in _parseList(text):
        kind, _, count = item.partition(':')
        kind = kind.strip()
        if kind not in SHAPE_KINDS:
            raise ValueError('unknown shape kind %r' % kind)
        result.append((kind, int(count)))
    return result


def _parseNoises(text):
    """
    Parse 'kind:scale, kind:scale'.

    @return: A C{list} of (C{str} kind, C{float} scale) pairs.
    """
    result = []
    for item in _parseList(text):
        kind, _, scale = item.partition(':')
        kind = kind.strip()
        if kind not in NoiseModel.KINDS:
            raise ValueError('unknown noise kind %r' % kind)
        result.append((kind, float(scale)))
    return result


def _formatPairs(pairs):
    return ', '.join('%s:%s' % (a, b) for a, b in pairs)


# Value types: a parser and a formatter.
TYPES = {
    'int': (int, str),
    'float': (float, repr),
    'str': (str.strip, str),
    'bool': (_parseBool, lambda value: 'true' if value else 'false'),
    'floats': (lambda text: [float(x) for x in _parseList(text)],
               lambda values: ', '.join(repr(x) for x in values)),
    'strs': (_parseList, ', '.join),
    'shapes': (_parseShapes, _formatPairs),
    'noises': (_parseNoises, _formatPairs),
}


class RunConfig(object):
    """
    The settings of a run.

    @param values: A C{dict} of section name to C{dict} of key to typed
        value, overriding the defaults.
    @param outDir: A C{str} directory that relative paths are resolved
        against, or C{None} for the current directory.
    @raise ConfigError: If a section or key is unknown or a value is
        invalid.
    """
    SCHEMA = OrderedDict([
        ('shapes', OrderedDict([
            ('train', ('shapes', [('sphere', 2048), ('torus', 2048)])),
            ('heldout', ('shapes', [('cube_surface', 2048)])),
        ])),
        ('noise', OrderedDict([
            ('train', ('noises', [('gaussian', 0.005), ('gaussian', 0.01),
                                  ('gaussian', 0.02)])),
            ('eval', ('noises', [('gaussian', 0.01), ('gaussian', 0.02),
                                 ('gaussian', 0.03)])),
            ('variants', ('int', 2)),
        ])),
        ('train', OrderedDict([
            ('epochs', ('int', 100)),
            ('batch', ('int', 16)),
            ('lr', ('float', 1e-4)),
            ('patch_size', ('int', 256)),
            ('seed', ('int', 0)),
            ('checkpoint_every', ('int', 10)),
            ('eval_every', ('int', 10)),
        ])),
        ('model', OrderedDict([
            ('k', ('int', ModelHyper.DEFAULT_K)),
            ('channels', ('int', ModelHyper.DEFAULT_CHANNELS)),
            ('blocks', ('int', ModelHyper.DEFAULT_BLOCKS)),
            ('max_step', ('float', ModelHyper.DEFAULT_MAX_STEP)),
            ('encoder_layers', ('int', ModelHyper.DEFAULT_ENCODER_LAYERS)),
            ('w1', ('float', ModelHyper.DEFAULT_W1)),
            ('w2', ('float', ModelHyper.DEFAULT_W2)),
        ])),
        ('loss', OrderedDict([
            ('mode', ('str', 'simpc')),
            ('lambda_mpc', ('float', 1.0)),
            ('mirror_neighborhood', ('str', 'current')),
            ('emd_cap', ('int', 2048)),
            ('noise_delta', ('float', 0.01)),
        ])),
        ('paths', OrderedDict([
            ('data_dir', ('str', 'data')),
            ('checkpoint_dir', ('str', 'checkpoints')),
            ('report_dir', ('str', 'reports')),
        ])),
        ('eval', OrderedDict([
            ('iterations', ('int', 1)),
            ('two_sided', ('bool', False)),
            ('strict_mesh', ('bool', False)),
        ])),
        ('ablate', OrderedDict([
            ('loss_modes', ('strs', ['sr_cd_only', 'sr_emd_only', 'simpc'])),
            ('w2_values', ('floats', [1.5, 2.0, 2.5])),
            ('noise_levels', ('floats', [0.01, 0.02, 0.03])),
            ('epochs', ('int', 0)),
        ])),
        ('theory', OrderedDict([
            ('samples', ('int', 100000)),
            ('moment_samples', ('int', 1000000)),
            ('moment_instances', ('int', 50)),
            ('noise_std', ('float', 0.02)),
        ])),
        ('runtime', OrderedDict([
            ('threads', ('int', 1)),
            ('verbose', ('int', 0)),
        ])),
    ])

    def __init__(self, values=None, outDir=None):
        self._values = OrderedDict(
            (section, OrderedDict((key, default)
                                  for key, (_, default) in keys.items()))
            for section, keys in self.SCHEMA.items())
        self.outDir = outDir
        for section, keys in (values or {}).items():
            for key, value in keys.items():
                self.set(section, key, value)
        self.validate()

    @classmethod
    def fromString(cls, text, outDir=None, source='<string>'):
        """
        Parse INI text.

        @param text: The C{str} INI text.
        @param outDir: See C{RunConfig}.
        @param source: A C{str} name for error messages.
        @raise ConfigError: If the text is invalid.
        @return: A C{RunConfig}.
        """
        parser = ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text, source=source)
        except ConfigParserError as e:
            raise ConfigError('%s: %s' % (source, e))

        values = OrderedDict()
        for section in parser.sections():
            if section not in cls.SCHEMA:
                raise ConfigError('%s: unknown section [%s]. Known sections '
                                  'are: %s.' % (source, section,
                                                ', '.join(cls.SCHEMA)))
            values[section] = OrderedDict()
            for key, text in parser.items(section):
                if key not in cls.SCHEMA[section]:
                    raise ConfigError(
                        '%s: unknown key %r in section [%s]. Known keys are: '
                        '%s.' % (source, key, section,
                                 ', '.join(cls.SCHEMA[section])))
                type_ = cls.SCHEMA[section][key][0]
                try:
                    values[section][key] = TYPES[type_][0](text)
                except ValueError as e:
                    raise ConfigError('%s: bad value %r for [%s] %s: %s' %
                                      (source, text, section, key, e))
        return cls(values, outDir=outDir)

    @classmethod
    def fromFile(cls, path, outDir=None):
        """
        Read an INI file.

        @param path: The C{str} file name.
        @param outDir: See C{RunConfig}.
        @raise ConfigError: If the file is invalid.
        @return: A C{RunConfig}.
        """
        with open(path) as fp:
            return cls.fromString(fp.read(), outDir=outDir, source=path)

    def get(self, section, key):
        try:
            return self._values[section][key]
        except KeyError:
            raise ConfigError('Unknown config setting [%s] %s.' %
                              (section, key))

    def set(self, section, key, value):
        """
        Change a setting.

        @param section: The C{str} section name.
        @param key: The C{str} key.
        @param value: The new (typed) value.
        @raise ConfigError: If the section or key is unknown.
        """
        if section not in self.SCHEMA or key not in self.SCHEMA[section]:
            raise ConfigError('Unknown config setting [%s] %s.' %
                              (section, key))
        self._values[section][key] = value

    def validate(self):
        """
        Check the settings are consistent.

        @raise ConfigError: If a setting is out of range.
        """
        def check(condition, message):
            if not condition:
                raise ConfigError(message)

        check(self.get('train', 'epochs') >= 1, 'train epochs must be >= 1.')
        check(self.get('train', 'batch') >= 1, 'train batch must be >= 1.')
        check(self.get('train', 'lr') > 0.0, 'train lr must be positive.')
        check(self.get('noise', 'variants') >= 2,
              'At least two noisy variants per shape are needed.')
        check(self.get('model', 'w2') > self.get('model', 'w1'),
              'model w2 must exceed w1.')
        check(self.get('loss', 'mode') in LOSS_MODES,
              'loss mode must be one of: %s.' % ', '.join(LOSS_MODES))
        check(self.get('loss', 'mirror_neighborhood') in
              MIRROR_NEIGHBORHOODS,
              'loss mirror_neighborhood must be one of: %s.' %
              ', '.join(MIRROR_NEIGHBORHOODS))
        for mode in self.get('ablate', 'loss_modes'):
            check(mode in LOSS_MODES, 'Unknown ablation loss mode %r.' % mode)
        for w2 in self.get('ablate', 'w2_values'):
            check(w2 > self.get('model', 'w1'),
                  'Ablation w2 value %r does not exceed w1.' % w2)
        check(self.get('runtime', 'threads') >= 1,
              'runtime threads must be >= 1.')
        check(self.get('eval', 'iterations') >= 1,
              'eval iterations must be >= 1.')
        patchSize = self.get('train', 'patch_size')
        check(patchSize > self.get('model', 'k') + 1,
              'train patch_size must exceed model k + 1.')
        for kind, count in (self.get('shapes', 'train') +
                            self.get('shapes', 'heldout')):
            check(count >= patchSize,
                  'Shape %s has %d points, fewer than the patch size %d.' %
                  (kind, count, patchSize))
        check(len(self.get('shapes', 'train')) > 0,
              'At least one training shape is needed.')
        check(len(self.get('noise', 'train')) > 0,
              'At least one training noise level is needed.')
        try:
            self.hyper()
        except ParameterError as e:
            raise ConfigError(str(e))

    def hyper(self):
        """
        Get the model hyperparameters.

        @return: A C{ModelHyper}.
        """
        model = self._values['model']
        return ModelHyper(k=model['k'], channels=model['channels'],
                          blocks=model['blocks'], maxStep=model['max_step'],
                          encoderLayers=model['encoder_layers'],
                          w1=model['w1'], w2=model['w2'])

    def path(self, key):
        """
        Get a directory from the [paths] section, resolved against
        C{outDir}.

        @param key: One of 'data_dir', 'checkpoint_dir' or 'report_dir'.
        @return: A C{str} path.
        """
        value = self.get('paths', key)
        if self.outDir is None or os.path.isabs(value):
            return value
        return os.path.join(self.outDir, value)

    def copy(self):
        return RunConfig(self._values, outDir=self.outDir)

    def toString(self):
        """
        Render the settings as INI text.

        @return: A C{str}.
        """
        lines = []
        for section, keys in self.SCHEMA.items():
            lines.append('[%s]' % section)
            for key, (type_, _) in keys.items():
                lines.append('%s = %s' % (
                    key, TYPES[type_][1](self._values[section][key])))
            lines.append('')
        return '\n'.join(lines)

    def write(self, path):
        """
        Save the settings as an INI file.

        @param path: The C{str} file name.
        """
        with atomicWrite(path) as fp:
            fp.write(self.toString())
