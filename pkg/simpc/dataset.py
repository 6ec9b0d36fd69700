"""
Synthetic datasets: clean shapes, their meshes and independent noisy
variants, indexed by a JSON manifest.
"""

from __future__ import division

import json
import os

from simpc.errors import ParseError
from simpc.formats import readOFF, readPLY, writeOFF, writePLY
from simpc.geometry import NoiseModel, addNoise, makeShape
from simpc.utils import Reporter, atomicWrite, deriveSeed, s

MANIFEST = 'manifest.json'
MANIFEST_VERSION = 1

# Seed streams. Evaluation noise never shares a stream with training noise.
SHAPE_STREAM = 0
TRAIN_NOISE_STREAM = 1
EVAL_NOISE_STREAM = 2


def noiseLabel(kind, scale):
    return '%s-%r' % (kind, scale)


class DatasetGenerator(Reporter):
    """
    Write the clean and noisy clouds a run config asks for.

    @param config: A C{RunConfig}.
    @param verbose: The C{int} verbosity level.
    """
    def __init__(self, config, verbose=0):
        Reporter.__init__(self, verbose)
        self.config = config

    def _noisy(self, clean, entryDir, dataDir, levels, split, stream,
               shapeIndex, variants):
        seed = self.config.get('train', 'seed')
        result = []
        for noiseIndex, (kind, scale) in enumerate(levels):
            label = noiseLabel(kind, scale)
            variantRecords = []
            for variant in range(variants):
                noiseSeed = deriveSeed(seed, stream, shapeIndex, noiseIndex,
                                       variant)
                noisy = addNoise(clean, NoiseModel(kind, scale, noiseSeed))
                relative = os.path.join(
                    entryDir, '%s-%s-%d.ply' % (split, label, variant))
                writePLY(noisy, os.path.join(dataDir, relative))
                variantRecords.append({'path': relative, 'seed': noiseSeed})
            result.append({'kind': kind, 'scale': scale,
                           'variants': variantRecords})
        return result

    def generate(self):
        """
        Generate the dataset.

        @return: The manifest C{dict} (also written to the data directory).
        """
        config = self.config
        dataDir = config.path('data_dir')
        seed = config.get('train', 'seed')
        variants = config.get('noise', 'variants')
        shapes = ([(kind, n, 'train') for kind, n in
                   config.get('shapes', 'train')] +
                  [(kind, n, 'heldout') for kind, n in
                   config.get('shapes', 'heldout')])

        entries = []
        for shapeIndex, (kind, n, split) in enumerate(shapes):
            name = '%s-%d' % (kind, n)
            shapeSeed = deriveSeed(seed, SHAPE_STREAM, shapeIndex)
            clean, mesh = makeShape(kind, n, shapeSeed)
            entryDir = '%s-%s' % (split, name)
            if not os.path.isdir(os.path.join(dataDir, entryDir)):
                os.makedirs(os.path.join(dataDir, entryDir))

            entry = {
                'name': name,
                'kind': kind,
                'n': n,
                'split': split,
                'seed': shapeSeed,
                'clean': os.path.join(entryDir, 'clean.ply'),
                'mesh': os.path.join(entryDir, 'mesh.off'),
                'train': [],
            }
            writePLY(clean, os.path.join(dataDir, entry['clean']))
            writeOFF(mesh, os.path.join(dataDir, entry['mesh']))

            if split == 'train':
                entry['train'] = self._noisy(
                    clean, entryDir, dataDir, config.get('noise', 'train'),
                    'train', TRAIN_NOISE_STREAM, shapeIndex, variants)
            entry['eval'] = self._noisy(
                clean, entryDir, dataDir, config.get('noise', 'eval'),
                'eval', EVAL_NOISE_STREAM, shapeIndex, 1)

            count = sum(len(level['variants'])
                        for level in entry['train'] + entry['eval'])
            self.report('Wrote %s shape %s with %d noisy cloud%s.' %
                        (split, name, count, s(count)))
            entries.append(entry)

        manifest = {'version': MANIFEST_VERSION, 'seed': seed,
                    'shapes': entries}
        with atomicWrite(os.path.join(dataDir, MANIFEST)) as fp:
            json.dump(manifest, fp, indent=2, sort_keys=True)
            fp.write('\n')
        return manifest


class Dataset(object):
    """
    Read a generated dataset.

    @param dataDir: The C{str} data directory holding the manifest.
    @raise ParseError: If the manifest is missing or malformed.
    """
    def __init__(self, dataDir):
        self.dataDir = dataDir
        path = os.path.join(dataDir, MANIFEST)
        try:
            with open(path) as fp:
                manifest = json.load(fp)
        except IOError:
            raise ParseError('%s: could not read the dataset manifest. Run '
                             'the generate command first.' % path)
        except ValueError as e:
            raise ParseError('%s: bad JSON: %s' % (path, e))
        if manifest.get('version') != MANIFEST_VERSION:
            raise ParseError('%s: unsupported manifest version %r.' %
                             (path, manifest.get('version')))
        try:
            self.shapes = manifest['shapes']
            self.seed = manifest['seed']
            for entry in self.shapes:
                for key in ('name', 'kind', 'split', 'clean', 'mesh',
                            'train', 'eval'):
                    entry[key]
        except (KeyError, TypeError) as e:
            raise ParseError('%s: malformed manifest (%s).' % (path, e))
        self.manifest = manifest
        self._cache = {}

    def _path(self, relative):
        return os.path.join(self.dataDir, relative)

    def _load(self, relative, reader):
        if relative not in self._cache:
            self._cache[relative] = reader(self._path(relative))
        return self._cache[relative]

    def split(self, split):
        """
        Get the shape entries of one split.

        @param split: Either 'train' or 'heldout'.
        @return: A C{list} of manifest shape C{dict}s.
        """
        return [entry for entry in self.shapes if entry['split'] == split]

    def clean(self, entry):
        return self._load(entry['clean'], readPLY)

    def mesh(self, entry):
        return self._load(entry['mesh'], readOFF)

    def meshPath(self, entry):
        return self._path(entry['mesh'])

    def noisy(self, variant):
        """
        Read a noisy cloud.

        @param variant: A variant C{dict} from the manifest.
        @return: A C{PointCloud}.
        """
        return self._load(variant['path'], readPLY)

    def trainingSets(self):
        """
        Get every (shape, noise level) combination used for training.

        @return: A C{list} of (shape entry, noise level) C{dict} pairs, each
            noise level having at least two variants.
        """
        return [(entry, level) for entry in self.split('train')
                for level in entry['train']]

    def evalSets(self, scales=None):
        """
        Get every (shape, noise level) combination used for evaluation.

        @param scales: An optional C{list} of C{float} noise scales to keep.
        @return: A C{list} of (shape entry, noise level) C{dict} pairs.
        """
        return [(entry, level) for entry in self.shapes
                for level in entry['eval']
                if scales is None or any(abs(level['scale'] - scale) < 1e-12
                                         for scale in scales)]
