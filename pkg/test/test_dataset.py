import json
import os
import shutil
import tempfile
from unittest import TestCase

import numpy as np
from six import assertRaisesRegex

from simpc.config import RunConfig
from simpc.dataset import MANIFEST, Dataset, DatasetGenerator, noiseLabel
from simpc.errors import ParseError
from simpc.geometry import boundingSphere

CONFIG = '''\
[shapes]
train = sphere:96, torus:96
heldout = cube_surface:96

[noise]
train = gaussian:0.01, laplacian:0.02
eval = gaussian:0.01, gaussian:0.03
variants = 3

[train]
patch_size = 48
seed = 5

[model]
k = 8
channels = 16
'''


class DatasetTestCase(TestCase):
    """
    Generate a small dataset in a temporary directory.
    """
    def setUp(self):
        self.tempdir = tempfile.mkdtemp()
        self.config = RunConfig.fromString(CONFIG, outDir=self.tempdir)
        self.manifest = DatasetGenerator(self.config).generate()
        self.dataDir = self.config.path('data_dir')

    def tearDown(self):
        shutil.rmtree(self.tempdir)


class TestDatasetGenerator(DatasetTestCase):
    """
    Test the DatasetGenerator class.
    """
    def testManifest(self):
        """
        The manifest must list every shape with its split, and be written
        to the data directory.
        """
        self.assertEqual(
            [('sphere-96', 'train'), ('torus-96', 'train'),
             ('cube_surface-96', 'heldout')],
            [(entry['name'], entry['split'])
             for entry in self.manifest['shapes']])
        with open(os.path.join(self.dataDir, MANIFEST)) as fp:
            self.assertEqual(self.manifest, json.load(fp))

    def testFilesExist(self):
        """
        Every file named in the manifest must exist.
        """
        for entry in self.manifest['shapes']:
            paths = [entry['clean'], entry['mesh']]
            for level in entry['train'] + entry['eval']:
                paths.extend(variant['path'] for variant in level['variants'])
            for path in paths:
                self.assertTrue(
                    os.path.exists(os.path.join(self.dataDir, path)), path)

    def testVariantCounts(self):
        """
        Training noise levels must have the configured number of variants,
        evaluation levels one, and held-out shapes no training clouds.
        """
        train, _, heldout = self.manifest['shapes']
        self.assertEqual([3, 3], [len(level['variants'])
                                  for level in train['train']])
        self.assertEqual([1, 1], [len(level['variants'])
                                  for level in train['eval']])
        self.assertEqual([], heldout['train'])
        self.assertEqual(2, len(heldout['eval']))

    def testSeedsDistinct(self):
        """
        Every noisy cloud must have its own seed, and evaluation seeds must
        differ from all training seeds.
        """
        seeds = []
        for entry in self.manifest['shapes']:
            for level in entry['train'] + entry['eval']:
                seeds.extend(variant['seed'] for variant in level['variants'])
        self.assertEqual(len(seeds), len(set(seeds)))

    def testDeterministic(self):
        """
        Generating the same configuration again must give identical files.
        """
        other = tempfile.mkdtemp()
        try:
            config = RunConfig.fromString(CONFIG, outDir=other)
            manifest = DatasetGenerator(config).generate()
            self.assertEqual(self.manifest, manifest)
            for entry in manifest['shapes']:
                for level in entry['train']:
                    for variant in level['variants']:
                        with open(os.path.join(self.dataDir,
                                               variant['path']), 'rb') as fp:
                            first = fp.read()
                        with open(os.path.join(config.path('data_dir'),
                                               variant['path']), 'rb') as fp:
                            self.assertEqual(first, fp.read())
        finally:
            shutil.rmtree(other)

    def testNoiseLabel(self):
        """
        Noise labels must combine the kind and the exact scale.
        """
        self.assertEqual('gaussian-0.01', noiseLabel('gaussian', 0.01))


class TestDataset(DatasetTestCase):
    """
    Test the Dataset class.
    """
    def testSplits(self):
        """
        Splits must hold the right shapes.
        """
        dataset = Dataset(self.dataDir)
        self.assertEqual(['sphere-96', 'torus-96'],
                         [entry['name'] for entry in dataset.split('train')])
        self.assertEqual(['cube_surface-96'],
                         [entry['name']
                          for entry in dataset.split('heldout')])

    def testTrainingSets(self):
        """
        There must be one training set per training shape and noise level.
        """
        sets = Dataset(self.dataDir).trainingSets()
        self.assertEqual(
            [('sphere-96', 'gaussian'), ('sphere-96', 'laplacian'),
             ('torus-96', 'gaussian'), ('torus-96', 'laplacian')],
            [(entry['name'], level['kind']) for entry, level in sets])

    def testEvalSets(self):
        """
        Evaluation sets must be filterable by noise scale.
        """
        dataset = Dataset(self.dataDir)
        self.assertEqual(6, len(dataset.evalSets()))
        selected = dataset.evalSets([0.03])
        self.assertEqual(3, len(selected))
        self.assertTrue(all(level['scale'] == 0.03 for _, level in selected))

    def testClouds(self):
        """
        Clean clouds must be normalized, and noisy variants must differ from
        the clean cloud and from each other.
        """
        dataset = Dataset(self.dataDir)
        entry = dataset.split('train')[0]
        clean = dataset.clean(entry)
        _, radius = boundingSphere(clean)
        self.assertAlmostEqual(1.0, radius, places=9)
        first, second = [dataset.noisy(variant)
                         for variant in entry['train'][0]['variants'][:2]]
        self.assertEqual(96, len(first))
        self.assertFalse(np.array_equal(clean.points, first.points))
        self.assertFalse(np.array_equal(first.points, second.points))
        self.assertGreater(len(dataset.mesh(entry).faces), 0)

    def testCached(self):
        """
        Reading the same cloud twice must return the same object.
        """
        dataset = Dataset(self.dataDir)
        entry = dataset.split('heldout')[0]
        self.assertIs(dataset.clean(entry), dataset.clean(entry))

    def testMissingManifest(self):
        """
        A directory without a manifest must result in a ParseError.
        """
        error = 'could not read the dataset manifest. Run the generate'
        assertRaisesRegex(self, ParseError, error, Dataset,
                          os.path.join(self.tempdir, 'nowhere'))

    def testBadVersion(self):
        """
        A manifest with an unknown version must result in a ParseError.
        """
        path = os.path.join(self.dataDir, MANIFEST)
        with open(path, 'w') as fp:
            json.dump({'version': 99, 'seed': 0, 'shapes': []}, fp)
        error = 'unsupported manifest version 99.$'
        assertRaisesRegex(self, ParseError, error, Dataset, self.dataDir)

    def testMalformed(self):
        """
        A manifest entry missing a key must result in a ParseError.
        """
        path = os.path.join(self.dataDir, MANIFEST)
        with open(path, 'w') as fp:
            json.dump({'version': 1, 'seed': 0, 'shapes': [{'name': 'x'}]},
                      fp)
        error = 'malformed manifest'
        assertRaisesRegex(self, ParseError, error, Dataset, self.dataDir)

    def testBadJSON(self):
        """
        A manifest that is not JSON must result in a ParseError.
        """
        with open(os.path.join(self.dataDir, MANIFEST), 'w') as fp:
            fp.write('{')
        assertRaisesRegex(self, ParseError, 'bad JSON', Dataset,
                          self.dataDir)
