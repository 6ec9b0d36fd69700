import csv
import json
import os
import shutil
import tempfile
from argparse import ArgumentParser
from unittest import TestCase

import numpy as np
from six import assertRaisesRegex

from simpc.config import RunConfig
from simpc.errors import (
    AcceptanceError, ConfigError, ParameterError, ParseError, StateError)
from simpc.formats import readPLY
from simpc.network import (
    ModelHyper, ModelParams, denoiseForward, loadModel, saveModel)
from simpc.options import addCommonOptions, parseCommonOptions
from simpc.pipeline import Pipeline, writeAblationTable
from simpc.train import (
    CHECKPOINT, EPOCH_LOG, EpochLog, Trainer, midpointError)
from simpc.utils import setThreadCount, threadCount

CONFIG = '''\
[shapes]
train = sphere:96
heldout = cube_surface:96

[noise]
train = gaussian:0.02
eval = gaussian:0.02
variants = 2

[train]
epochs = 1
batch = 2
patch_size = 48
seed = 3

[model]
k = 8
channels = 16
blocks = 1
encoder_layers = 2
max_step = 0.1

[ablate]
loss_modes = sr_cd_only, simpc
w2_values = 2.0
noise_levels = 0.02

[theory]
samples = 2000
moment_samples = 2000
moment_instances = 1
'''


def readCSV(path):
    with open(path) as fp:
        return list(csv.reader(fp))


class PipelineTestCase(TestCase):
    """
    Make a tiny configuration and dataset in a temporary directory.
    """
    def setUp(self):
        self.tempdir = tempfile.mkdtemp()
        self.config = RunConfig.fromString(CONFIG, outDir=self.tempdir)
        self.pipeline = Pipeline(self.config)
        self.pipeline.generate()

    def tearDown(self):
        shutil.rmtree(self.tempdir)

    def path(self, *parts):
        return os.path.join(self.tempdir, *parts)


class TestTraining(PipelineTestCase):
    """
    Test training through the pipeline.
    """
    def testTrainOneEpoch(self):
        """
        One epoch must write a log row and a loadable checkpoint whose
        hyperparameters match the configuration.
        """
        plotfile = self.path('loss.html')
        logs = self.pipeline.train(plotfile=plotfile)
        self.assertTrue(os.path.exists(plotfile))
        self.assertEqual(1, len(logs))
        self.assertGreater(logs[0].losses['total'], 0.0)
        self.assertIsNotNone(logs[0].evalCD)

        rows = readCSV(self.path('reports', EPOCH_LOG))
        self.assertEqual(list(EpochLog.CSV_HEADER), rows[0])
        self.assertEqual('1', rows[1][0])

        checkpoint = self.path('checkpoints', CHECKPOINT)
        params, state, meta = loadModel(checkpoint, self.config.hyper())
        self.assertEqual(1, meta['epoch'])
        self.assertEqual('simpc', meta['mode'])
        self.assertEqual(1, state.step)
        self.assertTrue(os.path.exists(self.path('checkpoints',
                                                 'config.ini')))
        self.assertTrue(os.path.exists(checkpoint + '.json'))

    def testDeterministic(self):
        """
        Training twice from the same seed must give identical checkpoints
        and identical logs apart from the wall time.
        """
        self.pipeline.train()
        with open(self.path('checkpoints', CHECKPOINT), 'rb') as fp:
            first = fp.read()
        firstLog = readCSV(self.path('reports', EPOCH_LOG))

        other = tempfile.mkdtemp()
        try:
            config = RunConfig.fromString(CONFIG, outDir=other)
            pipeline = Pipeline(config)
            pipeline.generate()
            pipeline.train()
            with open(os.path.join(other, 'checkpoints', CHECKPOINT),
                      'rb') as fp:
                self.assertEqual(first, fp.read())
            secondLog = readCSV(os.path.join(other, 'reports', EPOCH_LOG))
        finally:
            shutil.rmtree(other)

        self.assertEqual([row[:-1] for row in firstLog],
                         [row[:-1] for row in secondLog])

    def testThreadIndependent(self):
        """
        The thread count must not change the trained weights.
        """
        original = threadCount()
        try:
            setThreadCount(1)
            one = Trainer(self.config)
            one.train()
            setThreadCount(3)
            three = Trainer(self.config)
            three.train()
        finally:
            setThreadCount(original)
        for name, tensor in one.params.parameters().items():
            self.assertTrue(np.array_equal(
                tensor.values, three.params.parameters()[name].values), name)

    def testOtherModes(self):
        """
        The baseline loss modes must train without mirror losses.
        """
        for mode in 'sr_cd_only', 'sr_emd_only', 'noise_baseline':
            config = self.config.copy()
            config.set('loss', 'mode', mode)
            logs = Trainer(config).train()
            self.assertEqual(0.0, logs[0].losses['mpc'], mode)
            self.assertGreater(logs[0].losses['total'], 0.0, mode)

    def testStepChangesWeights(self):
        """
        A training step must change the model weights.
        """
        trainer = Trainer(self.config)
        before = dict((name, tensor.values.copy())
                      for name, tensor in trainer.params.parameters().items())
        trainer.step(1, 0, trainer.dataset.trainingSets()[0])
        self.assertTrue(any(
            not np.array_equal(before[name], tensor.values)
            for name, tensor in trainer.params.parameters().items()))
        self.assertEqual(1, trainer.state.step)

    def testMissingDataset(self):
        """
        Training without a generated dataset must result in a ParseError
        naming the generate command.
        """
        config = RunConfig.fromString(
            CONFIG, outDir=self.path('elsewhere'))
        assertRaisesRegex(self, ParseError, 'Run the generate command',
                          Trainer, config)


class TestMidpoint(TestCase):
    """
    Test the midpointError function and the epoch log.
    """
    def testDefaultScaling(self):
        """
        With w2 = 2 w1, the denoised seed must be the midpoint of the seed
        and mirror points.
        """
        hyper = ModelHyper(k=4, channels=8, blocks=2, maxStep=0.1,
                           encoderLayers=1)
        params = ModelParams.initialize(hyper, 0, zeroDecoder=False)
        points = np.random.default_rng(0).standard_normal((20, 3))
        trajectory = denoiseForward(points, params, withMirror=True)
        self.assertLess(midpointError(trajectory), 1e-12)

    def testOtherScaling(self):
        """
        With w2 != 2 w1, the midpoint error must be positive.
        """
        hyper = ModelHyper(k=4, channels=8, blocks=1, maxStep=0.1,
                           encoderLayers=1, w2=3.0)
        params = ModelParams.initialize(hyper, 0, zeroDecoder=False)
        points = np.random.default_rng(0).standard_normal((20, 3))
        trajectory = denoiseForward(points, params, withMirror=True)
        self.assertGreater(midpointError(trajectory), 0.0)

    def testNoMirror(self):
        """
        A trajectory without mirror records must have zero midpoint error.
        """
        hyper = ModelHyper(k=4, channels=8, blocks=1, encoderLayers=1)
        params = ModelParams.initialize(hyper, 0)
        points = np.random.default_rng(0).standard_normal((20, 3))
        self.assertEqual(0.0, midpointError(denoiseForward(points, params)))

    def testCSVRow(self):
        """
        Log rows must hold exact values, empty cells for missing ones and
        the wall time to the millisecond.
        """
        log = EpochLog(3, {'total': 0.5, 'mpc': 0.25, 'sr': 0.25,
                           'baseline': 0.0}, 0.0, 1.23456)
        self.assertEqual(
            ['3', '0.5', '0.25', '0.25', '0.0', '0.0', '', '', '1.235'],
            log.csvRow())


class TestReadMesh(PipelineTestCase):
    """
    Test reading clean meshes through the pipeline.
    """
    def setUp(self):
        PipelineTestCase.setUp(self)
        self.messages = []
        self.pipeline.report = lambda *args: self.messages.extend(args)
        self.meshFile = self.path('degenerate.off')
        with open(self.meshFile, 'w') as fp:
            fp.write('OFF\n4 3 0\n0 0 0\n1 0 0\n0 1 0\n2 0 0\n'
                     '3 0 1 2\n3 0 1 3\n3 1 0 3\n')

    def testDroppedFacesReported(self):
        """
        Dropping zero-area faces must be reported with their number and
        the file name.
        """
        mesh = self.pipeline.readMesh(self.meshFile)
        self.assertEqual(1, len(mesh.faces))
        self.assertEqual(
            ['Dropped 2 degenerate faces from %s.' % self.meshFile],
            self.messages)

    def testCleanMeshSilent(self):
        """
        A generated mesh with no zero-area faces must not be reported.
        """
        manifest = self.pipeline.generate()
        self.pipeline.readMesh(self.path('data',
                                         manifest['shapes'][0]['mesh']))
        self.assertEqual([], self.messages)

    def testStrict(self):
        """
        With strict_mesh set, a zero-area face must result in a ParseError.
        """
        config = self.config.copy()
        config.set('eval', 'strict_mesh', True)
        error = r'degenerate.off: Mesh has 2 degenerate \(zero-area\) faces'
        assertRaisesRegex(self, ParseError, error,
                          Pipeline(config).readMesh, self.meshFile)


class TestDenoiseAndEval(PipelineTestCase):
    """
    Test denoising and evaluation through the pipeline.
    """
    def setUp(self):
        PipelineTestCase.setUp(self)
        self.pipeline.train()
        self.checkpoint = self.path('checkpoints', CHECKPOINT)
        manifest = self.pipeline.generate()
        self.heldout = manifest['shapes'][1]
        self.noisyFile = self.path(
            'data', self.heldout['eval'][0]['variants'][0]['path'])

    def testDenoise(self):
        """
        Denoising must write a cloud of the same size.
        """
        outfile = self.path('denoised.ply')
        denoised = self.pipeline.denoise(self.checkpoint, self.noisyFile,
                                         outfile)
        self.assertEqual(96, len(readPLY(outfile)))
        self.assertTrue(np.array_equal(denoised.points,
                                       readPLY(outfile).points))

    def testIntermediates(self):
        """
        Several passes must write each intermediate pass, and the last pass
        must continue from the previous one.
        """
        outfile = self.path('denoised.ply')
        self.pipeline.denoise(self.checkpoint, self.noisyFile, outfile,
                              iterations=3, intermediates=True)
        self.assertTrue(os.path.exists(self.path('denoised-pass1.ply')))
        self.assertTrue(os.path.exists(self.path('denoised-pass2.ply')))
        self.assertFalse(os.path.exists(self.path('denoised-pass3.ply')))
        params, _, _ = loadModel(self.checkpoint)
        second = readPLY(self.path('denoised-pass2.ply'))
        self.assertTrue(np.array_equal(
            denoiseForward(second, params).final(),
            readPLY(outfile).points))

    def testHyperMismatch(self):
        """
        Denoising with a configuration whose model differs from the
        checkpoint must result in a StateError.
        """
        config = self.config.copy()
        config.set('model', 'channels', 32)
        pipeline = Pipeline(config)
        assertRaisesRegex(self, StateError, 'do not match', pipeline.denoise,
                          self.checkpoint, self.noisyFile,
                          self.path('out.ply'))

    def testEvalFiles(self):
        """
        Evaluating files must report the noisy input and the denoised cloud
        and write both to the CSV file.
        """
        denoisedFile = self.path('denoised.ply')
        plotfile = self.path('clouds.html')
        self.pipeline.denoise(self.checkpoint, self.noisyFile, denoisedFile,
                              plotfile=plotfile)
        self.assertTrue(os.path.exists(plotfile))
        outfile = self.path('eval.csv')
        reports = self.pipeline.evalFiles(
            denoisedFile, self.path('data', self.heldout['clean']),
            self.noisyFile, self.path('data', self.heldout['mesh']),
            shape='cube', noiseKind='gaussian', noiseScale=0.02,
            outfile=outfile)
        self.assertEqual(['noisy', 'denoised'],
                         [report.source for report in reports])
        rows = readCSV(outfile)
        self.assertEqual(3, len(rows))
        self.assertEqual('cube', rows[1][0])
        self.assertEqual(float(rows[1][3]) * 1e5, float(rows[1][4]))
        self.assertGreater(reports[0].cd, 0.0)

    def testEvalCheckpoint(self):
        """
        Evaluating a checkpoint must give a noisy and a denoised row for
        every evaluation cloud.
        """
        outfile = self.path('eval.csv')
        reports = self.pipeline.evalCheckpoint(self.checkpoint, outfile)
        self.assertEqual(4, len(reports))
        self.assertEqual(['noisy', 'denoised', 'noisy', 'denoised'],
                         [report.source for report in reports])
        self.assertEqual(5, len(readCSV(outfile)))

    def testTheory(self):
        """
        The theory command with a checkpoint must add the mean-distance
        check and the bridge measurement to the report.
        """
        passed, records = self.pipeline.theory(self.checkpoint)
        self.assertEqual('mean_closer', records[-1].check)
        with open(self.path('reports', 'theory.json')) as fp:
            report = json.load(fp)
        self.assertEqual(passed, report['pass'])
        self.assertEqual('mirror_bridge', report['descriptive'][0]['check'])

    def testTheoryStrict(self):
        """
        A strict theory run with a model that moves points away from the
        surface must result in an AcceptanceError.
        """
        hyper = self.config.hyper()
        wild = self.path('wild.ckpt')
        saveModel(wild, ModelParams.initialize(hyper, 1, zeroDecoder=False))
        assertRaisesRegex(self, AcceptanceError, 'mean_closer',
                          self.pipeline.theory, wild, None, True)


class TestAblation(PipelineTestCase):
    """
    Test the ablation sweep.
    """
    def testAblate(self):
        """
        The ablation must train each setting, reuse the simpc model for the
        configured w2, and write a table with a noisy reference row.
        """
        plotfile = self.path('ablation.html')
        rows = self.pipeline.ablate(plotfile=plotfile)
        self.assertTrue(os.path.exists(plotfile))
        settings = [(row['group'], row['setting']) for row in rows]
        self.assertEqual(
            [('loss', 'sr_cd_only'), ('loss', 'simpc'), ('w2', 'w2=2.0'),
             ('reference', 'noisy')], settings)
        simpc, w2 = rows[1], rows[2]
        self.assertEqual(simpc['cd_raw'], w2['cd_raw'])
        self.assertFalse(os.path.exists(
            self.path('checkpoints', 'ablate', 'w2=2.0')))
        self.assertTrue(os.path.exists(
            self.path('checkpoints', 'ablate', 'simpc', CHECKPOINT)))

        table = readCSV(self.path('reports', 'ablation.csv'))
        self.assertEqual(['group', 'setting', 'cd_e5@0.02', 'p2m_e5@0.02'],
                         table[0])
        self.assertEqual(5, len(table))

    def testMissingScale(self):
        """
        An ablation noise level without evaluation clouds must result in a
        ConfigError.
        """
        config = self.config.copy()
        config.set('ablate', 'noise_levels', [0.05])
        config.set('ablate', 'loss_modes', ['sr_cd_only'])
        config.set('ablate', 'w2_values', [])
        error = 'no evaluation clouds at noise scale 0.05'
        assertRaisesRegex(self, ConfigError, error, Pipeline(config).ablate)

    def testEmptyTable(self):
        """
        Writing an empty ablation table must be refused.
        """
        assertRaisesRegex(self, ParameterError, 'No ablation results',
                          writeAblationTable, [], [0.01],
                          self.path('x.csv'))


class TestOptions(TestCase):
    """
    Test the common command-line options.
    """
    def setUp(self):
        self.parser = ArgumentParser()
        addCommonOptions(self.parser)
        self.threads = threadCount()

    def tearDown(self):
        setThreadCount(self.threads)

    def testDefaults(self):
        """
        Without options the default configuration must be used.
        """
        config = parseCommonOptions(self.parser.parse_args([]))
        self.assertEqual(0, config.get('train', 'seed'))
        self.assertEqual('data', config.path('data_dir'))

    def testOverrides(self):
        """
        Flags must override the configuration and set the thread count.
        """
        config = parseCommonOptions(self.parser.parse_args(
            ['--seed', '9', '--threads', '2', '--out', 'run',
             '--verbose', '1']))
        self.assertEqual(9, config.get('train', 'seed'))
        self.assertEqual(1, config.get('runtime', 'verbose'))
        self.assertEqual(2, threadCount())
        self.assertEqual(os.path.join('run', 'data'), config.path('data_dir'))

    def testBadSeed(self):
        """
        A negative seed must result in a ConfigError.
        """
        error = r'^--seed must be an unsigned 64-bit integer \(got -1\)\.$'
        assertRaisesRegex(self, ConfigError, error, parseCommonOptions,
                          self.parser.parse_args(['--seed', '-1']))

    def testBadThreads(self):
        """
        A zero thread count must result in a ConfigError.
        """
        error = '^runtime threads must be >= 1.$'
        assertRaisesRegex(self, ConfigError, error, parseCommonOptions,
                          self.parser.parse_args(['--threads', '0']))

    def testMissingConfigFile(self):
        """
        An unreadable configuration file must result in a ConfigError.
        """
        error = "^Could not read config file '/nonexistent/config.ini'"
        assertRaisesRegex(self, ConfigError, error, parseCommonOptions,
                          self.parser.parse_args(
                              ['--config', '/nonexistent/config.ini']))
