from __future__ import division

import csv
import json
import os
from collections import OrderedDict
from time import time

import numpy as np

from simpc.dataset import Dataset
from simpc.errors import NumericError
from simpc.formats import writePLY
from simpc.geometry import patchAround
from simpc.metrics import evaluate
from simpc.mpgm import baselineNoiseLoss, totalLoss
from simpc.network import (
    ModelParams, denoiseForward, denoiseIterations, saveModel)
from simpc.tensor import AdamState, Tape, add, adamStep, scale
from simpc.utils import Reporter, atomicWrite, deriveSeed, rng, s

# Seed streams used during training.
INIT_STREAM = 3
ORDER_STREAM = 4
BATCH_STREAM = 5
BASELINE_STREAM = 6

CHECKPOINT = 'model.ckpt'
EPOCH_LOG = 'train-log.csv'


class EpochLog(object):
    """
    The summary of one training epoch.

    @param epoch: The C{int} epoch number (from 1).
    @param losses: A C{dict} of mean 'total', 'mpc', 'sr' and 'baseline'
        loss values.
    @param midpointError: The C{float} largest distance between a denoised
        seed point and the midpoint of its seed and mirror points.
    @param wallTime: The C{float} seconds the epoch took.
    @param evalCD: The C{float} held-out Chamfer distance, or C{None}.
    @param evalP2M: The C{float} held-out point-to-mesh distance, or
        C{None}.
    """
    CSV_HEADER = ('epoch', 'total', 'mpc', 'sr', 'baseline',
                  'midpoint_error', 'eval_cd', 'eval_p2m', 'wall_time')

    def __init__(self, epoch, losses, midpointError, wallTime, evalCD=None,
                 evalP2M=None):
        self.epoch = epoch
        self.losses = losses
        self.midpointError = midpointError
        self.wallTime = wallTime
        self.evalCD = evalCD
        self.evalP2M = evalP2M

    def csvRow(self):
        def number(value):
            return '' if value is None else repr(float(value))

        return [str(self.epoch)] + [
            number(self.losses[key])
            for key in ('total', 'mpc', 'sr', 'baseline')] + [
            number(self.midpointError), number(self.evalCD),
            number(self.evalP2M), '%.3f' % self.wallTime]


def midpointError(trajectory):
    """
    Find the largest deviation of a denoised seed point from the midpoint of
    its seed and mirror points, over all blocks.

    @param trajectory: A C{DenoiseTrajectory} computed with the mirror
        branch.
    @return: A C{float}, zero when w2 = 2 w1 = 2.
    """
    worst = 0.0
    for triple in trajectory.mirrorRecords or ():
        midpoint = (triple.seed.values + triple.xTilde.values) / 2.0
        worst = max(worst, float(np.abs(triple.xHat.values - midpoint).max()))
    return worst


class Trainer(Reporter):
    """
    Train a denoiser on pairs of noisy variants.

    Each epoch visits every (shape, noise level) training set once, in a
    seeded random order. A step draws C{batch} patch pairs from two distinct
    variants of that set (both patches around the same location), sums the
    per-pair losses divided by C{batch}, and takes one Adam step.

    @param config: A C{RunConfig}.
    @param verbose: The C{int} verbosity level.
    """
    def __init__(self, config, verbose=0):
        Reporter.__init__(self, verbose)
        self.config = config
        self.seed = config.get('train', 'seed')
        self.mode = config.get('loss', 'mode')
        self.dataset = Dataset(config.path('data_dir'))
        self.params = ModelParams.initialize(
            config.hyper(), deriveSeed(self.seed, INIT_STREAM))
        self.state = AdamState(lr=config.get('train', 'lr'))
        self.logs = []

    def _pairLoss(self, patchA, patchB, baselineSeed):
        """
        Compute the loss of one patch pair.

        @return: A 3-C{tuple} of the scalar loss C{Tensor}, a C{dict} of
            loss values and the C{float} midpoint error.
        """
        config = self.config
        if self.mode == 'noise_baseline':
            delta = config.get('loss', 'noise_delta')
            lossA = baselineNoiseLoss(patchA, self.params, delta,
                                      baselineSeed)
            lossB = baselineNoiseLoss(patchB, self.params, delta,
                                      baselineSeed + 1)
            loss = add(lossA, lossB)
            return loss, {'total': loss.item(), 'mpc': 0.0, 'sr': 0.0,
                          'baseline': loss.item()}, 0.0

        withMirror = self.mode == 'simpc'
        neighborhood = config.get('loss', 'mirror_neighborhood')
        trajA = denoiseForward(patchA, self.params, withMirror, neighborhood)
        trajB = denoiseForward(patchB, self.params, withMirror, neighborhood)
        breakdown = totalLoss(trajA, trajB, self.mode,
                              config.get('loss', 'lambda_mpc'),
                              config.get('loss', 'emd_cap'))
        error = max(midpointError(trajA), midpointError(trajB))
        return breakdown.total, breakdown.values(), error

    def _dump(self, epoch, step, pairs, error):
        """
        Save the patch pairs of a failed step for diagnosis.

        @return: The C{str} path of the JSON description.
        """
        reportDir = self.config.path('report_dir')
        if not os.path.isdir(reportDir):
            os.makedirs(reportDir)
        prefix = os.path.join(reportDir, 'failed-epoch%d-step%d' %
                              (epoch, step))
        files = []
        for index, (patchA, patchB) in enumerate(pairs):
            for label, patch in (('a', patchA), ('b', patchB)):
                path = '%s-pair%d-%s.ply' % (prefix, index, label)
                writePLY(patch, path)
                files.append(path)
        description = prefix + '.json'
        with atomicWrite(description) as fp:
            json.dump({'epoch': epoch, 'step': step, 'error': str(error),
                       'files': files}, fp, indent=2, sort_keys=True)
            fp.write('\n')
        return description

    def step(self, epoch, step, trainingSet):
        """
        Take one optimizer step on one training set.

        @param epoch: The C{int} epoch number.
        @param step: The C{int} step number within the epoch.
        @param trainingSet: A (shape entry, noise level) pair from the
            C{Dataset}.
        @raise NumericError: If a loss or gradient is not finite (after the
            offending batch has been saved to the report directory).
        @return: A 2-C{tuple} of the C{dict} of mean loss values and the
            C{float} largest midpoint error.
        """
        config = self.config
        batch = config.get('train', 'batch')
        patchSize = config.get('train', 'patch_size')
        generator = rng(self.seed, BATCH_STREAM, epoch, step)
        entry, level = trainingSet
        variants = [self.dataset.noisy(variant)
                    for variant in level['variants']]

        params = self.params.parameters()
        summed = OrderedDict((name, np.zeros_like(tensor.values))
                             for name, tensor in params.items())
        totals = {'total': 0.0, 'mpc': 0.0, 'sr': 0.0, 'baseline': 0.0}
        worst = 0.0
        pairs = []

        try:
            for index in range(batch):
                first, second = generator.choice(len(variants), 2,
                                                 replace=False)
                cloudA, cloudB = variants[first], variants[second]
                center = cloudA.points[generator.integers(len(cloudA))]
                pair = (patchAround(cloudA, center, patchSize),
                        patchAround(cloudB, center, patchSize))
                pairs.append(pair)
                with Tape() as tape:
                    loss, values, error = self._pairLoss(
                        pair[0], pair[1],
                        deriveSeed(self.seed, BASELINE_STREAM, epoch, step,
                                   index))
                    scaled = scale(loss, 1.0 / batch)
                grads = tape.backward(scaled)
                for name, tensor in params.items():
                    summed[name] += grads[tensor]
                for key in totals:
                    totals[key] += values[key] / batch
                worst = max(worst, error)
            for name, grad in summed.items():
                if not np.all(np.isfinite(grad)):
                    raise NumericError('Gradient of %r is not finite.' % name)
        except NumericError as e:
            description = self._dump(epoch, step, pairs, e)
            raise NumericError('%s (epoch %d, step %d, shape %s, noise %s; '
                               'batch saved to %s)' %
                               (e, epoch, step, entry['name'],
                                level['kind'], description))

        adamStep(params, summed, self.state)
        return totals, worst

    def evaluate(self):
        """
        Denoise one held-out noisy cloud and measure it.

        @return: A C{MetricReport}, or C{None} if there is nothing to
            evaluate on.
        """
        evalSets = self.dataset.evalSets()
        heldout = [(entry, level) for entry, level in evalSets
                   if entry['split'] == 'heldout']
        candidates = heldout or evalSets
        if not candidates:
            return None
        entry, level = candidates[0]
        noisy = self.dataset.noisy(level['variants'][0])
        denoised = denoiseIterations(
            noisy, self.params, self.config.get('eval', 'iterations'))[-1]
        return evaluate(noisy.withPoints(denoised), self.dataset.clean(entry),
                        self.dataset.mesh(entry), entry['name'],
                        level['kind'], level['scale'])

    def checkpoint(self, epoch):
        """
        Save the model and optimizer state, replacing any earlier
        checkpoint only once the new one is complete.

        @param epoch: The C{int} number of completed epochs.
        @return: The C{str} checkpoint path.
        """
        checkpointDir = self.config.path('checkpoint_dir')
        if not os.path.isdir(checkpointDir):
            os.makedirs(checkpointDir)
        path = os.path.join(checkpointDir, CHECKPOINT)
        saveModel(path, self.params, self.state,
                  {'epoch': epoch, 'seed': self.seed, 'mode': self.mode})
        self.config.write(os.path.join(checkpointDir, 'config.ini'))
        return path

    def _writeLogs(self):
        reportDir = self.config.path('report_dir')
        if not os.path.isdir(reportDir):
            os.makedirs(reportDir)
        with atomicWrite(os.path.join(reportDir, EPOCH_LOG)) as fp:
            writer = csv.writer(fp, lineterminator='\n')
            writer.writerow(EpochLog.CSV_HEADER)
            for log in self.logs:
                writer.writerow(log.csvRow())

    def train(self, epochs=None):
        """
        Run the training loop.

        @param epochs: The C{int} number of epochs, or C{None} to use the
            config.
        @return: A C{list} of C{EpochLog}s.
        """
        config = self.config
        epochs = epochs or config.get('train', 'epochs')
        checkpointEvery = config.get('train', 'checkpoint_every')
        evalEvery = config.get('train', 'eval_every')
        trainingSets = self.dataset.trainingSets()
        self.report('Training %s for %d epoch%s on %d training set%s, %d '
                    'parameters.' % (self.mode, epochs, s(epochs),
                                     len(trainingSets), s(len(trainingSets)),
                                     self.params.parameterCount()))

        for epoch in range(1, epochs + 1):
            start = time()
            order = rng(self.seed, ORDER_STREAM, epoch).permutation(
                len(trainingSets))
            means = {'total': 0.0, 'mpc': 0.0, 'sr': 0.0, 'baseline': 0.0}
            worst = 0.0
            for step, index in enumerate(order):
                totals, error = self.step(epoch, step, trainingSets[index])
                for key in means:
                    means[key] += totals[key] / len(order)
                worst = max(worst, error)

            evalCD = evalP2M = None
            if evalEvery and (epoch % evalEvery == 0 or epoch == epochs):
                report = self.evaluate()
                if report is not None:
                    evalCD, evalP2M = report.cd, report.p2m

            log = EpochLog(epoch, means, worst, time() - start, evalCD,
                           evalP2M)
            self.logs.append(log)
            self._writeLogs()
            self.report('Epoch %d: loss %.6g (mpc %.6g, sr %.6g) in %.1fs.' %
                        (epoch, means['total'], means['mpc'], means['sr'],
                         log.wallTime))

            if (checkpointEvery and epoch % checkpointEvery == 0 or
                    epoch == epochs):
                self.report('Saved checkpoint %s.' % self.checkpoint(epoch),
                            requiredVerbosityLevel=2)

        return self.logs
