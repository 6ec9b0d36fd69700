"""
The commands behind C{bin/simpc.py}: generate a dataset, train, denoise,
evaluate, run the ablation sweeps and the theory checks.
"""

from __future__ import division

import csv
import os
import sys
from collections import OrderedDict

import numpy as np

from simpc.dataset import Dataset, DatasetGenerator
from simpc.errors import AcceptanceError, ConfigError, ParameterError
from simpc.formats import readCloud, readOFF, writeCloud
from simpc.geometry import NoiseModel, addNoise, makeShape
from simpc.metrics import REPORT_MULTIPLIER, MetricReport, evaluate
from simpc.network import denoiseIterations, loadModel
from simpc.theory import (
    TheoryHarness, bridgeExperiment, meanCloserCheck, writeReport)
from simpc.train import Trainer
from simpc.utils import Reporter, atomicWrite, commas, s


def _makeDirs(path):
    if path and not os.path.isdir(path):
        os.makedirs(path)


def writeReports(reports, outfile=None):
    """
    Write metric reports as CSV.

    @param reports: A C{list} of C{MetricReport}s.
    @param outfile: A C{str} file name, or C{None} for standard output.
    """
    def write(fp):
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(MetricReport.CSV_HEADER)
        for report in reports:
            writer.writerow(report.csvRow())

    if outfile is None:
        write(sys.stdout)
    else:
        with atomicWrite(outfile) as fp:
            write(fp)


class Pipeline(Reporter):
    """
    Run the end-to-end commands for one configuration.

    @param config: A C{RunConfig}.
    """
    def __init__(self, config):
        Reporter.__init__(self, config.get('runtime', 'verbose'))
        self.config = config

    def generate(self):
        """
        Write the clean shapes, meshes and noisy variants, plus the manifest.

        @return: The manifest C{dict}.
        """
        return DatasetGenerator(self.config, self.verbose).generate()

    def train(self, plotfile=None, show=False):
        """
        Train a model on the generated dataset.

        @param plotfile: A C{str} HTML file for a loss plot, or C{None}.
        @param show: If C{True}, open the plot in a browser.
        @return: A C{list} of C{EpochLog}s.
        """
        trainer = Trainer(self.config, self.verbose)
        logs = trainer.train()
        if plotfile:
            from simpc.plotting import plotTrainingLoss
            plotTrainingLoss(logs, plotfile, show=show)
        return logs

    def denoise(self, checkpoint, infile, outfile, iterations=None,
                intermediates=False, checkHyper=True, plotfile=None,
                show=False):
        """
        Denoise a point cloud file with a trained model.

        @param checkpoint: The C{str} checkpoint file.
        @param infile: The C{str} input cloud (.xyz, .ply or .off).
        @param outfile: The C{str} output cloud (.xyz or .ply).
        @param iterations: The C{int} number of passes, or C{None} to use the
            config.
        @param intermediates: If C{True}, also write the output of every
            pass but the last, with '-pass<i>' before the suffix.
        @param checkHyper: If C{True}, the checkpoint's hyperparameters must
            match the configured ones.
        @param plotfile: A C{str} HTML file for a 3-D plot, or C{None}.
        @param show: If C{True}, open the plot in a browser.
        @raise ParameterError: If the cloud has no more points than k.
        @return: The denoised C{PointCloud}.
        """
        params, _, _ = loadModel(
            checkpoint, self.config.hyper() if checkHyper else None)
        if iterations is None:
            iterations = self.config.get('eval', 'iterations')
        cloud = readCloud(infile)
        outputs = denoiseIterations(cloud, params, iterations)

        if intermediates:
            base, suffix = os.path.splitext(outfile)
            for index, points in enumerate(outputs[:-1], start=1):
                writeCloud(cloud.withPoints(points),
                           '%s-pass%d%s' % (base, index, suffix))
        denoised = cloud.withPoints(outputs[-1])
        writeCloud(denoised, outfile)
        self.report('Denoised %d point%s from %s in %d pass%s.' %
                    (len(cloud), s(len(cloud)), infile, iterations,
                     '' if iterations == 1 else 'es'))

        if plotfile:
            from simpc.plotting import plotClouds
            plotClouds([cloud, denoised], ['input', 'denoised'], plotfile,
                       show=show)
        return denoised

    def readMesh(self, path):
        """
        Read a clean OFF mesh, reporting any zero-area faces dropped from it.

        @param path: The C{str} OFF file name.
        @raise ParseError: If the file cannot be parsed, or if it has a
            zero-area face and the [eval] strict_mesh option is set.
        @return: A C{TriangleMesh}.
        """
        mesh = readOFF(path, self.config.get('eval', 'strict_mesh'))
        if mesh.droppedFaces:
            self.report('Dropped %d degenerate face%s from %s.' %
                        (mesh.droppedFaces, s(mesh.droppedFaces), path))
        return mesh

    def evalFiles(self, denoisedFile, cleanFile, noisyFile, meshFile=None,
                  shape='', noiseKind='', noiseScale=0.0, outfile=None):
        """
        Measure a denoised cloud file, and the noisy cloud it came from,
        against the clean reference.

        @param denoisedFile: The C{str} denoised cloud file.
        @param cleanFile: The C{str} clean cloud file.
        @param noisyFile: The C{str} noisy cloud file.
        @param meshFile: The C{str} clean OFF mesh file, or C{None} to skip
            the point-to-mesh distance.
        @param shape: The C{str} shape name for the report.
        @param noiseKind: The C{str} noise kind for the report.
        @param noiseScale: The C{float} noise scale for the report.
        @param outfile: A C{str} CSV file, or C{None} for standard output.
        @raise ParseError: If a file cannot be parsed.
        @return: A C{list} of two C{MetricReport}s, noisy then denoised.
        """
        clean = readCloud(cleanFile)
        mesh = None if meshFile is None else self.readMesh(meshFile)
        twoSided = self.config.get('eval', 'two_sided')
        reports = [
            evaluate(readCloud(cloudFile), clean, mesh, shape, noiseKind,
                     noiseScale, source, twoSided)
            for source, cloudFile in (('noisy', noisyFile),
                                      ('denoised', denoisedFile))]
        writeReports(reports, outfile)
        return reports

    def evalDataset(self, params, scales=None, split=None):
        """
        Denoise and measure the evaluation clouds of the dataset.

        @param params: A C{ModelParams}.
        @param scales: An optional C{list} of C{float} noise scales to keep.
        @param split: 'train' or 'heldout' to keep only one split's shapes,
            or C{None} for all.
        @return: A C{list} of C{MetricReport}s, a noisy row before each
            denoised row.
        """
        dataset = Dataset(self.config.path('data_dir'))
        iterations = self.config.get('eval', 'iterations')
        twoSided = self.config.get('eval', 'two_sided')
        reports = []
        meshes = {}
        for entry, level in dataset.evalSets(scales):
            if split is not None and entry['split'] != split:
                continue
            clean = dataset.clean(entry)
            if entry['name'] not in meshes:
                meshes[entry['name']] = self.readMesh(dataset.meshPath(entry))
            mesh = meshes[entry['name']]
            for variant in level['variants']:
                noisy = dataset.noisy(variant)
                denoised = noisy.withPoints(
                    denoiseIterations(noisy, params, iterations)[-1])
                for source, cloud in (('noisy', noisy),
                                      ('denoised', denoised)):
                    reports.append(evaluate(
                        cloud, clean, mesh, entry['name'], level['kind'],
                        level['scale'], source, twoSided))
        self.report('Evaluated %d noisy cloud%s.' %
                    (len(reports) // 2, s(len(reports) // 2)))
        return reports

    def evalCheckpoint(self, checkpoint, outfile=None):
        """
        Evaluate a checkpoint on every evaluation cloud of the dataset.

        @param checkpoint: The C{str} checkpoint file.
        @param outfile: A C{str} CSV file, or C{None} for standard output.
        @return: A C{list} of C{MetricReport}s.
        """
        params, _, _ = loadModel(checkpoint, self.config.hyper())
        reports = self.evalDataset(params)
        writeReports(reports, outfile)
        return reports

    def _ablationSetting(self, name, changes):
        """
        Train one ablation setting from the shared seed.

        @param name: The C{str} setting name, used for its directories.
        @param changes: A C{list} of (section, key, value) config changes.
        @return: The trained C{ModelParams}.
        """
        config = self.config.copy()
        for section, key, value in changes:
            config.set(section, key, value)
        epochs = self.config.get('ablate', 'epochs')
        if epochs:
            config.set('train', 'epochs', epochs)
        for key in ('checkpoint_dir', 'report_dir'):
            config.set('paths', key, os.path.join(
                self.config.get('paths', key), 'ablate', name))
        config.validate()
        self.report('Ablation setting %s.' % name)
        trainer = Trainer(config, self.verbose)
        trainer.train()
        return trainer.params

    def _meanRows(self, setting, group, reports, source, scales):
        rows = []
        for scale in scales:
            selected = [report for report in reports
                        if report.source == source and
                        abs(report.noiseScale - scale) < 1e-12]
            if not selected:
                raise ConfigError(
                    'The dataset has no evaluation clouds at noise scale %r. '
                    'Add it to [noise] eval and regenerate.' % scale)
            cd = float(np.mean([report.cd for report in selected]))
            p2ms = [report.p2m for report in selected
                    if report.p2m is not None]
            p2m = float(np.mean(p2ms)) if p2ms else None
            rows.append(OrderedDict([
                ('group', group),
                ('setting', setting),
                ('noise_scale', scale),
                ('cd_raw', cd),
                ('cd_e5', cd * REPORT_MULTIPLIER),
                ('p2m_raw', p2m),
                ('p2m_e5', None if p2m is None else p2m * REPORT_MULTIPLIER),
            ]))
        return rows

    def ablate(self, outfile=None, plotfile=None, show=False):
        """
        Train and evaluate each loss mode, then each mirror extension
        distance w2, all from the same seed, on the held-out noise levels.

        @param outfile: A C{str} CSV file for the table, or C{None} to use
            'ablation.csv' in the report directory.
        @param plotfile: A C{str} HTML file for a bar plot, or C{None}.
        @param show: If C{True}, open the plot in a browser.
        @return: A C{list} of row C{dict}s, one per (setting, noise level).
        """
        config = self.config
        scales = config.get('ablate', 'noise_levels')
        modes = config.get('ablate', 'loss_modes')
        w2Values = config.get('ablate', 'w2_values')
        self.report('Ablating loss modes %s and w2 values %s at noise '
                    'levels %s.' % (commas(modes), commas(w2Values),
                                    commas(scales)))

        rows = []
        reports = None
        trained = {}
        for mode in modes:
            params = self._ablationSetting(mode, [('loss', 'mode', mode)])
            trained[mode] = params
            reports = self.evalDataset(params, scales)
            rows.extend(self._meanRows(mode, 'loss', reports, 'denoised',
                                       scales))

        for w2 in w2Values:
            name = 'w2=%r' % w2
            if w2 == config.get('model', 'w2') and 'simpc' in trained:
                params = trained['simpc']
            else:
                params = self._ablationSetting(
                    name, [('loss', 'mode', 'simpc'), ('model', 'w2', w2)])
            reports = self.evalDataset(params, scales)
            rows.extend(self._meanRows(name, 'w2', reports, 'denoised',
                                       scales))

        if reports is not None:
            rows.extend(self._meanRows('noisy', 'reference', reports,
                                       'noisy', scales))

        if outfile is None:
            reportDir = config.path('report_dir')
            _makeDirs(reportDir)
            outfile = os.path.join(reportDir, 'ablation.csv')
        writeAblationTable(rows, scales, outfile)

        if plotfile:
            from simpc.plotting import plotAblation
            plotAblation(rows, plotfile, show=show)
        return rows

    def theory(self, checkpoint=None, outfile=None, strict=False):
        """
        Run the Monte-Carlo theory checks and write a JSON report.

        @param checkpoint: An optional C{str} checkpoint file. If given, the
            mean-distance check and the mirror bridge measurement are run
            on the trained model too.
        @param outfile: A C{str} JSON file, or C{None} to use 'theory.json'
            in the report directory.
        @param strict: If C{True}, raise if any check fails.
        @raise AcceptanceError: If C{strict} and a check fails.
        @return: A 2-C{tuple} of the C{bool} overall result and the C{list}
            of C{CheckRecord}s.
        """
        config = self.config
        seed = config.get('train', 'seed')
        harness = TheoryHarness(
            samples=config.get('theory', 'samples'),
            momentSamples=config.get('theory', 'moment_samples'),
            momentInstances=config.get('theory', 'moment_instances'),
            noiseStd=config.get('theory', 'noise_std'), seed=seed,
            verbose=self.verbose)
        records = harness.run()
        extra = []

        if checkpoint is not None:
            params, _, _ = loadModel(checkpoint)
            record = meanCloserCheck(params, seed=seed)
            harness.report(record.summary())
            records.append(record)
            clean, _ = makeShape('sphere', 2048, seed)
            noisy = addNoise(clean, NoiseModel('gaussian', 0.02, seed + 1))
            extra.append(bridgeExperiment(params, noisy, clean))

        if outfile is None:
            reportDir = config.path('report_dir')
            _makeDirs(reportDir)
            outfile = os.path.join(reportDir, 'theory.json')
        passed = writeReport(outfile, records, extra)

        failed = [record.check for record in records if not record.passed]
        self.report('%d of %d check%s passed. Report in %s.' %
                    (len(records) - len(failed), len(records),
                     s(len(records)), outfile))
        if strict and failed:
            raise AcceptanceError('%d theory check%s failed: %s.' %
                                  (len(failed), s(len(failed)),
                                   ', '.join(failed)))
        return passed, records


def writeAblationTable(rows, scales, outfile):
    """
    Write ablation rows as a table with one line per setting and a CD and
    P2M column per noise level.

    @param rows: A C{list} of row C{dict}s as made by C{Pipeline.ablate}.
    @param scales: The C{list} of C{float} noise levels, in column order.
    @param outfile: The C{str} CSV file name.
    """
    if not rows:
        raise ParameterError('No ablation results to write.')
    settings = OrderedDict()
    for row in rows:
        settings.setdefault((row['group'], row['setting']), {})[
            row['noise_scale']] = row

    def number(value):
        return '' if value is None else repr(float(value))

    header = ['group', 'setting']
    for scale in scales:
        header.extend(['cd_e5@%r' % scale, 'p2m_e5@%r' % scale])

    with atomicWrite(outfile) as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(header)
        for (group, setting), byScale in settings.items():
            line = [group, setting]
            for scale in scales:
                row = byScale[scale]
                line.extend([number(row['cd_e5']), number(row['p2m_e5'])])
            writer.writerow(line)
