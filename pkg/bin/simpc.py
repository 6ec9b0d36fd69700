#!/usr/bin/env python

from __future__ import print_function

import os
import sys

# Multi-threaded BLAS reductions are not reproducible, so pin them before
# numpy is loaded. Our own kernels are threaded via --threads.
for _variable in ('OPENBLAS_NUM_THREADS', 'MKL_NUM_THREADS',
                  'OMP_NUM_THREADS'):
    os.environ.setdefault(_variable, '1')

from simpc.errors import ConfigError, ParseError, SIMPCError  # noqa: E402
from simpc.options import addCommonOptions, parseCommonOptions  # noqa: E402
from simpc.pipeline import Pipeline  # noqa: E402


def generate(pipeline, args):
    manifest = pipeline.generate()
    print('Wrote %d shapes to %s.' % (len(manifest['shapes']),
                                      pipeline.config.path('data_dir')))


def train(pipeline, args):
    logs = pipeline.train(plotfile=args.plot, show=args.show)
    print('Trained %d epochs, final loss %.6g.' % (
        len(logs), logs[-1].losses['total']))


def denoise(pipeline, args):
    pipeline.denoise(args.checkpoint, args.input, args.output,
                     iterations=args.iterations,
                     intermediates=args.intermediates,
                     checkHyper=args.config is not None,
                     plotfile=args.plot, show=args.show)


def evaluate(pipeline, args):
    if args.checkpoint:
        pipeline.evalCheckpoint(args.checkpoint, outfile=args.outfile)
    else:
        missing = [name for name in ('denoised', 'clean', 'noisy')
                   if getattr(args, name) is None]
        if missing:
            raise ConfigError(
                'Without --checkpoint, eval needs --denoised, --clean and '
                '--noisy (missing: %s).' %
                ', '.join('--' + name for name in missing))
        pipeline.evalFiles(args.denoised, args.clean, args.noisy,
                           meshFile=args.mesh, shape=args.shape,
                           noiseKind=args.noiseKind,
                           noiseScale=args.noiseScale, outfile=args.outfile)


def ablate(pipeline, args):
    pipeline.ablate(outfile=args.outfile, plotfile=args.plot,
                    show=args.show)


def theory(pipeline, args):
    passed, records = pipeline.theory(checkpoint=args.checkpoint,
                                      outfile=args.outfile,
                                      strict=args.strict)
    print('%s: %d checks.' % ('PASS' if passed else 'FAIL', len(records)))


def addPlotOptions(parser):
    parser.add_argument(
        '--plot', metavar='HTML',
        help='Write an interactive plot to this HTML file.')

    parser.add_argument(
        '--show', action='store_true', default=False,
        help='If specified, show the plot in a browser.')


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        description=('Train and evaluate unsupervised point cloud denoisers '
                     'with mirror-point consistency.'))

    addCommonOptions(parser)
    subparsers = parser.add_subparsers(dest='command')
    subparsers.required = True

    subparser = subparsers.add_parser(
        'generate', help='Write clean shapes and their noisy variants.')
    subparser.set_defaults(func=generate)

    subparser = subparsers.add_parser(
        'train', help='Train a denoiser on the generated dataset.')
    addPlotOptions(subparser)
    subparser.set_defaults(func=train)

    subparser = subparsers.add_parser(
        'denoise', help='Denoise a point cloud file.')
    subparser.add_argument(
        '--checkpoint', required=True, help='The model checkpoint file.')
    subparser.add_argument(
        '--input', required=True,
        help='The noisy point cloud (.xyz, .ply or .off).')
    subparser.add_argument(
        '--output', required=True,
        help='The file to write the denoised cloud to (.xyz or .ply).')
    subparser.add_argument(
        '--iterations', type=int,
        help=('The number of denoising passes, each starting from the '
              'output of the last. Defaults to [eval] iterations.'))
    subparser.add_argument(
        '--intermediates', action='store_true', default=False,
        help='Also write the output of every pass but the last.')
    addPlotOptions(subparser)
    subparser.set_defaults(func=denoise)

    subparser = subparsers.add_parser(
        'eval', help=('Measure Chamfer and point-to-mesh distances, either of '
                      'given files or of a checkpoint on the dataset.'))
    subparser.add_argument(
        '--checkpoint',
        help='Evaluate this checkpoint on every evaluation cloud.')
    subparser.add_argument('--denoised', help='The denoised cloud file.')
    subparser.add_argument('--clean', help='The clean cloud file.')
    subparser.add_argument(
        '--noisy', help='The noisy cloud file the denoised one came from.')
    subparser.add_argument('--mesh', help='The clean OFF mesh file.')
    subparser.add_argument('--shape', default='', help='The shape name.')
    subparser.add_argument('--noiseKind', default='',
                           help='The noise kind.')
    subparser.add_argument('--noiseScale', type=float, default=0.0,
                           help='The noise scale.')
    subparser.add_argument(
        '--outfile', help='The CSV file to write. Defaults to stdout.')
    subparser.set_defaults(func=evaluate)

    subparser = subparsers.add_parser(
        'ablate', help='Compare loss modes and mirror distances.')
    subparser.add_argument(
        '--outfile',
        help='The CSV table to write. Defaults to the report directory.')
    addPlotOptions(subparser)
    subparser.set_defaults(func=ablate)

    subparser = subparsers.add_parser(
        'theory', help='Run the Monte-Carlo consistency checks.')
    subparser.add_argument(
        '--checkpoint',
        help='Also check a trained model (mean distance and mirror bridge).')
    subparser.add_argument(
        '--outfile',
        help='The JSON report to write. Defaults to the report directory.')
    subparser.add_argument(
        '--strict', action='store_true', default=False,
        help='Exit with status 5 if any check fails.')
    subparser.set_defaults(func=theory)

    args = parser.parse_args()

    try:
        config = parseCommonOptions(args)
        args.func(Pipeline(config), args)
    except SIMPCError as e:
        print('simpc: error: %s' % e.oneLine(), file=sys.stderr)
        sys.exit(e.exitCode)
    except (IOError, OSError) as e:
        error = ParseError(str(e))
        print('simpc: error: %s' % error.oneLine(), file=sys.stderr)
        sys.exit(error.exitCode)
