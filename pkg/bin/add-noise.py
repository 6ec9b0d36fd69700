#!/usr/bin/env python

from __future__ import print_function

import sys

from simpc.errors import SIMPCError
from simpc.formats import readCloud, writeCloud
from simpc.geometry import (
    NOISE_KINDS, NoiseModel, addNoise, normalizeUnitSphere)


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        description='Add noise to a point cloud.')

    parser.add_argument(
        '--input', required=True,
        help='The clean point cloud (.xyz, .ply or .off).')

    parser.add_argument(
        '--out', required=True,
        help='The file to write the noisy cloud to (.xyz or .ply).')

    parser.add_argument(
        '--kind', choices=NOISE_KINDS, default='gaussian',
        help='The kind of noise.')

    parser.add_argument(
        '--scale', type=float, default=0.01,
        help='The noise scale, as a fraction of the bounding sphere radius.')

    parser.add_argument(
        '--seed', type=int, default=0,
        help='The noise seed.')

    parser.add_argument(
        '--normalize', action='store_true', default=False,
        help=('Normalize the input to the unit bounding sphere first (the '
              'input must otherwise already be normalized).'))

    parser.add_argument(
        '--verbose', action='store_true', default=False,
        help='Print (to stderr) what was written.')

    args = parser.parse_args()

    try:
        cloud = readCloud(args.input)
        if args.normalize:
            cloud, _, _ = normalizeUnitSphere(cloud)
        noisy = addNoise(cloud, NoiseModel(args.kind, args.scale, args.seed))
        writeCloud(noisy, args.out)
    except SIMPCError as e:
        print('add-noise.py: error: %s' % e.oneLine(), file=sys.stderr)
        sys.exit(e.exitCode)

    if args.verbose:
        print('Wrote %r to %s.' % (noisy, args.out), file=sys.stderr)
