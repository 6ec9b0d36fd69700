#!/usr/bin/env python

from __future__ import print_function

import sys

from simpc.errors import SIMPCError
from simpc.formats import writeCloud, writeOFF
from simpc.geometry import SHAPE_KINDS, makeShape


if __name__ == '__main__':
    import argparse

    parser = argparse.ArgumentParser(
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        description=('Sample a clean point cloud from a synthetic shape, '
                     'normalized to the unit bounding sphere.'))

    parser.add_argument(
        '--kind', choices=SHAPE_KINDS, default='sphere',
        help='The shape to sample.')

    parser.add_argument(
        '--count', type=int, default=2048,
        help='The number of points to sample.')

    parser.add_argument(
        '--seed', type=int, default=0,
        help='The sampling seed.')

    parser.add_argument(
        '--out', required=True,
        help='The file to write the cloud to (.xyz or .ply).')

    parser.add_argument(
        '--mesh',
        help=('If given, also write the normalized shape mesh to this OFF '
              'file.'))

    parser.add_argument(
        '--verbose', action='store_true', default=False,
        help='Print (to stderr) what was written.')

    args = parser.parse_args()

    try:
        cloud, mesh = makeShape(args.kind, args.count, args.seed)
        writeCloud(cloud, args.out)
        if args.mesh:
            writeOFF(mesh, args.mesh)
    except SIMPCError as e:
        print('make-shape.py: error: %s' % e.oneLine(), file=sys.stderr)
        sys.exit(e.exitCode)

    if args.verbose:
        print('Wrote %r to %s.' % (cloud, args.out), file=sys.stderr)
