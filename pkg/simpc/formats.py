"""
Reading and writing point clouds (XYZ, PLY) and triangle meshes (OFF).

All readers reject non-finite coordinates with a C{ParseError} whose message
starts with the file name and the 1-based line number (or, for binary PLY,
the vertex number) of the offending value.
"""

from __future__ import division

import numpy as np

from simpc.errors import ParameterError, ParseError
from simpc.geometry import PointCloud, TriangleMesh
from simpc.utils import atomicWrite

# PLY scalar property types and their little-endian numpy equivalents.
PLY_TYPES = {
    'char': 'i1', 'int8': 'i1',
    'uchar': 'u1', 'uint8': 'u1',
    'short': '<i2', 'int16': '<i2',
    'ushort': '<u2', 'uint16': '<u2',
    'int': '<i4', 'int32': '<i4',
    'uint': '<u4', 'uint32': '<u4',
    'float': '<f4', 'float32': '<f4',
    'double': '<f8', 'float64': '<f8',
}

PLY_FORMATS = ('ascii', 'binary_little_endian')


def _float(path, lineNumber, text):
    """
    Convert a token to a finite C{float}.

    @param path: The C{str} file name, for error messages.
    @param lineNumber: The C{int} 1-based line number, for error messages.
    @param text: The C{str} token.
    @raise ParseError: If C{text} is not a finite number.
    @return: A C{float}.
    """
    try:
        value = float(text)
    except ValueError:
        raise ParseError('%s:%d: could not parse %r as a number.' %
                         (path, lineNumber, text))
    if not np.isfinite(value):
        raise ParseError('%s:%d: non-finite coordinate %r.' %
                         (path, lineNumber, text))
    return value


def _int(path, lineNumber, text):
    try:
        return int(text)
    except ValueError:
        raise ParseError('%s:%d: could not parse %r as an integer.' %
                         (path, lineNumber, text))


def _formatPoint(point):
    return '%.17g %.17g %.17g\n' % tuple(point)


def readXYZ(path):
    """
    Read an ASCII XYZ file (one "x y z" triple per line). Blank lines and
    lines starting with '#' are ignored.

    @param path: The C{str} file name.
    @raise ParseError: If a line does not hold three finite numbers.
    @return: A C{PointCloud}.
    """
    points = []
    with open(path) as fp:
        for lineNumber, line in enumerate(fp, start=1):
            fields = line.split()
            if not fields or fields[0].startswith('#'):
                continue
            if len(fields) < 3:
                raise ParseError('%s:%d: expected 3 coordinates, found %d.' %
                                 (path, lineNumber, len(fields)))
            points.append([_float(path, lineNumber, field)
                           for field in fields[:3]])
    if not points:
        raise ParseError('%s: no points found.' % path)
    return PointCloud(points, cleanRef=path)


def writeXYZ(cloud, path):
    """
    Write a point cloud as ASCII XYZ.

    @param cloud: A C{PointCloud}.
    @param path: The C{str} file name.
    """
    with atomicWrite(path) as fp:
        for point in cloud.points:
            fp.write(_formatPoint(point))


def _readPLYHeader(fp, path):
    """
    Parse a PLY header.

    @param fp: An open binary file positioned at the start.
    @param path: The C{str} file name, for error messages.
    @raise ParseError: If the header is malformed or unsupported.
    @return: A 3-C{tuple} of the format C{str}, a C{list} of (element name,
        count, properties) where properties is a C{list} of (name, type)
        pairs (type is C{None} for list properties), and the number of
        header lines.
    """
    magic = fp.readline().decode('ascii', 'replace').strip()
    if magic != 'ply':
        raise ParseError('%s:1: missing "ply" magic line.' % path)

    format_ = None
    elements = []
    lineNumber = 1

    while True:
        raw = fp.readline()
        lineNumber += 1
        if not raw:
            raise ParseError('%s:%d: header has no end_header line.' %
                             (path, lineNumber))
        fields = raw.decode('ascii', 'replace').split()
        if not fields or fields[0] in ('comment', 'obj_info'):
            continue
        keyword = fields[0]
        if keyword == 'end_header':
            break
        elif keyword == 'format':
            if len(fields) < 2 or fields[1] not in PLY_FORMATS:
                raise ParseError('%s:%d: unsupported PLY format %r.' %
                                 (path, lineNumber, ' '.join(fields[1:])))
            format_ = fields[1]
        elif keyword == 'element':
            if len(fields) != 3:
                raise ParseError('%s:%d: malformed element line.' %
                                 (path, lineNumber))
            elements.append((fields[1], _int(path, lineNumber, fields[2]),
                             []))
        elif keyword == 'property':
            if not elements:
                raise ParseError('%s:%d: property before any element.' %
                                 (path, lineNumber))
            if len(fields) >= 2 and fields[1] == 'list':
                elements[-1][2].append((fields[-1], None))
            elif len(fields) == 3 and fields[1] in PLY_TYPES:
                elements[-1][2].append((fields[2], fields[1]))
            else:
                raise ParseError('%s:%d: unsupported property %r.' %
                                 (path, lineNumber, ' '.join(fields[1:])))
        else:
            raise ParseError('%s:%d: unknown header keyword %r.' %
                             (path, lineNumber, keyword))

    if format_ is None:
        raise ParseError('%s: PLY header has no format line.' % path)

    return format_, elements, lineNumber


def readPLY(path):
    """
    Read the vertex coordinates of a PLY file. ASCII and binary
    little-endian files are supported. The vertex element may carry any
    scalar properties, of which x, y and z are used.

    @param path: The C{str} file name.
    @raise ParseError: If the file is malformed, has no x, y and z vertex
        properties, or holds a non-finite coordinate.
    @return: A C{PointCloud}.
    """
    with open(path, 'rb') as fp:
        format_, elements, headerLines = _readPLYHeader(fp, path)

        names = [element[0] for element in elements]
        if 'vertex' not in names:
            raise ParseError('%s: PLY file has no vertex element.' % path)
        elementIndex = names.index('vertex')
        _, count, properties = elements[elementIndex]
        propertyNames = [name for name, _ in properties]

        for axis in 'xyz':
            if axis not in propertyNames:
                raise ParseError('%s: PLY vertex element has no %r property.'
                                 % (path, axis))
        if any(type_ is None for _, type_ in properties):
            raise ParseError('%s: list properties are not supported in the '
                             'vertex element.' % path)
        columns = [propertyNames.index(axis) for axis in 'xyz']

        if format_ == 'ascii':
            # Skip the lines of any elements that precede the vertices.
            lineNumber = headerLines
            for _, skipCount, _ in elements[:elementIndex]:
                for _ in range(skipCount):
                    fp.readline()
                    lineNumber += 1
            points = np.empty((count, 3))
            for i in range(count):
                raw = fp.readline()
                lineNumber += 1
                fields = raw.decode('ascii', 'replace').split()
                if len(fields) != len(properties):
                    raise ParseError(
                        '%s:%d: expected %d vertex values, found %d.' %
                        (path, lineNumber, len(properties), len(fields)))
                points[i] = [_float(path, lineNumber, fields[column])
                             for column in columns]
        else:
            if elementIndex != 0:
                raise ParseError('%s: binary PLY files must store the vertex '
                                 'element first.' % path)
            dtype = np.dtype([(name, PLY_TYPES[type_])
                              for name, type_ in properties])
            data = fp.read(dtype.itemsize * count)
            if len(data) < dtype.itemsize * count:
                raise ParseError('%s: binary PLY data ends after %d of %d '
                                 'vertices.' %
                                 (path, len(data) // dtype.itemsize, count))
            records = np.frombuffer(data, dtype=dtype, count=count)
            points = np.stack([records[axis].astype(float)
                               for axis in 'xyz'], axis=1)
            bad = np.nonzero(~np.all(np.isfinite(points), axis=1))[0]
            if len(bad):
                raise ParseError('%s:vertex %d: non-finite coordinate.' %
                                 (path, bad[0] + 1))

    if count == 0:
        raise ParseError('%s: no points found.' % path)

    return PointCloud(points, cleanRef=path)


def writePLY(cloud, path, binary=False):
    """
    Write a point cloud as a PLY file with x, y and z double properties.

    @param cloud: A C{PointCloud}.
    @param path: The C{str} file name.
    @param binary: If C{True} write binary little-endian data, else ASCII.
    """
    header = ('ply\nformat %s 1.0\nelement vertex %d\n'
              'property double x\nproperty double y\nproperty double z\n'
              'end_header\n' %
              ('binary_little_endian' if binary else 'ascii', len(cloud)))
    with atomicWrite(path, 'wb') as fp:
        fp.write(header.encode('ascii'))
        if binary:
            fp.write(np.ascontiguousarray(cloud.points,
                                          dtype='<f8').tobytes())
        else:
            fp.write(''.join(_formatPoint(point)
                             for point in cloud.points).encode('ascii'))


def _contentLines(fp):
    """
    Yield the non-blank, non-comment lines of a file with their numbers.

    @param fp: An open text file.
    @return: A generator of (C{int} line number, C{list} of fields).
    """
    for lineNumber, line in enumerate(fp, start=1):
        line = line.split('#', 1)[0]
        fields = line.split()
        if fields:
            yield lineNumber, fields


def readOFF(path, strict=False):
    """
    Read an OFF mesh. Polygonal faces are fan-triangulated.

    @param path: The C{str} file name.
    @param strict: If C{True}, a zero-area face is an error. Otherwise such
        faces are dropped and counted in the mesh's C{droppedFaces}.
    @raise ParseError: If the file is malformed, holds a non-finite
        coordinate, has no faces with area or (when C{strict}) has a
        zero-area face.
    @return: A C{TriangleMesh}.
    """
    with open(path) as fp:
        lines = _contentLines(fp)

        try:
            lineNumber, fields = next(lines)
        except StopIteration:
            raise ParseError('%s: empty file.' % path)

        # The counts may follow the "OFF" keyword on the same line.
        if fields[0] != 'OFF':
            raise ParseError('%s:%d: missing "OFF" header.' %
                             (path, lineNumber))
        fields = fields[1:]
        if not fields:
            try:
                lineNumber, fields = next(lines)
            except StopIteration:
                raise ParseError('%s: no counts line.' % path)
        if len(fields) < 2:
            raise ParseError('%s:%d: malformed counts line.' %
                             (path, lineNumber))
        nVertices = _int(path, lineNumber, fields[0])
        nFaces = _int(path, lineNumber, fields[1])

        vertices = np.empty((nVertices, 3))
        faces = []

        for i in range(nVertices):
            try:
                lineNumber, fields = next(lines)
            except StopIteration:
                raise ParseError('%s: file ends after %d of %d vertices.' %
                                 (path, i, nVertices))
            if len(fields) < 3:
                raise ParseError('%s:%d: expected 3 coordinates, found %d.' %
                                 (path, lineNumber, len(fields)))
            vertices[i] = [_float(path, lineNumber, field)
                           for field in fields[:3]]

        for i in range(nFaces):
            try:
                lineNumber, fields = next(lines)
            except StopIteration:
                raise ParseError('%s: file ends after %d of %d faces.' %
                                 (path, i, nFaces))
            size = _int(path, lineNumber, fields[0])
            if size < 3 or len(fields) < size + 1:
                raise ParseError('%s:%d: malformed face.' % (path, lineNumber))
            corners = [_int(path, lineNumber, field)
                       for field in fields[1:size + 1]]
            if min(corners) < 0 or max(corners) >= nVertices:
                raise ParseError('%s:%d: face refers to a vertex outside '
                                 '[0, %d).' % (path, lineNumber, nVertices))
            for j in range(1, size - 1):
                faces.append((corners[0], corners[j], corners[j + 1]))

    try:
        return TriangleMesh(vertices, faces, dropDegenerate=not strict)
    except ParameterError as e:
        raise ParseError('%s: %s' % (path, e))


def writeOFF(mesh, path):
    """
    Write a triangle mesh as OFF.

    @param mesh: A C{TriangleMesh}.
    @param path: The C{str} file name.
    """
    with atomicWrite(path) as fp:
        fp.write('OFF\n%d %d 0\n' % (len(mesh.vertices), len(mesh.faces)))
        for vertex in mesh.vertices:
            fp.write(_formatPoint(vertex))
        for a, b, c in mesh.faces:
            fp.write('3 %d %d %d\n' % (a, b, c))


def readCloud(path):
    """
    Read a point cloud, choosing the reader by file suffix.

    @param path: The C{str} file name, ending in .xyz, .ply or .off (in
        which case the mesh vertices are returned).
    @raise ParseError: If the suffix is not recognized.
    @return: A C{PointCloud}.
    """
    lower = path.lower()
    if lower.endswith('.xyz') or lower.endswith('.txt'):
        return readXYZ(path)
    elif lower.endswith('.ply'):
        return readPLY(path)
    elif lower.endswith('.off'):
        return PointCloud(readOFF(path).vertices, cleanRef=path)
    else:
        raise ParseError('%s: unknown point cloud file suffix.' % path)


def writeCloud(cloud, path):
    """
    Write a point cloud, choosing the format by file suffix.

    @param cloud: A C{PointCloud}.
    @param path: The C{str} file name, ending in .xyz or .ply.
    @raise ParseError: If the suffix is not recognized.
    """
    lower = path.lower()
    if lower.endswith('.xyz') or lower.endswith('.txt'):
        writeXYZ(cloud, path)
    elif lower.endswith('.ply'):
        writePLY(cloud, path)
    else:
        raise ParseError('%s: unknown point cloud file suffix.' % path)
