import os
import shutil
import struct
import tempfile
from unittest import TestCase

import numpy as np
from six import assertRaisesRegex

from simpc.errors import ParseError
from simpc.formats import (
    readCloud, readOFF, readPLY, readXYZ, writeCloud, writeOFF, writePLY,
    writeXYZ)
from simpc.geometry import PointCloud, TriangleMesh
from simpc.utils import rng

PLY_HEADER = ('ply\nformat ascii 1.0\nelement vertex %d\n'
              'property float x\nproperty float y\nproperty float z\n'
              'end_header\n')


class FileTestCase(TestCase):
    """
    Provide a temporary directory.
    """
    def setUp(self):
        self.tempDir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tempDir)

    def path(self, name):
        return os.path.join(self.tempDir, name)

    def write(self, name, data):
        path = self.path(name)
        with open(path, 'wb' if isinstance(data, bytes) else 'w') as fp:
            fp.write(data)
        return path


class TestXYZ(FileTestCase):
    """
    Test reading and writing XYZ files.
    """
    def testRead(self):
        """
        Points must be read, ignoring blank and comment lines.
        """
        path = self.write('a.xyz', '# comment\n1 2 3\n\n4 5 6\n')
        cloud = readXYZ(path)
        self.assertEqual([[1, 2, 3], [4, 5, 6]], cloud.points.tolist())
        self.assertEqual(path, cloud.cleanRef)

    def testExactRoundTrip(self):
        """
        Writing then reading must give bitwise-identical coordinates.
        """
        cloud = PointCloud(rng(0).standard_normal((20, 3)))
        path = self.path('a.xyz')
        writeXYZ(cloud, path)
        self.assertTrue(np.array_equal(cloud.points, readXYZ(path).points))

    def testNaN(self):
        """
        A NaN coordinate must result in a ParseError naming the line.
        """
        path = self.write('a.xyz', '1 2 3\n4 nan 6\n')
        error = "a.xyz:2: non-finite coordinate 'nan'.$"
        assertRaisesRegex(self, ParseError, error, readXYZ, path)

    def testTooFewFields(self):
        """
        A line with fewer than three numbers must result in a ParseError.
        """
        path = self.write('a.xyz', '1 2 3\n\n4 5\n')
        error = r'a.xyz:3: expected 3 coordinates, found 2\.$'
        assertRaisesRegex(self, ParseError, error, readXYZ, path)

    def testBadNumber(self):
        """
        A token that is not a number must result in a ParseError.
        """
        path = self.write('a.xyz', '1 2 x\n')
        error = "a.xyz:1: could not parse 'x' as a number.$"
        assertRaisesRegex(self, ParseError, error, readXYZ, path)

    def testEmpty(self):
        """
        A file with no points must result in a ParseError.
        """
        path = self.write('a.xyz', '# nothing\n')
        assertRaisesRegex(self, ParseError, 'no points found', readXYZ, path)


class TestPLY(FileTestCase):
    """
    Test reading and writing PLY files.
    """
    def testReadASCII(self):
        """
        An ASCII PLY file must be read.
        """
        path = self.write('a.ply', PLY_HEADER % 2 + '1 2 3\n4 5 6\n')
        self.assertEqual([[1, 2, 3], [4, 5, 6]], readPLY(path).points.tolist())

    def testExtraPropertiesAndComments(self):
        """
        Vertex properties other than x, y and z, and header comments, must
        be ignored.
        """
        path = self.write(
            'a.ply',
            'ply\nformat ascii 1.0\ncomment made by hand\n'
            'element vertex 1\nproperty float nx\nproperty float z\n'
            'property float y\nproperty float x\nend_header\n7 3 2 1\n')
        self.assertEqual([[1, 2, 3]], readPLY(path).points.tolist())

    def testSkipsEarlierElements(self):
        """
        Elements before the vertices must be skipped in ASCII files.
        """
        path = self.write(
            'a.ply',
            'ply\nformat ascii 1.0\nelement camera 2\nproperty float f\n'
            'element vertex 1\nproperty float x\nproperty float y\n'
            'property float z\nend_header\n9\n9\n1 2 3\n')
        self.assertEqual([[1, 2, 3]], readPLY(path).points.tolist())

    def testNaNLineNumber(self):
        """
        A NaN coordinate in an ASCII file must result in a ParseError naming
        its line.
        """
        path = self.write('a.ply', PLY_HEADER % 2 + '1 2 3\n4 5 nan\n')
        error = "a.ply:9: non-finite coordinate 'nan'.$"
        assertRaisesRegex(self, ParseError, error, readPLY, path)

    def testWrongValueCount(self):
        """
        A vertex line with the wrong number of values must result in a
        ParseError.
        """
        path = self.write('a.ply', PLY_HEADER % 1 + '1 2\n')
        error = r'a.ply:8: expected 3 vertex values, found 2\.$'
        assertRaisesRegex(self, ParseError, error, readPLY, path)

    def testMissingMagic(self):
        """
        A file without the ply magic line must result in a ParseError.
        """
        path = self.write('a.ply', 'hello\n')
        error = 'a.ply:1: missing "ply" magic line.$'
        assertRaisesRegex(self, ParseError, error, readPLY, path)

    def testBigEndian(self):
        """
        Big-endian binary files must result in a ParseError.
        """
        path = self.write('a.ply', 'ply\nformat binary_big_endian 1.0\n'
                                   'end_header\n')
        error = "a.ply:2: unsupported PLY format 'binary_big_endian 1.0'.$"
        assertRaisesRegex(self, ParseError, error, readPLY, path)

    def testMissingAxis(self):
        """
        A vertex element without a z property must result in a ParseError.
        """
        path = self.write('a.ply', 'ply\nformat ascii 1.0\nelement vertex 1\n'
                                   'property float x\nproperty float y\n'
                                   'end_header\n1 2\n')
        error = "a.ply: PLY vertex element has no 'z' property.$"
        assertRaisesRegex(self, ParseError, error, readPLY, path)

    def testReadBinary(self):
        """
        A binary little-endian file with float properties must be read.
        """
        header = ('ply\nformat binary_little_endian 1.0\nelement vertex 2\n'
                  'property float x\nproperty float y\nproperty float z\n'
                  'property uchar red\nend_header\n').encode('ascii')
        data = (struct.pack('<fffB', 1.0, 2.0, 3.0, 255) +
                struct.pack('<fffB', 4.0, 5.0, 6.0, 0))
        path = self.write('a.ply', header + data)
        self.assertEqual([[1, 2, 3], [4, 5, 6]], readPLY(path).points.tolist())

    def testBinaryTruncated(self):
        """
        A binary file with too little data must result in a ParseError.
        """
        header = ('ply\nformat binary_little_endian 1.0\nelement vertex 2\n'
                  'property double x\nproperty double y\n'
                  'property double z\nend_header\n').encode('ascii')
        path = self.write('a.ply', header + struct.pack('<ddd', 1, 2, 3))
        error = r'a.ply: binary PLY data ends after 1 of 2 vertices\.$'
        assertRaisesRegex(self, ParseError, error, readPLY, path)

    def testBinaryNaN(self):
        """
        A NaN in a binary file must result in a ParseError naming the vertex.
        """
        header = ('ply\nformat binary_little_endian 1.0\nelement vertex 2\n'
                  'property double x\nproperty double y\n'
                  'property double z\nend_header\n').encode('ascii')
        data = (struct.pack('<ddd', 1, 2, 3) +
                struct.pack('<ddd', 1, float('nan'), 3))
        path = self.write('a.ply', header + data)
        error = r'a.ply:vertex 2: non-finite coordinate\.$'
        assertRaisesRegex(self, ParseError, error, readPLY, path)

    def testExactRoundTrip(self):
        """
        Writing then reading (ASCII or binary) must give bitwise-identical
        coordinates.
        """
        cloud = PointCloud(rng(1).standard_normal((30, 3)))
        for binary in (False, True):
            path = self.path('b.ply')
            writePLY(cloud, path, binary=binary)
            self.assertTrue(np.array_equal(cloud.points,
                                           readPLY(path).points))

    def testWriteDeterministic(self):
        """
        Writing the same cloud twice must give byte-identical files.
        """
        cloud = PointCloud(rng(2).standard_normal((30, 3)))
        writePLY(cloud, self.path('a.ply'))
        writePLY(cloud, self.path('b.ply'))
        with open(self.path('a.ply'), 'rb') as fp:
            a = fp.read()
        with open(self.path('b.ply'), 'rb') as fp:
            b = fp.read()
        self.assertEqual(a, b)


class TestOFF(FileTestCase):
    """
    Test reading and writing OFF files.
    """
    def testRead(self):
        """
        An OFF file must be read, with quads split into two triangles.
        """
        path = self.write(
            'a.off',
            'OFF\n# a unit square\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n'
            '4 0 1 2 3\n')
        mesh = readOFF(path)
        self.assertEqual([[0, 1, 2], [0, 2, 3]], mesh.faces.tolist())
        self.assertEqual(1.0, mesh.faceAreas().sum())

    def testCountsOnHeaderLine(self):
        """
        Counts on the OFF line must be accepted.
        """
        path = self.write('a.off',
                          'OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n')
        self.assertEqual([[0, 1, 2]], readOFF(path).faces.tolist())

    def testMissingHeader(self):
        """
        A file not starting with OFF must result in a ParseError.
        """
        path = self.write('a.off', '3 1 0\n')
        error = 'a.off:1: missing "OFF" header.$'
        assertRaisesRegex(self, ParseError, error, readOFF, path)

    def testBadVertexIndex(self):
        """
        A face with an out of range vertex must result in a ParseError.
        """
        path = self.write('a.off',
                          'OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 5\n')
        error = r'a.off:6: face refers to a vertex outside \[0, 3\)\.$'
        assertRaisesRegex(self, ParseError, error, readOFF, path)

    def testInfinity(self):
        """
        An infinite coordinate must result in a ParseError naming its line.
        """
        path = self.write('a.off',
                          'OFF\n3 1 0\n0 0 0\n1 inf 0\n0 1 0\n3 0 1 2\n')
        error = "a.off:4: non-finite coordinate 'inf'.$"
        assertRaisesRegex(self, ParseError, error, readOFF, path)

    def testTruncated(self):
        """
        A file with too few faces must result in a ParseError.
        """
        path = self.write('a.off', 'OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n'
                                   '3 0 1 2\n')
        error = r'a.off: file ends after 1 of 2 faces\.$'
        assertRaisesRegex(self, ParseError, error, readOFF, path)

    def testDegenerateCounted(self):
        """
        A zero-area face must be dropped and counted.
        """
        path = self.write('a.off', 'OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n2 0 0\n'
                                   '3 0 1 2\n3 0 1 3\n')
        mesh = readOFF(path)
        self.assertEqual([[0, 1, 2]], mesh.faces.tolist())
        self.assertEqual(1, mesh.droppedFaces)

    def testNothingDropped(self):
        """
        A mesh with no zero-area faces must have a zero dropped count.
        """
        path = self.write('a.off',
                          'OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n')
        self.assertEqual(0, readOFF(path).droppedFaces)

    def testDegenerateStrict(self):
        """
        A zero-area face in strict mode must result in a ParseError naming
        the file.
        """
        path = self.write('a.off', 'OFF\n4 2 0\n0 0 0\n1 0 0\n0 1 0\n2 0 0\n'
                                   '3 0 1 2\n3 0 1 3\n')
        error = r'a.off: Mesh has 1 degenerate \(zero-area\) face\.$'
        assertRaisesRegex(self, ParseError, error, readOFF, path,
                          strict=True)

    def testOnlyDegenerate(self):
        """
        A file whose faces all have zero area must result in a ParseError.
        """
        path = self.write('a.off', 'OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n'
                                   '3 0 1 2\n')
        error = r'a.off: Mesh has no non-degenerate faces\.$'
        assertRaisesRegex(self, ParseError, error, readOFF, path)

    def testRoundTrip(self):
        """
        Writing then reading a mesh must give the same vertices and faces.
        """
        mesh = TriangleMesh(rng(3).standard_normal((4, 3)),
                            [[0, 1, 2], [0, 2, 3], [1, 3, 2]])
        path = self.path('a.off')
        writeOFF(mesh, path)
        read = readOFF(path)
        self.assertTrue(np.array_equal(mesh.vertices, read.vertices))
        self.assertEqual(mesh.faces.tolist(), read.faces.tolist())


class TestDispatch(FileTestCase):
    """
    Test readCloud and writeCloud.
    """
    def testBySuffix(self):
        """
        readCloud and writeCloud must choose the format by suffix.
        """
        cloud = PointCloud(rng(4).standard_normal((5, 3)))
        for name in ('a.xyz', 'a.PLY', 'a.txt'):
            path = self.path(name)
            writeCloud(cloud, path)
            self.assertTrue(np.array_equal(cloud.points,
                                           readCloud(path).points))

    def testOFFVertices(self):
        """
        readCloud must return the vertices of an OFF file.
        """
        path = self.write('a.off', 'OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n'
                                   '3 0 1 2\n')
        self.assertEqual([[0, 0, 0], [1, 0, 0], [0, 1, 0]],
                         readCloud(path).points.tolist())

    def testUnknownSuffix(self):
        """
        An unknown suffix must result in a ParseError.
        """
        error = 'unknown point cloud file suffix'
        assertRaisesRegex(self, ParseError, error, readCloud,
                          self.path('a.obj'))
        assertRaisesRegex(self, ParseError, error, writeCloud,
                          PointCloud([[0, 0, 0]]), self.path('a.obj'))
