from __future__ import division

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from simpc.errors import CapacityError, ParameterError
from simpc.geometry import asPoints, knn
from simpc.tensor import add, gatherRows, mse, reshape, scale
from simpc.utils import blockSize, mapBlocks

DEFAULT_EMD_CAP = 2048

# Reports multiply raw distances by this to match published tables.
REPORT_MULTIPLIER = 1e5


def _checkNonEmpty(*clouds):
    for points in clouds:
        if len(points) == 0:
            raise ParameterError('Distances need non-empty point clouds.')


def nearestSquared(x, y):
    """
    For each point of C{x}, find its nearest point in C{y}.

    @param x: An N x 3 array.
    @param y: An M x 3 array.
    @return: A 2-C{tuple} of the length N C{int} nearest-index array and the
        length N C{float} array of squared distances.
    """
    nearest = knn(x, y, 1).indices[:, 0]
    diff = x - y[nearest]
    return nearest, (diff * diff).sum(axis=1)


def chamfer(x, y):
    """
    The Chamfer distance: half the sum of the mean squared nearest-neighbor
    distances from C{x} to C{y} and from C{y} to C{x}.

    @param x: A C{PointCloud} or N x 3 array.
    @param y: A C{PointCloud} or M x 3 array.
    @raise ParameterError: If either cloud is empty.
    @return: The C{float} distance.
    """
    x, y = asPoints(x), asPoints(y)
    _checkNonEmpty(x, y)
    return 0.5 * (nearestSquared(x, y)[1].mean() +
                  nearestSquared(y, x)[1].mean())


class Assignment(object):
    """
    An optimal bijection between two equal-sized point clouds.

    @param mapping: A length N C{int} array. Point i of the first cloud is
        matched with point C{mapping[i]} of the second.
    @param cost: The C{float} mean squared matched distance.
    """
    def __init__(self, mapping, cost):
        self.mapping = mapping
        self.cost = cost

    def __repr__(self):
        return '<Assignment of %d points, cost %r>' % (len(self.mapping),
                                                       self.cost)


def emd(x, y, cap=DEFAULT_EMD_CAP):
    """
    The exact Earth Mover's distance between two equal-sized clouds, with
    uniform weights and squared Euclidean ground cost.

    @param x: A C{PointCloud} or N x 3 array.
    @param y: A C{PointCloud} or N x 3 array.
    @param cap: The C{int} largest N allowed (the solver is cubic in N).
    @raise ParameterError: If the sizes differ or a cloud is empty.
    @raise CapacityError: If N exceeds C{cap}.
    @return: An C{Assignment}.
    """
    x, y = asPoints(x), asPoints(y)
    _checkNonEmpty(x, y)
    if len(x) != len(y):
        raise ParameterError('EMD needs clouds of equal size (got %d and %d).'
                             % (len(x), len(y)))
    if len(x) > cap:
        raise CapacityError('EMD on %d points exceeds the cap of %d.' %
                            (len(x), cap))
    diff = x[:, None, :] - y[None, :, :]
    costs = (diff * diff).sum(axis=2)
    rows, cols = linear_sum_assignment(costs)
    mapping = np.empty(len(x), dtype=np.int64)
    mapping[rows] = cols
    return Assignment(mapping, float(costs[rows, cols].mean()))


def closestPointsOnTriangles(points, triangles):
    """
    Find the closest point on each triangle to each query point.

    The region tests (vertex, edge, face) are those of Ericson's
    ClosestPtPointTriangle, evaluated for all point/triangle pairs at once.

    @param points: A P x 3 C{float} array.
    @param triangles: An F x 3 x 3 C{float} array of triangle corners.
    @return: A P x F x 3 C{float} array.
    """
    p = points[:, None, :]
    a = triangles[None, :, 0]
    b = triangles[None, :, 1]
    c = triangles[None, :, 2]
    ab = b - a
    ac = c - a

    def dot(u, v):
        return (u * v).sum(axis=-1)

    ap = p - a
    d1, d2 = dot(ab, ap), dot(ac, ap)
    bp = p - b
    d3, d4 = dot(ab, bp), dot(ac, bp)
    cp = p - c
    d5, d6 = dot(ab, cp), dot(ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide='ignore', invalid='ignore'):
        denom = va + vb + vc
        result = (a + ab * (vb / denom)[..., None] +
                  ac * (vc / denom)[..., None])

        # Regions are applied in reverse priority so earlier tests win.
        e43, e56 = d4 - d3, d5 - d6
        region = (va <= 0.0) & (e43 >= 0.0) & (e56 >= 0.0)
        t = e43 / (e43 + e56)
        result = np.where(region[..., None], b + t[..., None] * (c - b),
                          result)

        region = (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0)
        t = d2 / (d2 - d6)
        result = np.where(region[..., None], a + t[..., None] * ac, result)

        region = (d6 >= 0.0) & (d5 <= d6)
        result = np.where(region[..., None], c, result)

        region = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
        t = d1 / (d1 - d3)
        result = np.where(region[..., None], a + t[..., None] * ab, result)

    region = (d3 >= 0.0) & (d4 <= d3)
    result = np.where(region[..., None], b, result)

    region = (d1 <= 0.0) & (d2 <= 0.0)
    result = np.where(region[..., None], a, result)

    return result


def squaredDistancesToMesh(points, mesh):
    """
    Get the squared distance from each point to its nearest mesh triangle.

    @param points: An N x 3 C{float} array.
    @param mesh: A C{TriangleMesh}.
    @return: A length N C{float} array.
    """
    triangles = mesh.triangles()
    result = np.empty(len(points))
    step = blockSize(len(triangles) * 3 * 16)

    def block(start):
        end = min(start + step, len(points))
        closest = closestPointsOnTriangles(points[start:end], triangles)
        diff = points[start:end, None, :] - closest
        result[start:end] = (diff * diff).sum(axis=2).min(axis=1)

    mapBlocks(block, range(0, len(points), step))
    return result


def _checkMesh(mesh):
    if len(mesh.faces) == 0 or np.any(mesh.faceAreas() <= 0.0):
        raise ParameterError('Point-to-mesh distances need a mesh with only '
                             'non-degenerate faces.')


def pointToMesh(cloud, mesh):
    """
    The one-sided point-to-mesh distance: the mean over points of the
    squared distance to the nearest triangle.

    @param cloud: A C{PointCloud} or N x 3 array.
    @param mesh: A C{TriangleMesh}.
    @raise ParameterError: If the cloud is empty or the mesh has a
        degenerate face.
    @return: The C{float} distance.
    """
    points = asPoints(cloud)
    _checkNonEmpty(points)
    _checkMesh(mesh)
    return float(squaredDistancesToMesh(points, mesh).mean())


def pointToMeshTwoSided(cloud, mesh, samples=10000, seed=0):
    """
    A two-sided point/mesh distance: the average of the one-sided
    point-to-mesh distance and the mean squared distance from points sampled
    uniformly on the mesh surface to their nearest cloud point.

    @param cloud: A C{PointCloud} or N x 3 array.
    @param mesh: A C{TriangleMesh}.
    @param samples: The C{int} number of surface samples.
    @param seed: The C{int} seed for the surface samples.
    @raise ParameterError: If the cloud is empty or the mesh has a
        degenerate face.
    @return: The C{float} distance.
    """
    points = asPoints(cloud)
    forward = pointToMesh(points, mesh)
    surface = mesh.samplePoints(samples, seed)
    distances, _ = cKDTree(points).query(surface)
    return 0.5 * (forward + float((distances * distances).mean()))


def differentiableChamfer(x, y):
    """
    The Chamfer distance between two coordinate tensors, built from tensor
    operations so gradients flow to the coordinates. Nearest-neighbor indices
    are found once per call and carry no gradient.

    @param x: A C{Tensor} of shape N x 3.
    @param y: A C{Tensor} of shape M x 3.
    @raise ParameterError: If an input is not an (non-empty) N x 3 tensor.
    @return: A scalar C{Tensor} equal to C{chamfer(x.values, y.values)}.
    """
    for t in (x, y):
        if t.values.ndim != 2 or t.shape[1] != 3 or t.shape[0] == 0:
            raise ParameterError('differentiableChamfer needs non-empty N x 3 '
                                 'tensors (got shape %s).' % (t.shape,))
    xNear = knn(x.values, y.values, 1).indices
    yNear = knn(y.values, x.values, 1).indices
    matchedY = reshape(gatherRows(y, xNear), x.shape)
    matchedX = reshape(gatherRows(x, yNear), y.shape)
    # The mean squared difference over coordinates is a third of the mean
    # squared distance over points.
    return scale(add(mse(x, matchedY), mse(y, matchedX)), 1.5)


class MetricReport(object):
    """
    Distances of one (denoised or noisy) cloud from its clean reference.

    @param shape: The C{str} shape name.
    @param noiseKind: The C{str} noise kind.
    @param noiseScale: The C{float} noise scale.
    @param cd: The C{float} Chamfer distance.
    @param p2m: The C{float} point-to-mesh distance, or C{None}.
    @param source: A C{str} saying what was measured, e.g. 'noisy' or
        'denoised'.
    @param scaleNote: The C{float} multiplier used in the *_e5 columns.
    """
    CSV_HEADER = ('shape', 'noise_kind', 'noise_scale', 'cd_raw', 'cd_e5',
                  'p2m_raw', 'p2m_e5', 'source')

    def __init__(self, shape, noiseKind, noiseScale, cd, p2m=None,
                 source='denoised', scaleNote=REPORT_MULTIPLIER):
        assert cd >= 0.0, 'Negative Chamfer distance %r.' % cd
        assert p2m is None or p2m >= 0.0, (
            'Negative point-to-mesh distance %r.' % p2m)
        self.shape = shape
        self.noiseKind = noiseKind
        self.noiseScale = noiseScale
        self.cd = cd
        self.p2m = p2m
        self.source = source
        self.scaleNote = scaleNote

    def __repr__(self):
        return '<MetricReport %s %s %r %s cd=%r p2m=%r>' % (
            self.shape, self.noiseKind, self.noiseScale, self.source,
            self.cd, self.p2m)

    def csvRow(self):
        """
        Get the report as a CSV row.

        @return: A C{list} of C{str}, matching C{CSV_HEADER}.
        """
        def number(value):
            return '' if value is None else repr(float(value))

        return [
            self.shape, self.noiseKind, number(self.noiseScale),
            number(self.cd), number(self.cd * self.scaleNote),
            number(self.p2m),
            number(None if self.p2m is None else self.p2m * self.scaleNote),
            self.source,
        ]


def evaluate(cloud, clean, mesh=None, shape='', noiseKind='',
             noiseScale=0.0, source='denoised', twoSided=False):
    """
    Measure a cloud against its clean reference.

    @param cloud: The C{PointCloud} to measure.
    @param clean: The clean C{PointCloud}.
    @param mesh: The C{TriangleMesh} of the clean surface, or C{None}.
    @param shape: The C{str} shape name.
    @param noiseKind: The C{str} noise kind.
    @param noiseScale: The C{float} noise scale.
    @param source: The C{str} source label.
    @param twoSided: If C{True}, use the two-sided point-to-mesh distance.
    @return: A C{MetricReport}.
    """
    return MetricReport(
        shape, noiseKind, noiseScale, chamfer(cloud, clean),
        None if mesh is None else
        (pointToMeshTwoSided if twoSided else pointToMesh)(cloud, mesh),
        source=source)
