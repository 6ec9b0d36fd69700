from __future__ import division

from math import pi, sqrt

import numpy as np

from simpc.errors import ParameterError
from simpc.utils import blockSize, mapBlocks, rng, s

# Containment slack used by the minimal enclosing sphere.
_SPHERE_EPS = 1e-12


class NoiseModel(object):
    """
    Describe how noise is added to a normalized point cloud.

    @param kind: The C{str} noise kind, one of C{NoiseModel.KINDS}.
    @param scale: The C{float} noise scale, as a fraction of the bounding
        sphere radius.
    @param seed: The C{int} 64-bit seed for the noise.
    @raise ParameterError: If C{kind} is unknown or C{scale} is negative.
    """
    KINDS = ('gaussian', 'laplacian', 'uniform', 'discrete', 'anisotropic')

    def __init__(self, kind, scale, seed=0):
        if kind not in self.KINDS:
            raise ParameterError('Unknown noise kind %r. Known kinds are: %s.'
                                 % (kind, ', '.join(self.KINDS)))
        scale = float(scale)
        if not (scale >= 0.0 and np.isfinite(scale)):
            raise ParameterError('Noise scale must be a non-negative finite '
                                 'number (got %r).' % scale)
        self.kind = kind
        self.scale = scale
        self.seed = int(seed)

    def __eq__(self, other):
        return (self.kind, self.scale, self.seed) == (
            other.kind, other.scale, other.seed)

    def __repr__(self):
        return '<%s %s scale=%r seed=%d>' % (
            self.__class__.__name__, self.kind, self.scale, self.seed)

    def label(self):
        """
        A short label for file names and reports.

        @return: A C{str} such as 'gaussian-0.02'.
        """
        return '%s-%r' % (self.kind, self.scale)

    def toDict(self):
        return {'kind': self.kind, 'scale': self.scale, 'seed': self.seed}

    @classmethod
    def fromDict(cls, d):
        return cls(d['kind'], d['scale'], d.get('seed', 0))


NOISE_KINDS = NoiseModel.KINDS


class PointCloud(object):
    """
    Hold an ordered set of 3D points and where they came from.

    @param points: Something convertible to an N x 3 C{float} array.
    @param cleanRef: An optional C{str} identifier of the generating shape.
    @param noise: An optional C{NoiseModel} describing how the points were
        corrupted.
    @raise ParameterError: If there are no points, the array is not N x 3,
        or a coordinate is not finite.
    """
    def __init__(self, points, cleanRef=None, noise=None):
        points = np.array(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ParameterError('Point clouds must be N x 3 (got shape %s).'
                                 % (points.shape,))
        if len(points) == 0:
            raise ParameterError('Point clouds must have at least one point.')
        if not np.all(np.isfinite(points)):
            raise ParameterError('Point cloud coordinates must be finite.')
        self.points = points
        self.cleanRef = cleanRef
        self.noise = noise

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return '<%s %d point%s%s%s>' % (
            self.__class__.__name__, len(self), s(len(self)),
            (' of %s' % self.cleanRef) if self.cleanRef else '',
            (' noise %s' % self.noise.label()) if self.noise else '')

    def withPoints(self, points):
        """
        Make a new cloud with different points but the same provenance.

        @param points: An N x 3 array.
        @return: A new C{PointCloud}.
        """
        return PointCloud(points, cleanRef=self.cleanRef, noise=self.noise)


def asPoints(cloud):
    """
    Get the N x D coordinate array of a cloud or array.

    @param cloud: A C{PointCloud} or something convertible to a 2D array.
    @return: A 2D C{float} array.
    """
    if isinstance(cloud, PointCloud):
        return cloud.points
    points = np.asarray(cloud, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    return points


class TriangleMesh(object):
    """
    Hold a triangle mesh.

    @param vertices: Something convertible to a V x 3 C{float} array.
    @param faces: Something convertible to an F x 3 C{int} array of vertex
        indices.
    @param dropDegenerate: If C{True}, zero-area faces are removed and their
        number kept in C{droppedFaces}. Otherwise their presence is an error.
    @raise ParameterError: If a face refers to a non-existent vertex, if a
        degenerate face is found (and C{dropDegenerate} is C{False}) or if no
        faces remain.
    """
    def __init__(self, vertices, faces, dropDegenerate=True):
        vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise ParameterError('Mesh vertices must be finite.')
        if len(faces) and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ParameterError(
                'Mesh face vertex indices must be in [0, %d).' %
                len(vertices))
        self.vertices = vertices
        self.faces = faces
        self.droppedFaces = 0

        degenerate = self.faceAreas() <= 0.0
        if degenerate.any():
            if dropDegenerate:
                self.faces = faces[~degenerate]
                self.droppedFaces = int(degenerate.sum())
            else:
                raise ParameterError('Mesh has %d degenerate (zero-area) '
                                     'face%s.' % (degenerate.sum(),
                                                  s(degenerate.sum())))
        if len(self.faces) == 0:
            raise ParameterError('Mesh has no non-degenerate faces.')

    def __repr__(self):
        return '<%s %d vertices, %d faces>' % (
            self.__class__.__name__, len(self.vertices), len(self.faces))

    def triangles(self):
        """
        Get the corner coordinates of every face.

        @return: An F x 3 x 3 C{float} array.
        """
        return self.vertices[self.faces]

    def faceAreas(self):
        """
        Compute the area of every face.

        @return: A C{float} array of length F.
        """
        t = self.vertices[self.faces]
        cross = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        return 0.5 * np.sqrt((cross * cross).sum(axis=1))

    def samplePoints(self, n, seed):
        """
        Sample points uniformly (by area) from the mesh surface.

        @param n: The C{int} number of points.
        @param seed: The C{int} seed.
        @return: An n x 3 C{float} array.
        """
        generator = rng(seed)
        areas = self.faceAreas()
        face = generator.choice(len(areas), size=n, p=areas / areas.sum())
        r1 = np.sqrt(generator.random(n))
        r2 = generator.random(n)
        t = self.triangles()[face]
        return ((1.0 - r1)[:, None] * t[:, 0] +
                (r1 * (1.0 - r2))[:, None] * t[:, 1] +
                (r1 * r2)[:, None] * t[:, 2])

    def transformed(self, center, radius):
        """
        Make a copy of the mesh mapped by x -> (x - center) / radius.

        @param center: A 3-element C{float} array.
        @param radius: The C{float} scale.
        @return: A new C{TriangleMesh}.
        """
        return TriangleMesh((self.vertices - center) / radius, self.faces)


class NeighborIndex(object):
    """
    The result of a k-nearest-neighbor search.

    @param indices: An M x k C{int} array. Row i holds the indices of the
        reference points closest to query i, nearest first.
    """
    def __init__(self, indices):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.k = self.indices.shape[1]

    def __len__(self):
        return len(self.indices)

    def __repr__(self):
        return '<%s %d x %d>' % (self.__class__.__name__, len(self), self.k)


def knn(queries, reference, k, exclude=None):
    """
    Find the k nearest reference points of each query point.

    Distances are Euclidean. Ties are broken in favor of the smaller
    reference index, so results are fully deterministic.

    @param queries: An M x D array (or C{PointCloud}).
    @param reference: An N x D array (or C{PointCloud}).
    @param k: The C{int} number of neighbors.
    @param exclude: Either C{None} or a length M C{int} array giving, for each
        query, a reference index that must not be returned.
    @raise ParameterError: If C{k} is out of range or the dimensions of the
        query and reference points differ.
    @return: A C{NeighborIndex}.
    """
    queries = asPoints(queries)
    reference = asPoints(reference)
    m, dim = queries.shape
    n = len(reference)

    if reference.shape[1] != dim:
        raise ParameterError('Query dimension %d does not match reference '
                             'dimension %d.' % (dim, reference.shape[1]))

    limit = n if exclude is None else n - 1
    if not 1 <= k <= limit:
        raise ParameterError(
            'k (%d) must be between 1 and %d for %d reference point%s%s.' %
            (k, limit, n, s(n), '' if exclude is None else
             ' (with exclusion)'))

    if exclude is not None:
        exclude = np.asarray(exclude, dtype=np.int64)
        if exclude.shape != (m,):
            raise ParameterError('Exclusion array must have one index per '
                                 'query.')

    result = np.empty((m, k), dtype=np.int64)
    step = blockSize(n * dim)

    def block(start):
        end = min(start + step, m)
        diff = queries[start:end, None, :] - reference[None, :, :]
        distances = (diff * diff).sum(axis=2)
        if exclude is not None:
            distances[np.arange(end - start), exclude[start:end]] = np.inf
        # A stable sort keeps equal distances in index order.
        result[start:end] = np.argsort(distances, axis=1,
                                       kind='stable')[:, :k]

    mapBlocks(block, range(0, m, step))
    return NeighborIndex(result)


def _circumsphere(points):
    """
    Find the smallest sphere through up to four points.

    @param points: A 1..4 x 3 C{float} array.
    @return: A 2-C{tuple} of (center, radius).
    """
    origin = points[0]
    if len(points) == 1:
        return origin.copy(), 0.0
    u = points[1:] - origin
    # Least squares copes with coplanar / collinear boundary sets.
    lam = np.linalg.lstsq(u @ u.T, 0.5 * (u * u).sum(axis=1), rcond=None)[0]
    center = origin + lam @ u
    return center, float(np.sqrt(((points - center) ** 2).sum(axis=1)).max())


def _minimalBall(points, end, boundary):
    """
    Welzl's recursion, in its incremental (loop over points) form.

    @param points: The N x 3 C{float} array of (shuffled) points.
    @param end: Only the first C{end} points are considered.
    @param boundary: A C{list} of point indices that must lie on the sphere.
    @return: A 2-C{tuple} of (center, radius).
    """
    if boundary:
        center, radius = _circumsphere(points[boundary])
    else:
        center, radius = np.zeros(3), -1.0
    if len(boundary) == 4:
        return center, radius

    start = 0
    while start < end:
        distances = np.sqrt(
            ((points[start:end] - center) ** 2).sum(axis=1))
        outside = np.nonzero(
            distances > radius * (1.0 + _SPHERE_EPS) + _SPHERE_EPS)[0]
        if len(outside) == 0:
            break
        i = start + int(outside[0])
        center, radius = _minimalBall(points, i, boundary + [i])
        start = i + 1

    return center, radius


def boundingSphere(cloud):
    """
    Find the minimal enclosing sphere of a point cloud.

    @param cloud: A C{PointCloud} or an N x 3 array.
    @raise ParameterError: If the cloud is empty.
    @return: A 2-C{tuple} with the 3-element C{float} center array and the
        C{float} radius.
    """
    points = asPoints(cloud)
    if len(points) == 0:
        raise ParameterError('Cannot find the bounding sphere of an empty '
                             'cloud.')
    # Randomized insertion order gives expected linear time. The order is
    # seeded so the result is reproducible.
    order = rng(0, len(points)).permutation(len(points))
    shuffled = points[order]
    center, radius = _minimalBall(shuffled, len(shuffled), [])
    return center, max(radius, 0.0)


def normalizeUnitSphere(cloud):
    """
    Center a cloud on its bounding sphere and scale it to unit radius.

    @param cloud: A C{PointCloud}.
    @raise ParameterError: If the bounding sphere radius is zero.
    @return: A 3-C{tuple} with the normalized C{PointCloud}, the center and
        the radius (so that C{denormalize} can undo the transform).
    """
    center, radius = boundingSphere(cloud)
    if radius <= 0.0:
        raise ParameterError('Cannot normalize a cloud whose bounding sphere '
                             'has zero radius.')
    return cloud.withPoints((cloud.points - center) / radius), center, radius


def denormalize(cloud, center, radius):
    """
    Undo C{normalizeUnitSphere}.

    @param cloud: A normalized C{PointCloud}.
    @param center: The 3-element center returned by C{normalizeUnitSphere}.
    @param radius: The C{float} radius returned by C{normalizeUnitSphere}.
    @return: A C{PointCloud} in the original coordinates.
    """
    return cloud.withPoints(cloud.points * radius + center)


def isNormalized(cloud, tolerance=1e-6):
    """
    Check that a cloud has a unit-radius bounding sphere.

    @param cloud: A C{PointCloud} or N x 3 array.
    @param tolerance: The C{float} allowed deviation from radius 1.
    @return: A C{bool}.
    """
    return abs(boundingSphere(cloud)[1] - 1.0) <= tolerance


# The discrete noise offsets, in units of the noise scale.
DISCRETE_OFFSETS = np.array([
    [1, 0, 0], [-1, 0, 0],
    [0, 1, 0], [0, -1, 0],
    [0, 0, 1], [0, 0, -1],
    [0, 0, 0],
], dtype=float)


def noiseVectors(model, n):
    """
    Draw noise vectors for C{n} points.

    @param model: A C{NoiseModel}.
    @param n: The C{int} number of points.
    @return: An n x 3 C{float} array.
    """
    generator = rng(model.seed)
    scale = model.scale
    kind = model.kind

    if kind == 'gaussian':
        return generator.normal(0.0, scale, size=(n, 3))
    elif kind == 'laplacian':
        return generator.laplace(0.0, scale, size=(n, 3))
    elif kind == 'uniform':
        bound = scale * sqrt(3.0)
        return generator.uniform(-bound, bound, size=(n, 3))
    elif kind == 'discrete':
        choice = generator.integers(len(DISCRETE_OFFSETS), size=n)
        return DISCRETE_OFFSETS[choice] * scale
    else:
        assert kind == 'anisotropic', 'Unexpected noise kind %r' % kind
        variances = generator.uniform(0.25, 1.0, size=3) * scale * scale
        return generator.standard_normal(size=(n, 3)) * np.sqrt(variances)


def addNoise(cloud, model):
    """
    Corrupt a normalized point cloud.

    Noise is drawn once on the clean normalized cloud and the result is
    never re-normalized.

    @param cloud: A C{PointCloud} normalized to a unit bounding sphere.
    @param model: A C{NoiseModel}.
    @raise ParameterError: If C{cloud} is not normalized.
    @return: A new C{PointCloud} whose C{noise} is C{model}.
    """
    if not isNormalized(cloud):
        raise ParameterError('Noise can only be added to a cloud normalized '
                             'to a unit bounding sphere (radius is %r).' %
                             boundingSphere(cloud)[1])
    points = cloud.points + noiseVectors(model, len(cloud))
    return PointCloud(points, cleanRef=cloud.cleanRef, noise=model)


SHAPE_KINDS = ('sphere', 'torus', 'cube_surface')

TORUS_MAJOR_RADIUS = 1.0
TORUS_MINOR_RADIUS = 0.4


def _icosphere(subdivisions):
    """
    Make a unit icosphere.

    @param subdivisions: The C{int} number of 4-way face subdivisions.
    @return: A 2-C{tuple} of vertex and face arrays.
    """
    t = (1.0 + sqrt(5.0)) / 2.0
    vertices = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    vertices = [np.array(v, dtype=float) / np.linalg.norm(v)
                for v in vertices]

    for _ in range(subdivisions):
        midpoints = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoints:
                m = vertices[a] + vertices[b]
                vertices.append(m / np.linalg.norm(m))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        newFaces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            newFaces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc),
                             (ab, bc, ca)])
        faces = newFaces

    return np.array(vertices), np.array(faces)


def _torusMesh(nu=96, nv=32):
    u = 2.0 * pi * np.arange(nu) / nu
    v = 2.0 * pi * np.arange(nv) / nv
    uu, vv = np.meshgrid(u, v, indexing='ij')
    ring = TORUS_MAJOR_RADIUS + TORUS_MINOR_RADIUS * np.cos(vv)
    vertices = np.stack([ring * np.cos(uu), ring * np.sin(uu),
                         TORUS_MINOR_RADIUS * np.sin(vv)],
                        axis=-1).reshape(-1, 3)
    faces = []
    for i in range(nu):
        for j in range(nv):
            a = i * nv + j
            b = ((i + 1) % nu) * nv + j
            c = ((i + 1) % nu) * nv + (j + 1) % nv
            d = i * nv + (j + 1) % nv
            faces.append((a, b, c))
            faces.append((a, c, d))
    return vertices, np.array(faces)


def _cubeMesh():
    vertices = np.array([[x, y, z] for x in (-1.0, 1.0)
                         for y in (-1.0, 1.0) for z in (-1.0, 1.0)])
    # Vertex i has coordinates given by the bits of i (x is the high bit).
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
             (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return vertices, np.array(faces)


def sampleShape(kind, n, seed):
    """
    Sample points uniformly by area from an analytic shape, in the shape's
    own (unnormalized) coordinates.

    The sphere has radius 1, the torus has major radius 1 and minor radius
    0.4 (around the z axis), and the cube surface has half-width 1.

    @param kind: The C{str} shape kind, one of C{SHAPE_KINDS}.
    @param n: The C{int} number of points (at least 16).
    @param seed: The C{int} seed.
    @raise ParameterError: If C{kind} is unknown or C{n} is too small.
    @return: A 2-C{tuple} of the n x 3 point array and a C{TriangleMesh}.
    """
    if kind not in SHAPE_KINDS:
        raise ParameterError('Unknown shape kind %r. Known kinds are: %s.' %
                             (kind, ', '.join(SHAPE_KINDS)))
    if n < 16:
        raise ParameterError('Shapes need at least 16 points (got %d).' % n)

    generator = rng(seed)

    if kind == 'sphere':
        points = generator.standard_normal(size=(n, 3))
        points /= np.sqrt((points * points).sum(axis=1))[:, None]
        mesh = TriangleMesh(*_icosphere(4))

    elif kind == 'torus':
        big, small = TORUS_MAJOR_RADIUS, TORUS_MINOR_RADIUS
        u = generator.uniform(0.0, 2.0 * pi, size=n)
        # The area element is proportional to (R + r cos v), so sample v by
        # rejection.
        v = np.empty(n)
        filled = 0
        while filled < n:
            candidates = generator.uniform(0.0, 2.0 * pi, size=2 * n)
            keep = candidates[generator.random(2 * n) <=
                              (big + small * np.cos(candidates)) /
                              (big + small)]
            take = min(len(keep), n - filled)
            v[filled:filled + take] = keep[:take]
            filled += take
        ring = big + small * np.cos(v)
        points = np.stack([ring * np.cos(u), ring * np.sin(u),
                           small * np.sin(v)], axis=1)
        mesh = TriangleMesh(*_torusMesh())

    else:
        face = generator.integers(6, size=n)
        uv = generator.uniform(-1.0, 1.0, size=(n, 2))
        axis = face // 2
        sign = np.where(face % 2, 1.0, -1.0)
        points = np.empty((n, 3))
        for a in range(3):
            others = [b for b in range(3) if b != a]
            rows = axis == a
            points[rows, a] = sign[rows]
            points[rows, others[0]] = uv[rows, 0]
            points[rows, others[1]] = uv[rows, 1]
        mesh = TriangleMesh(*_cubeMesh())

    return points, mesh


def makeShape(kind, n, seed):
    """
    Make a clean synthetic shape, normalized to the unit sphere.

    @param kind: The C{str} shape kind, one of C{SHAPE_KINDS}.
    @param n: The C{int} number of points (at least 16).
    @param seed: The C{int} seed.
    @raise ParameterError: If C{kind} is unknown or C{n} is too small.
    @return: A 2-C{tuple} of (C{PointCloud}, C{TriangleMesh}), both mapped
        by the same normalization.
    """
    points, mesh = sampleShape(kind, n, seed)
    cloud, center, radius = normalizeUnitSphere(
        PointCloud(points, cleanRef='%s-%d' % (kind, n)))
    return cloud, mesh.transformed(center, radius)


def patchAround(cloud, center, patchSize):
    """
    Extract the points of a cloud nearest to a location.

    @param cloud: A C{PointCloud}.
    @param center: A 3-element location.
    @param patchSize: The C{int} number of points in the patch.
    @raise ParameterError: If C{patchSize} exceeds the cloud size.
    @return: A C{PointCloud} ordered by distance to C{center}.
    """
    if not 1 <= patchSize <= len(cloud):
        raise ParameterError('Patch size (%d) must be between 1 and the '
                             'cloud size (%d).' % (patchSize, len(cloud)))
    indices = knn(np.asarray(center, dtype=float).reshape(1, 3),
                  cloud.points, patchSize).indices[0]
    return cloud.withPoints(cloud.points[indices])


def samplePatch(cloud, patchSize, seed):
    """
    Extract a patch of nearby points around a randomly chosen seed point.

    @param cloud: A C{PointCloud}.
    @param patchSize: The C{int} number of points in the patch.
    @param seed: The C{int} seed used to choose the patch seed point.
    @raise ParameterError: If C{patchSize} exceeds the cloud size.
    @return: A C{PointCloud} of the seed point and its nearest neighbors,
        ordered by distance to the seed point.
    """
    if not 1 <= patchSize <= len(cloud):
        raise ParameterError('Patch size (%d) must be between 1 and the '
                             'cloud size (%d).' % (patchSize, len(cloud)))
    index = int(rng(seed).integers(len(cloud)))
    return patchAround(cloud, cloud.points[index], patchSize)
