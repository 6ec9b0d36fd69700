"""
Monte-Carlo checks of the analysis behind mirror-point consistency.

The checks use linear denoisers, for which the first-order expansions of
the analysis are exact, so each empirical mean can be compared with a
closed form. Every check returns a C{CheckRecord}.
"""

from __future__ import division, print_function

import json
from math import sqrt

import numpy as np
from scipy.spatial import cKDTree

from simpc.errors import ParameterError, SingularityError
from simpc.geometry import (
    TORUS_MAJOR_RADIUS, TORUS_MINOR_RADIUS, PointCloud, addNoise,
    NoiseModel, normalizeUnitSphere, sampleShape)
from simpc.utils import Reporter, atomicWrite, rng

MANIFOLDS = ('sphere', 'torus')

# Samples are drawn in chunks of this size, each from its own stream, so
# results do not depend on how the work is split.
CHUNK = 100000

_SINGULAR_EPS = 1e-12


def _checkPSD(matrix, what):
    """
    Check a matrix is symmetric positive semi-definite.

    @param matrix: A square C{float} array.
    @param what: A C{str} description for error messages.
    @raise ParameterError: If the matrix is not symmetric PSD.
    @return: A 2-C{tuple} of the eigenvalues (clipped at zero) and the
        eigenvectors.
    """
    matrix = np.asarray(matrix, dtype=float)
    scale = max(1.0, np.abs(matrix).max())
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=1e-12 * scale):
        raise ParameterError('The %s is not symmetric.' % what)
    values, vectors = np.linalg.eigh(matrix)
    if values.min() < -1e-10 * scale:
        raise ParameterError('The %s is not positive semi-definite (smallest '
                             'eigenvalue %r).' % (what, values.min()))
    return np.clip(values, 0.0, None), vectors


def tangentFrame(normal):
    """
    Make two unit vectors that, with C{normal}, form an orthonormal frame.

    @param normal: A unit 3-vector.
    @return: A 3 x 2 C{float} array whose columns are the tangents.
    """
    normal = np.asarray(normal, dtype=float)
    axis = np.zeros(3)
    axis[np.argmin(np.abs(normal))] = 1.0
    t1 = np.cross(normal, axis)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    return np.stack([t1, t2], axis=1)


class LandingModel(object):
    """
    A Gaussian model of where a denoised point lands: a mean, a 2 x 2
    covariance in the tangent plane and a standard deviation along the
    normal.

    @param mu: The 3-element mean.
    @param sigmaTangential: A 2 x 2 PSD covariance in the tangent frame.
    @param sigmaNormal: The C{float} standard deviation along the normal.
    @param normal: The unit 3-vector normal.
    @param frame: A 3 x 2 array whose columns are orthonormal tangents, or
        C{None} to build one from C{normal}.
    @raise ParameterError: If the frame is not orthonormal, the normal is
        not a unit vector, C{sigmaNormal} is negative or the tangential
        covariance is not PSD.
    """
    def __init__(self, mu, sigmaTangential, sigmaNormal, normal, frame=None):
        self.mu = np.array(mu, dtype=float).reshape(3)
        self.sigmaTangential = np.array(sigmaTangential,
                                        dtype=float).reshape(2, 2)
        self.sigmaNormal = float(sigmaNormal)
        self.normal = np.array(normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ParameterError('The landing normal must be a unit vector.')
        self.frame = (tangentFrame(self.normal) if frame is None else
                      np.array(frame, dtype=float).reshape(3, 2))
        basis = np.column_stack([self.frame, self.normal])
        if not np.allclose(basis.T @ basis, np.eye(3), rtol=0.0, atol=1e-12):
            raise ParameterError('The landing frame is not orthonormal.')
        if self.sigmaNormal < 0.0:
            raise ParameterError('The normal standard deviation must be '
                                 'non-negative.')
        _checkPSD(self.sigmaTangential, 'tangential covariance')

    def covariance(self):
        """
        The 3 x 3 covariance in world coordinates.

        @return: A C{float} array.
        """
        return (self.frame @ self.sigmaTangential @ self.frame.T +
                self.sigmaNormal ** 2 * np.outer(self.normal, self.normal))


def _gaussian(generator, mean, values, vectors, count):
    """
    Draw from a Gaussian given the eigen decomposition of its covariance.
    """
    z = generator.standard_normal(size=(count, len(mean)))
    return mean + (z * np.sqrt(values)) @ vectors.T


def sampleLanding(model, count, seed=0):
    """
    Draw landing positions.

    @param model: A C{LandingModel}.
    @param count: The C{int} number of samples.
    @param seed: The C{int} seed.
    @raise ParameterError: If C{count} < 1 or the covariance is not PSD.
    @return: A count x 3 C{float} array.
    """
    if count < 1:
        raise ParameterError('Need at least one sample (got %d).' % count)
    values, vectors = _checkPSD(model.covariance(), 'landing covariance')
    chunks = []
    for index, start in enumerate(range(0, count, CHUNK)):
        size = min(CHUNK, count - start)
        chunks.append(_gaussian(rng(seed, index), model.mu, values, vectors,
                                size))
    return np.concatenate(chunks)


class CheckRecord(object):
    """
    The outcome of one Monte-Carlo check.

    @param check: The C{str} check name.
    @param samples: The C{int} number of samples.
    @param empirical: The C{float} empirical value.
    @param analytic: The C{float} closed-form value.
    @param tolerance: The C{float} allowed relative error.
    @param zScore: The C{float} difference divided by its standard error,
        or C{None}.
    @param relError: The C{float} relative error, or C{None} to compute it.
    @param passed: A C{bool}, or C{None} to compare C{relError} with
        C{tolerance}.
    @param extra: A C{dict} of further values to report.
    """
    def __init__(self, check, samples, empirical, analytic, tolerance,
                 zScore=None, relError=None, passed=None, extra=None):
        self.check = check
        self.samples = int(samples)
        self.empirical = float(empirical)
        self.analytic = float(analytic)
        self.tolerance = float(tolerance)
        self.zScore = None if zScore is None else float(zScore)
        if relError is None:
            difference = abs(self.empirical - self.analytic)
            relError = (difference / abs(self.analytic) if self.analytic
                        else difference)
        self.relError = float(relError)
        self.passed = (self.relError <= self.tolerance if passed is None
                       else bool(passed))
        self.extra = extra or {}

    def __repr__(self):
        return '<CheckRecord %s %s rel_error=%.3g>' % (
            self.check, 'pass' if self.passed else 'FAIL', self.relError)

    def toDict(self):
        result = {
            'check': self.check,
            'samples': self.samples,
            'empirical': self.empirical,
            'analytic': self.analytic,
            'rel_error': self.relError,
            'tolerance': self.tolerance,
            'pass': self.passed,
            'z_score': self.zScore,
        }
        result.update(self.extra)
        return result

    def summary(self):
        return '%-28s %s  empirical=%.6g analytic=%.6g rel=%.3g%s' % (
            self.check, 'pass' if self.passed else 'FAIL', self.empirical,
            self.analytic, self.relError,
            '' if self.zScore is None else ' z=%.2f' % self.zScore)


def _meanOfDraws(draw, count, seed):
    """
    Average a per-sample statistic over chunked draws.

    @param draw: A function of (generator, size) returning a length C{size}
        C{float} array of per-sample values.
    @param count: The C{int} number of samples.
    @param seed: The C{int} seed.
    @raise ParameterError: If C{count} < 2.
    @return: A 2-C{tuple} of the mean and its standard error.
    """
    if count < 2:
        raise ParameterError('Monte-Carlo checks need at least two samples '
                             '(got %d).' % count)
    total = totalSquares = 0.0
    for index, start in enumerate(range(0, count, CHUNK)):
        values = draw(rng(seed, index), min(CHUNK, count - start))
        total += values.sum()
        totalSquares += (values * values).sum()
    mean = total / count
    variance = max(0.0, (totalSquares / count - mean * mean) *
                   count / (count - 1))
    return mean, sqrt(variance / count)


def _zScore(empirical, analytic, standardError):
    if standardError > 0.0:
        return (empirical - analytic) / standardError
    return 0.0 if empirical == analytic else float('inf')


def _squaredNorms(x):
    return (x * x).sum(axis=1)


def secondMomentCheck(modelHat, modelBar, crossCov, count, seed=0,
                      tolerance=0.02):
    """
    Compare E||xHat - xBar||^2 for jointly Gaussian landing positions with
    ||muHat - muBar||^2 + Tr(SigmaHat + SigmaBar - 2 SigmaCross).

    @param modelHat: The C{LandingModel} of the denoised seed.
    @param modelBar: The C{LandingModel} of the denoised mirror point.
    @param crossCov: The 3 x 3 cross-covariance of the two positions.
    @param count: The C{int} number of samples.
    @param seed: The C{int} seed.
    @param tolerance: The C{float} allowed relative error.
    @raise ParameterError: If the joint covariance is not PSD.
    @return: A C{CheckRecord}.
    """
    crossCov = np.asarray(crossCov, dtype=float).reshape(3, 3)
    sigmaHat, sigmaBar = modelHat.covariance(), modelBar.covariance()
    joint = np.block([[sigmaHat, crossCov], [crossCov.T, sigmaBar]])
    values, vectors = _checkPSD(joint, 'joint covariance')
    mean = np.concatenate([modelHat.mu, modelBar.mu])

    def draw(generator, size):
        pairs = _gaussian(generator, mean, values, vectors, size)
        return _squaredNorms(pairs[:, :3] - pairs[:, 3:])

    empirical, standardError = _meanOfDraws(draw, count, seed)
    difference = modelHat.mu - modelBar.mu
    analytic = float(difference @ difference +
                     np.trace(sigmaHat + sigmaBar - 2.0 * crossCov))
    return CheckRecord('second_moment', count, empirical, analytic,
                       tolerance,
                       zScore=_zScore(empirical, analytic, standardError))


class LinearDenoiser(object):
    """
    A denoiser that maps s + n to s + J n around a surface point s.

    @param J: The 3 x 3 Jacobian.
    @param anchor: The 3-element surface point s.
    """
    def __init__(self, J, anchor=(0.0, 0.0, 0.0)):
        self.J = np.array(J, dtype=float).reshape(3, 3)
        self.anchor = np.array(anchor, dtype=float).reshape(3)
        if not (np.all(np.isfinite(self.J)) and
                np.all(np.isfinite(self.anchor))):
            raise ParameterError('Linear denoiser values must be finite.')

    def __call__(self, noise):
        """
        Denoise points given their noise vectors.

        @param noise: A count x 3 array of noise vectors n.
        @return: A count x 3 array of s + J n.
        """
        return self.anchor + noise @ self.J.T

    def frobeniusSquared(self):
        return float((self.J * self.J).sum())


def taylorCase1(denoiser, noiseStd, count, seed=0, tolerance=0.05):
    """
    Exact sign-flipped mirror: xHat = s + J n and xBar = s - J n, so
    E||xHat - xBar||^2 = 4 noiseStd^2 ||J||_F^2.

    @param denoiser: A C{LinearDenoiser}.
    @param noiseStd: The C{float} per-coordinate noise standard deviation.
    @param count: The C{int} number of samples.
    @param seed: The C{int} seed.
    @param tolerance: The C{float} allowed relative error.
    @return: A C{CheckRecord}.
    """
    def draw(generator, size):
        noise = generator.normal(0.0, noiseStd, size=(size, 3))
        return _squaredNorms(denoiser(noise) - denoiser(-noise))

    empirical, standardError = _meanOfDraws(draw, count, seed)
    analytic = 4.0 * noiseStd ** 2 * denoiser.frobeniusSquared()
    return CheckRecord('taylor_case1', count, empirical, analytic, tolerance,
                       zScore=_zScore(empirical, analytic, standardError))


def taylorCase2(denoiser, s1, s2, noiseStd, count, seed=0, tolerance=0.02):
    """
    Two noisy samples of different surface points, each denoised linearly
    around its own anchor: E||xHat1 - xHat2||^2 = ||s1 - s2||^2 +
    2 noiseStd^2 ||J||_F^2. The first term is a floor that remains however
    well the denoiser suppresses noise.

    @param denoiser: A C{LinearDenoiser} (its anchor is ignored).
    @param s1: The 3-element first surface point.
    @param s2: The 3-element second surface point.
    @param noiseStd: The C{float} per-coordinate noise standard deviation.
    @param count: The C{int} number of samples.
    @param seed: The C{int} seed.
    @param tolerance: The C{float} allowed relative error.
    @return: A C{CheckRecord} whose extra values include the C{floor}.
    """
    first = LinearDenoiser(denoiser.J, s1)
    second = LinearDenoiser(denoiser.J, s2)

    def draw(generator, size):
        noise = generator.normal(0.0, noiseStd, size=(size, 6))
        return _squaredNorms(first(noise[:, :3]) - second(noise[:, 3:]))

    empirical, standardError = _meanOfDraws(draw, count, seed)
    difference = first.anchor - second.anchor
    floor = float(difference @ difference)
    analytic = floor + 2.0 * noiseStd ** 2 * denoiser.frobeniusSquared()
    return CheckRecord('taylor_case2', count, empirical, analytic, tolerance,
                       zScore=_zScore(empirical, analytic, standardError),
                       extra={'floor': floor})


def taylorCase3(denoiser, noiseStd, delta, count, seed=0, tolerance=0.05,
                mirrorDenoiser=None):
    """
    An imperfect mirror: the mirror noise is -n + delta, so with mirror
    Jacobian Jb, E||xHat - xBar||^2 = noiseStd^2 ||J + Jb||_F^2 +
    ||Jb delta||^2. The second term does not vanish as the noise does.

    @param denoiser: A C{LinearDenoiser}.
    @param noiseStd: The C{float} per-coordinate noise standard deviation.
    @param delta: The 3-element deviation from a perfect mirror.
    @param count: The C{int} number of samples.
    @param seed: The C{int} seed.
    @param tolerance: The C{float} allowed relative error.
    @param mirrorDenoiser: A C{LinearDenoiser} for the mirror point, or
        C{None} to use C{denoiser}.
    @return: A C{CheckRecord} whose extra values include the C{residual}
        ||Jb delta||^2.
    """
    mirror = denoiser if mirrorDenoiser is None else LinearDenoiser(
        mirrorDenoiser.J, denoiser.anchor)
    delta = np.array(delta, dtype=float).reshape(3)

    def draw(generator, size):
        noise = generator.normal(0.0, noiseStd, size=(size, 3))
        return _squaredNorms(denoiser(noise) - mirror(delta - noise))

    empirical, standardError = _meanOfDraws(draw, count, seed)
    both = denoiser.J + mirror.J
    shifted = mirror.J @ delta
    residual = float(shifted @ shifted)
    analytic = noiseStd ** 2 * float((both * both).sum()) + residual
    return CheckRecord('taylor_case3', count, empirical, analytic, tolerance,
                       zScore=_zScore(empirical, analytic, standardError),
                       extra={'residual': residual,
                              'delta_norm': float(np.linalg.norm(delta))})


def deltaSweep(denoiser, noiseStd, deltas, count, seed=0, tolerance=0.05):
    """
    Run the imperfect-mirror check for a series of deviations.

    @param denoiser: A C{LinearDenoiser}.
    @param noiseStd: The C{float} per-coordinate noise standard deviation.
    @param deltas: An iterable of 3-element deviations, in increasing size.
    @param count: The C{int} number of samples per deviation.
    @param seed: The C{int} seed (each deviation uses its own stream).
    @param tolerance: The C{float} allowed relative error per deviation.
    @return: A 2-C{tuple} of the C{list} of per-deviation C{CheckRecord}s
        and a summary C{CheckRecord} that passes if the empirical values
        grow with the deviation size.
    """
    deltas = [np.array(delta, dtype=float) for delta in deltas]
    records = [taylorCase3(denoiser, noiseStd, delta, count,
                           seed=seed + index, tolerance=tolerance)
               for index, delta in enumerate(deltas)]
    empirical = [record.empirical for record in records]
    monotone = all(a <= b for a, b in zip(empirical, empirical[1:]))
    summary = CheckRecord(
        'case3_delta_sweep', count * len(records),
        empirical[-1] - empirical[0] if records else 0.0,
        records[-1].analytic - records[0].analytic if records else 0.0,
        tolerance, relError=0.0 if monotone else 1.0, passed=monotone,
        extra={'delta_norms': [float(np.linalg.norm(d)) for d in deltas],
               'empirical_values': empirical})
    return records, summary


class SurfaceTarget(object):
    """
    The closest point of a test surface to a query point.

    @param g: The 3-element closest point.
    @param normal: The unit 3-vector surface normal at C{g}, pointing away
        from the medial axis.
    """
    def __init__(self, g, normal):
        self.g = g
        self.normal = normal

    def __repr__(self):
        return '<SurfaceTarget g=%s>' % (self.g,)


def projection(x, manifold, center=(0.0, 0.0, 0.0), radius=1.0,
               majorRadius=TORUS_MAJOR_RADIUS, minorRadius=TORUS_MINOR_RADIUS):
    """
    Find the closest point of a sphere or a torus.

    @param x: The 3-element query point.
    @param manifold: Either 'sphere' or 'torus' (around the z axis).
    @param center: The 3-element center of the surface.
    @param radius: The C{float} sphere radius.
    @param majorRadius: The C{float} torus center-circle radius.
    @param minorRadius: The C{float} torus tube radius.
    @raise ParameterError: If C{manifold} is unknown.
    @raise SingularityError: If the closest point is not unique (the sphere
        center, the torus axis or the torus center circle).
    @return: A C{SurfaceTarget}.
    """
    p = np.asarray(x, dtype=float).reshape(3) - np.asarray(center,
                                                           dtype=float)
    if manifold == 'sphere':
        length = np.linalg.norm(p)
        if length < _SINGULAR_EPS:
            raise SingularityError('The sphere center has no unique closest '
                                   'surface point.')
        normal = p / length
        return SurfaceTarget(center + radius * normal, normal)
    elif manifold == 'torus':
        rho = np.hypot(p[0], p[1])
        if rho < _SINGULAR_EPS:
            raise SingularityError('Points on the torus axis have no unique '
                                   'closest surface point.')
        ring = majorRadius * np.array([p[0] / rho, p[1] / rho, 0.0])
        offset = p - ring
        length = np.linalg.norm(offset)
        if length < _SINGULAR_EPS:
            raise SingularityError('Points on the torus center circle have '
                                   'no unique closest surface point.')
        normal = offset / length
        return SurfaceTarget(center + ring + minorRadius * normal, normal)
    else:
        raise ParameterError('Unknown manifold %r. Known manifolds are: %s.'
                             % (manifold, ', '.join(MANIFOLDS)))


def meanSurfaceDistance(cloud, manifold, **kwargs):
    """
    The mean distance from the points of a cloud to a test surface.

    @param cloud: A C{PointCloud} or N x 3 array.
    @param manifold: Either 'sphere' or 'torus'.
    @param kwargs: Surface parameters passed to C{projection}.
    @return: A C{float}.
    """
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(
        cloud, dtype=float)
    return float(np.mean([
        np.linalg.norm(point - projection(point, manifold, **kwargs).g)
        for point in points]))


def orthogonalityCheck(manifold, count, seed=0, tolerance=1e-9):
    """
    Check that x - projection(x) is orthogonal to the tangent plane at the
    projected point, for random points near the surface.

    @param manifold: Either 'sphere' or 'torus'.
    @param count: The C{int} number of points.
    @param seed: The C{int} seed.
    @param tolerance: The C{float} largest allowed tangential component.
    @return: A C{CheckRecord}.
    """
    kind = 'sphere' if manifold == 'sphere' else 'torus'
    surface, _ = sampleShape(kind, max(count, 16), seed)
    points = surface[:count] + rng(seed, 1).normal(0.0, 0.1,
                                                   size=(count, 3))
    worst = 0.0
    for point in points:
        target = projection(point, manifold)
        frame = tangentFrame(target.normal)
        worst = max(worst, np.abs((point - target.g) @ frame).max())
    return CheckRecord('orthogonality_%s' % manifold, count, worst, 0.0,
                       tolerance, relError=worst)


def landingChecks(model, count, seed=0, tolerance=0.02):
    """
    Check that landing samples have the model's mean and normal variance.

    @param model: A C{LandingModel}.
    @param count: The C{int} number of samples.
    @param seed: The C{int} seed.
    @param tolerance: The C{float} allowed relative error of the normal
        variance.
    @return: A C{list} of two C{CheckRecord}s. The mean check passes when
        every axis is within four standard errors.
    """
    samples = sampleLanding(model, count, seed)
    std = np.sqrt(np.diag(model.covariance()))
    error = samples.mean(axis=0) - model.mu
    limit = 4.0 * std / sqrt(count)
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(std > 0.0, error / (std / sqrt(count)), 0.0)
    meanRecord = CheckRecord(
        'landing_mean', count, float(np.abs(error).max()), 0.0, tolerance,
        zScore=float(np.abs(z).max()), relError=float(np.abs(error).max()),
        passed=bool(np.all(np.abs(error) <= limit)))

    along = (samples - model.mu) @ model.normal
    variance = float(along @ along / count)
    expected = model.sigmaNormal ** 2
    varianceRecord = CheckRecord(
        'landing_normal_variance', count, variance, expected, tolerance,
        zScore=_zScore(variance, expected, expected * sqrt(2.0 / count)))
    return [meanRecord, varianceRecord]


def randomLandingModel(generator, scale=0.01):
    """
    Make a landing model with a random normal, mean and covariance.

    @param generator: A C{numpy.random.Generator}.
    @param scale: The C{float} overall variance scale.
    @return: A C{LandingModel}.
    """
    normal = generator.standard_normal(3)
    normal /= np.linalg.norm(normal)
    a = generator.standard_normal((2, 2))
    return LandingModel(generator.normal(0.0, 0.1, size=3),
                        scale * (a @ a.T), sqrt(scale) * generator.random(),
                        normal)


def randomJointLandings(generator, scale=0.01):
    """
    Make two landing models and a cross-covariance whose joint covariance
    is PSD.

    @param generator: A C{numpy.random.Generator}.
    @param scale: The C{float} overall variance scale.
    @return: A 3-C{tuple} of (C{LandingModel}, C{LandingModel}, 3 x 3
        cross-covariance).
    """
    b = generator.standard_normal((6, 6))
    joint = scale * (b @ b.T)
    models = []
    for block in (slice(0, 3), slice(3, 6)):
        covariance = joint[block, block]
        # Express each block in a frame whose normal is its least-variance
        # direction, so the model reproduces the block exactly.
        values, vectors = np.linalg.eigh(covariance)
        normal = vectors[:, 0]
        frame = vectors[:, 1:]
        models.append(LandingModel(
            generator.normal(0.0, 0.1, size=3),
            frame.T @ covariance @ frame, sqrt(max(values[0], 0.0)), normal,
            frame=frame))
    return models[0], models[1], joint[0:3, 3:6]


class TheoryHarness(Reporter):
    """
    Run the Monte-Carlo checks and collect their records.

    @param samples: The C{int} number of samples for the Taylor and landing
        checks.
    @param momentSamples: The C{int} number of samples per second-moment
        instance.
    @param momentInstances: The C{int} number of random second-moment
        instances.
    @param noiseStd: The C{float} noise standard deviation for the Taylor
        checks.
    @param seed: The C{int} seed.
    @param verbose: The C{int} verbosity level.
    """
    DEFAULT_SAMPLES = 100000
    DEFAULT_MOMENT_SAMPLES = 1000000
    DEFAULT_MOMENT_INSTANCES = 50
    DEFAULT_NOISE_STD = 0.02

    def __init__(self, samples=DEFAULT_SAMPLES,
                 momentSamples=DEFAULT_MOMENT_SAMPLES,
                 momentInstances=DEFAULT_MOMENT_INSTANCES,
                 noiseStd=DEFAULT_NOISE_STD, seed=0, verbose=0):
        Reporter.__init__(self, verbose)
        self.samples = samples
        self.momentSamples = momentSamples
        self.momentInstances = momentInstances
        self.noiseStd = noiseStd
        self.seed = seed

    def _add(self, records, record):
        records.append(record)
        self.report(record.summary())

    def run(self):
        """
        Run every check.

        @return: A C{list} of C{CheckRecord}s.
        """
        generator = rng(self.seed, 1000)
        records = []
        seed = self.seed

        model = randomLandingModel(generator)
        for record in landingChecks(model, self.samples, seed):
            self._add(records, record)

        for instance in range(self.momentInstances):
            hat, bar, cross = randomJointLandings(generator)
            record = secondMomentCheck(hat, bar, cross, self.momentSamples,
                                       seed=seed + 1 + instance)
            record.check = 'second_moment[%d]' % instance
            self._add(records, record)

        J = generator.standard_normal((3, 3))
        denoiser = LinearDenoiser(J, generator.standard_normal(3))
        self._add(records, taylorCase1(denoiser, self.noiseStd, self.samples,
                                       seed=seed + 101))

        s1 = generator.standard_normal(3)
        s2 = s1 + generator.normal(0.0, 0.1, size=3)
        self._add(records, taylorCase2(LinearDenoiser(0.01 * J), s1, s2,
                                       self.noiseStd, self.samples,
                                       seed=seed + 102))

        delta = generator.normal(0.0, self.noiseStd, size=3)
        self._add(records, taylorCase3(denoiser, self.noiseStd, delta,
                                       self.samples, seed=seed + 103))

        _, summary = deltaSweep(
            denoiser, self.noiseStd,
            [factor * delta for factor in (0.0, 0.5, 1.0, 2.0, 4.0)],
            self.samples, seed=seed + 200)
        self._add(records, summary)

        for manifold in MANIFOLDS:
            self._add(records, orthogonalityCheck(manifold, 1000,
                                                  seed=seed + 300))

        return records


def meanCloserCheck(params, noiseScale=0.02, n=2048, seed=0):
    """
    Compare the mean distance to the true sphere before and after
    denoising a held-out noisy sphere.

    @param params: A C{ModelParams}.
    @param noiseScale: The C{float} Gaussian noise scale.
    @param n: The C{int} number of points.
    @param seed: The C{int} seed.
    @return: A C{CheckRecord} that passes when denoising does not increase
        the mean distance.
    """
    from simpc.network import denoiseForward

    points, _ = sampleShape('sphere', n, seed)
    clean, center, radius = normalizeUnitSphere(PointCloud(points))
    noisy = addNoise(clean, NoiseModel('gaussian', noiseScale, seed + 1))
    surface = {'center': -center / radius, 'radius': 1.0 / radius}
    before = meanSurfaceDistance(noisy, 'sphere', **surface)
    after = meanSurfaceDistance(denoiseForward(noisy, params).final(),
                                'sphere', **surface)
    return CheckRecord('mean_closer', n, after, before, 0.0,
                       relError=max(0.0, after - before),
                       passed=after <= before)


def bridgeExperiment(params, noisy, clean):
    """
    Measure how closely the model's first-block mirror points realize the
    exact reflection of each noisy point through its nearest clean point.
    The result is descriptive and carries no pass/fail verdict.

    @param params: A C{ModelParams}.
    @param noisy: The noisy C{PointCloud}.
    @param clean: The clean C{PointCloud}.
    @return: A C{dict} with the mean noise length, the mean distance of the
        mirror points from the exact reflections, and their ratio.
    """
    from simpc.network import denoiseForward

    trajectory = denoiseForward(noisy, params, withMirror=True)
    triple = trajectory.mirrorRecords[0]
    x = triple.seed.values
    _, nearest = cKDTree(clean.points).query(x)
    s = clean.points[nearest]
    reflection = 2.0 * s - x
    noise = float(np.linalg.norm(x - s, axis=1).mean())
    gap = float(np.linalg.norm(triple.xTilde.values - reflection,
                               axis=1).mean())
    return {
        'check': 'mirror_bridge',
        'samples': len(x),
        'mean_noise': noise,
        'mean_gap': gap,
        'relative_gap': gap / noise if noise else 0.0,
    }


def writeReport(path, records, extra=None):
    """
    Write check records as a JSON report.

    @param path: The C{str} file name.
    @param records: A C{list} of C{CheckRecord}s.
    @param extra: A C{list} of further JSON-serializable C{dict}s (e.g.
        descriptive measurements).
    @return: The C{bool} conjunction of every record's C{passed}.
    """
    passed = all(record.passed for record in records)
    with atomicWrite(path) as fp:
        json.dump({'checks': [record.toDict() for record in records],
                   'descriptive': extra or [],
                   'pass': passed}, fp, indent=2, sort_keys=True)
        fp.write('\n')
    return passed
