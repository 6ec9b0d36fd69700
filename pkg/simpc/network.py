from __future__ import division

from collections import OrderedDict

import numpy as np

from simpc.errors import ParameterError, StateError
from simpc.geometry import PointCloud
from simpc.layers import (
    DecoderParams, EncoderParams, PSAParams, decode, encode, psa)
from simpc.mpgm import MIRROR_NEIGHBORHOODS, mirrorBranch
from simpc.tensor import (
    AdamState, Tensor, add, constant, loadCheckpoint, saveCheckpoint)
from simpc.utils import rng


class ModelHyper(object):
    """
    The hyperparameters shared by all blocks of a model.

    @param k: The C{int} neighborhood size.
    @param channels: The C{int} feature width C.
    @param blocks: The C{int} number of denoiser blocks L.
    @param maxStep: The C{float} bound on each displacement coordinate.
    @param encoderLayers: The C{int} number of encoder layers T.
    @param w1: The C{float} scaling of the displacement for the denoised
        seed point.
    @param w2: The C{float} scaling of the displacement for the mirror
        point.
    @raise ParameterError: If a value is out of range.
    """
    DEFAULT_K = 32
    DEFAULT_CHANNELS = 64
    DEFAULT_BLOCKS = 2
    DEFAULT_MAX_STEP = 1.0
    DEFAULT_ENCODER_LAYERS = 3
    DEFAULT_W1 = 1.0
    DEFAULT_W2 = 2.0

    FIELDS = ('k', 'channels', 'blocks', 'maxStep', 'encoderLayers', 'w1',
              'w2')

    def __init__(self, k=DEFAULT_K, channels=DEFAULT_CHANNELS,
                 blocks=DEFAULT_BLOCKS, maxStep=DEFAULT_MAX_STEP,
                 encoderLayers=DEFAULT_ENCODER_LAYERS, w1=DEFAULT_W1,
                 w2=DEFAULT_W2):
        if k < 1 or channels < 4 or blocks < 1 or encoderLayers < 1:
            raise ParameterError(
                'Model needs k >= 1, channels >= 4, blocks >= 1 and encoder '
                'layers >= 1 (got k=%d, channels=%d, blocks=%d, encoder '
                'layers=%d).' % (k, channels, blocks, encoderLayers))
        if maxStep <= 0.0:
            raise ParameterError('maxStep must be positive (got %r).' %
                                 maxStep)
        if not w2 > w1:
            raise ParameterError('The mirror scaling w2 (%r) must exceed w1 '
                                 '(%r).' % (w2, w1))
        self.k = int(k)
        self.channels = int(channels)
        self.blocks = int(blocks)
        self.maxStep = float(maxStep)
        self.encoderLayers = int(encoderLayers)
        self.w1 = float(w1)
        self.w2 = float(w2)

    def __eq__(self, other):
        return self.toDict() == other.toDict()

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return '<ModelHyper %s>' % ', '.join(
            '%s=%r' % (field, getattr(self, field)) for field in self.FIELDS)

    def toDict(self):
        return OrderedDict((field, getattr(self, field))
                           for field in self.FIELDS)

    @classmethod
    def fromDict(cls, d):
        return cls(**dict((field, d[field]) for field in cls.FIELDS))


class ModelParams(object):
    """
    All learnable weights of a denoiser.

    Use C{ModelParams.initialize} to make a new model.

    @param hyper: A C{ModelHyper}.
    @param encoder: An C{EncoderParams}.
    @param blocks: A C{list} of (C{PSAParams}, C{DecoderParams}) pairs.
    """
    def __init__(self, hyper, encoder, blocks):
        assert len(blocks) == hyper.blocks, (
            'Expected %d blocks, got %d.' % (hyper.blocks, len(blocks)))
        self.hyper = hyper
        self.encoder = encoder
        self.blocks = blocks

    @classmethod
    def initialize(cls, hyper, seed=0, zeroDecoder=True):
        """
        Make a new model with random weights.

        @param hyper: A C{ModelHyper}.
        @param seed: The C{int} initialization seed.
        @param zeroDecoder: If C{True}, each decoder's final layer is zero,
            so the model starts as the identity denoiser.
        @return: A C{ModelParams} instance.
        """
        generator = rng(seed)
        encoder = EncoderParams(hyper.channels, hyper.encoderLayers, hyper.k,
                                generator)
        blocks = []
        for block in range(hyper.blocks):
            blocks.append(
                (PSAParams(hyper.channels, 'block.%d.psa' % block, generator),
                 DecoderParams(hyper.channels, 'block.%d.decoder' % block,
                               generator, zeroLast=zeroDecoder)))
        return cls(hyper, encoder, blocks)

    def parameters(self):
        """
        Get all trainable tensors.

        @return: An C{OrderedDict} of C{str} name to C{Tensor}, in a fixed
            order.
        """
        result = OrderedDict(self.encoder.parameters())
        for psaParams, decoderParams in self.blocks:
            result.update(psaParams.parameters())
            result.update(decoderParams.parameters())
        return result

    def setValues(self, arrays):
        """
        Overwrite the weights, e.g. from a checkpoint.

        @param arrays: A C{dict} of C{str} name to array, holding (at least)
            every parameter name.
        @raise StateError: If a parameter is missing or has the wrong shape.
        """
        params = self.parameters()
        for name, tensor in params.items():
            if name not in arrays:
                raise StateError('Weights for parameter %r are missing.' %
                                 name)
            values = np.asarray(arrays[name], dtype=float)
            if values.shape != tensor.shape:
                raise StateError('Parameter %r has shape %s but the stored '
                                 'weights have shape %s.' %
                                 (name, tensor.shape, values.shape))
        for name, tensor in params.items():
            tensor.values = np.array(arrays[name], dtype=float)

    def parameterCount(self):
        return sum(t.values.size for t in self.parameters().values())


class DenoiseTrajectory(object):
    """
    Everything computed by one forward pass.

    @param clouds: A C{list} of L + 1 N x 3 C{Tensor}s, X^0 to X^L.
    @param displacements: A C{list} of L N x 3 C{Tensor}s.
    @param features: A C{list} of L + 1 N x C C{Tensor}s.
    @param mirrorRecords: A C{list} of L C{MirrorTriple}s, or C{None} if the
        mirror branch was not run.
    """
    def __init__(self, clouds, displacements, features, mirrorRecords=None):
        assert len(clouds) == len(displacements) + 1
        self.clouds = clouds
        self.displacements = displacements
        self.features = features
        self.mirrorRecords = mirrorRecords

    def __len__(self):
        return len(self.displacements)

    def final(self):
        """
        Get the denoised coordinates.

        @return: The N x 3 C{float} array of X^L.
        """
        return self.clouds[-1].values


def asCoordinates(cloud):
    """
    Turn a point cloud, array or tensor into an N x 3 coordinate tensor.

    @param cloud: A C{PointCloud}, array or C{Tensor}.
    @return: A C{Tensor}.
    """
    if isinstance(cloud, Tensor):
        return cloud
    if isinstance(cloud, PointCloud):
        return constant(cloud.points)
    return constant(cloud)


def denoiseForward(cloud, params, withMirror=False,
                   mirrorNeighborhood='current'):
    """
    Run the encoder and the denoiser blocks.

    Block l attends over the coordinate neighborhoods of X^(l-1) with
    features U^(l-1), decodes a displacement d^l, and sets
    X^l = X^(l-1) + d^l and U^l to the attention output.

    @param cloud: A C{PointCloud}, N x 3 array or C{Tensor}.
    @param params: A C{ModelParams}.
    @param withMirror: If C{True}, also run the mirror branch of each block.
    @param mirrorNeighborhood: Where mirror points find their neighbors:
        'current' (the block's input cloud) or 'input' (X^0).
    @raise ParameterError: If N <= k, or the mirror neighborhood is
        unknown.
    @return: A C{DenoiseTrajectory}.
    """
    hyper = params.hyper
    x = asCoordinates(cloud)
    if mirrorNeighborhood not in MIRROR_NEIGHBORHOODS:
        raise ParameterError('Unknown mirror neighborhood %r.' %
                             mirrorNeighborhood)
    if x.shape[0] <= hyper.k:
        raise ParameterError('Denoising needs more than k=%d points (got %d).'
                             % (hyper.k, x.shape[0]))

    u = encode(x, params.encoder, hyper.k)
    clouds, displacements, features = [x], [], [u]
    mirrorRecords = [] if withMirror else None

    for psaParams, decoderParams in params.blocks:
        f = psa(u, x.values, psaParams, hyper.k)
        d = decode(f, decoderParams, hyper.maxStep)
        if withMirror:
            reference = x if mirrorNeighborhood == 'current' else clouds[0]
            mirrorRecords.append(
                mirrorBranch(x, u, d, reference, psaParams, decoderParams,
                             hyper))
        x = add(x, d)
        u = f
        clouds.append(x)
        displacements.append(d)
        features.append(f)

    return DenoiseTrajectory(clouds, displacements, features, mirrorRecords)


def denoiseIterations(cloud, params, iterations=1):
    """
    Denoise by repeated forward passes, each starting from the previous
    pass's output.

    @param cloud: A C{PointCloud} or N x 3 array.
    @param params: A C{ModelParams}.
    @param iterations: The C{int} number of passes.
    @raise ParameterError: If C{iterations} < 1 or N <= k.
    @return: A C{list} of C{iterations} N x 3 arrays, the output of each
        pass.
    """
    if iterations < 1:
        raise ParameterError('Need at least one iteration (got %d).' %
                             iterations)
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(
        cloud, dtype=float)
    outputs = []
    for _ in range(iterations):
        points = denoiseForward(points, params).final()
        outputs.append(points)
    return outputs


def saveModel(path, params, state=None, meta=None):
    """
    Save a model (and optionally its optimizer state) as a checkpoint.

    @param path: The C{str} file name.
    @param params: A C{ModelParams}.
    @param state: An C{AdamState}, or C{None}.
    @param meta: A C{dict} of further JSON-serializable metadata.
    """
    arrays = OrderedDict((name, tensor.values)
                         for name, tensor in params.parameters().items())
    info = dict(meta or {})
    info['hyper'] = params.hyper.toDict()
    if state is not None:
        arrays.update(state.tensors())
        info['adam'] = {'step': state.step, 'lr': state.lr,
                        'beta1': state.beta1, 'beta2': state.beta2,
                        'eps': state.eps}
    saveCheckpoint(path, arrays, info)


def loadModel(path, hyper=None):
    """
    Load a model saved by C{saveModel}.

    @param path: The C{str} file name.
    @param hyper: A C{ModelHyper} the checkpoint must match, or C{None}.
    @raise StateError: If the checkpoint's hyperparameters differ from
        C{hyper} or its weights do not fit them.
    @return: A 3-C{tuple} of the C{ModelParams}, the C{AdamState} (or
        C{None} if none was saved) and the metadata C{dict}.
    """
    arrays, meta = loadCheckpoint(path)
    if 'hyper' not in meta:
        raise StateError('%s: checkpoint has no model hyperparameters.' %
                         path)
    stored = ModelHyper.fromDict(meta['hyper'])
    if hyper is not None and stored != hyper:
        raise StateError('%s: checkpoint hyperparameters %r do not match '
                         'the configured %r.' % (path, stored, hyper))
    params = ModelParams.initialize(stored)
    params.setValues(arrays)

    state = None
    adam = meta.get('adam')
    if adam is not None:
        state = AdamState(adam['lr'], adam['beta1'], adam['beta2'],
                          adam['eps'])
        state.step = adam['step']
        for name in params.parameters():
            if 'adam.m.' + name in arrays:
                state.m[name] = arrays['adam.m.' + name]
                state.v[name] = arrays['adam.v.' + name]

    return params, state, meta
