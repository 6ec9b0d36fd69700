"""
The trainable pieces of the denoiser: multi-layer perceptrons, the
dynamic-graph encoder, channel-wise point self-attention and the
displacement decoder.
"""

from __future__ import division

from collections import OrderedDict
from math import sqrt

import numpy as np

from simpc.errors import ParameterError
from simpc.geometry import knn
from simpc.tensor import (
    add, affine, concatLast, gatherRows, mul, parameter, pointwise, reduce,
    scale, softmaxOverNeighbors, sub)


class MLP(object):
    """
    A stack of affine layers with ReLU between them (not after the last).

    Weights are initialized uniformly in +/- sqrt(6 / fan_in) and biases in
    +/- 1 / sqrt(fan_in).

    @param name: The C{str} prefix for parameter names.
    @param widths: A C{list} of C{int} layer widths, input width first.
    @param generator: A C{numpy.random.Generator} for initialization.
    @param zeroLast: If C{True}, the last layer's weights and bias are zero.
    @param lastScale: A C{float} multiplier for the last layer's
        initialization range.
    """
    def __init__(self, name, widths, generator, zeroLast=False,
                 lastScale=1.0):
        assert len(widths) >= 2, 'An MLP needs at least two widths.'
        self.name = name
        self.widths = list(widths)
        self.layers = []
        last = len(widths) - 2
        for i, (fanIn, fanOut) in enumerate(zip(widths, widths[1:])):
            if i == last and zeroLast:
                W = np.zeros((fanIn, fanOut))
                b = np.zeros(fanOut)
            else:
                factor = lastScale if i == last else 1.0
                bound = factor * sqrt(6.0 / fanIn)
                W = generator.uniform(-bound, bound, size=(fanIn, fanOut))
                bound = factor / sqrt(fanIn)
                b = generator.uniform(-bound, bound, size=fanOut)
            self.layers.append(
                (parameter(W, name='%s.%d.W' % (name, i)),
                 parameter(b, name='%s.%d.b' % (name, i))))

    def __call__(self, x):
        """
        Apply the MLP over the last axis of C{x}.

        @param x: A C{Tensor} of shape (..., widths[0]).
        @return: A C{Tensor} of shape (..., widths[-1]).
        """
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            x = affine(x, W, b)
            if i < last:
                x = pointwise(x, 'relu')
        return x

    def parameters(self):
        result = OrderedDict()
        for W, b in self.layers:
            result[W.name] = W
            result[b.name] = b
        return result


def _collect(*parts):
    result = OrderedDict()
    for part in parts:
        result.update(part.parameters())
    return result


def encoderWidths(channels, layers):
    """
    The feature widths of the encoder, doubling up to C{channels}.

    @param channels: The C{int} output width.
    @param layers: The C{int} number of layers.
    @return: A C{list} of C{layers + 1} C{int} widths, starting with 3.
    """
    return [3] + [max(1, channels // 2 ** (layers - 1 - t))
                  for t in range(layers)]


class EncoderLayer(object):
    """
    One dynamic-graph layer: g_i <- h(g_i) + sum_j h([g_i || g_j - g_i]).

    The self and edge terms have their own MLPs since the edge input is
    twice as wide. The edge MLP's last layer starts 1/k smaller so the sum
    over k neighbors does not swamp the self term.
    """
    def __init__(self, name, widthIn, widthOut, k, generator):
        self.selfMLP = MLP(name + '.self', [widthIn, widthOut, widthOut],
                           generator)
        self.edgeMLP = MLP(name + '.edge', [2 * widthIn, widthOut, widthOut],
                           generator, lastScale=1.0 / k)

    def parameters(self):
        return _collect(self.selfMLP, self.edgeMLP)


class EncoderParams(object):
    """
    The dynamic-graph encoder weights.

    @param channels: The C{int} output feature width C.
    @param layers: The C{int} number of layers T.
    @param k: The C{int} neighborhood size.
    @param generator: A C{numpy.random.Generator} for initialization.
    """
    def __init__(self, channels, layers, k, generator):
        self.widths = encoderWidths(channels, layers)
        self.layers = [
            EncoderLayer('encoder.%d' % t, widthIn, widthOut, k, generator)
            for t, (widthIn, widthOut) in enumerate(
                zip(self.widths, self.widths[1:]))]

    def parameters(self):
        return _collect(*self.layers)


def selfIndex(n, k):
    """
    An n x k index matrix whose row i is all i.

    @param n: The C{int} number of rows.
    @param k: The C{int} number of columns.
    @return: An C{int} array.
    """
    return np.repeat(np.arange(n)[:, None], k, axis=1)


def encode(cloud, params, k):
    """
    Compute per-point features by repeated edge convolution over k-NN
    graphs, the graph being rebuilt in the current feature space before
    each layer.

    @param cloud: An N x 3 C{Tensor} of coordinates.
    @param params: An C{EncoderParams}.
    @param k: The C{int} neighborhood size (self included).
    @raise ParameterError: If N <= k.
    @return: An N x C C{Tensor}.
    """
    n = cloud.shape[0]
    if n <= k:
        raise ParameterError('The encoder needs more than k=%d points (got '
                             '%d).' % (k, n))
    g = cloud
    centers = selfIndex(n, k)
    for layer in params.layers:
        neighbors = knn(g.values, g.values, k)
        gi = gatherRows(g, centers)
        gj = gatherRows(g, neighbors)
        edges = layer.edgeMLP(concatLast([gi, sub(gj, gi)]))
        g = add(layer.selfMLP(g), reduce(edges, 'sum', 1))
    return g


class PSAParams(object):
    """
    The point self-attention weights of one denoiser block.

    The query, key and value MLPs map C -> C, the score MLP maps the 2C
    concatenation of a query and a key to C per-channel scores. The lift is
    a single affine map from C + 3 (features and coordinates) to C, used
    only by the mirror branch.

    @param channels: The C{int} feature width C.
    @param name: The C{str} prefix for parameter names.
    @param generator: A C{numpy.random.Generator} for initialization.
    """
    def __init__(self, channels, name, generator):
        c = channels
        self.queryMLP = MLP(name + '.query', [c, c], generator)
        self.keyMLP = MLP(name + '.key', [c, c], generator)
        self.scoreMLP = MLP(name + '.score', [2 * c, c, c], generator)
        self.valueMLP = MLP(name + '.value', [c, c, c], generator)
        self.lift = MLP(name + '.lift', [c + 3, c], generator)

    def parameters(self):
        return _collect(self.queryMLP, self.keyMLP, self.scoreMLP,
                        self.valueMLP, self.lift)


def attend(queries, keys, neighbors, params):
    """
    Channel-wise attention of each query over its neighbors' keys.

    @param queries: An M x C C{Tensor} of query features.
    @param keys: An N x C C{Tensor} of key features.
    @param neighbors: An M x k C{NeighborIndex} (or index array) into the
        rows of C{keys}.
    @param params: A C{PSAParams}.
    @return: An M x C C{Tensor}: for each query i, the sum over neighbors j
        of softmax_j(score_ij) * value_j, computed per channel.
    """
    indices = np.asarray(getattr(neighbors, 'indices', neighbors))
    m, k = indices.shape
    q = gatherRows(params.queryMLP(queries), selfIndex(m, k))
    kj = gatherRows(params.keyMLP(keys), indices)
    weights = softmaxOverNeighbors(params.scoreMLP(concatLast([q, kj])))
    values = gatherRows(params.valueMLP(keys), indices)
    return reduce(mul(weights, values), 'sum', 1)


def psa(features, coords, params, k, neighborOverride=None):
    """
    Point self-attention over coordinate-space neighborhoods.

    @param features: An N x C C{Tensor}.
    @param coords: An N x 3 array (or C{Tensor}) of coordinates used to find
        neighbors.
    @param params: A C{PSAParams}.
    @param k: The C{int} neighborhood size (self included).
    @param neighborOverride: A C{NeighborIndex} to use instead of the
        coordinate k-NN.
    @raise ParameterError: If k > N - 1.
    @return: An N x C C{Tensor}.
    """
    n = features.shape[0]
    if neighborOverride is None:
        if k > n - 1:
            raise ParameterError('Attention needs k=%d <= N - 1 = %d.' %
                                 (k, n - 1))
        coords = getattr(coords, 'values', coords)
        neighborOverride = knn(coords, coords, k)
    return attend(features, features, neighborOverride, params)


class DecoderParams(object):
    """
    The displacement decoder weights: C -> C/2 -> C/4 -> 3 with ReLU, the
    last layer zero so an untrained decoder predicts no displacement.

    @param channels: The C{int} feature width C.
    @param name: The C{str} prefix for parameter names.
    @param generator: A C{numpy.random.Generator} for initialization.
    @param zeroLast: If C{False}, the last layer is randomly initialized.
    """
    def __init__(self, channels, name, generator, zeroLast=True):
        self.mlp = MLP(name, [channels, max(1, channels // 2),
                              max(1, channels // 4), 3],
                       generator, zeroLast=zeroLast)

    def parameters(self):
        return self.mlp.parameters()


def decode(features, params, maxStep):
    """
    Predict a bounded displacement per point.

    @param features: An N x C C{Tensor}.
    @param params: A C{DecoderParams}.
    @param maxStep: The C{float} displacement bound.
    @return: An N x 3 C{Tensor} with entries in (-maxStep, maxStep).
    """
    return scale(pointwise(params.mlp(features), 'tanh'), maxStep)
