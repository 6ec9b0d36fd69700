from unittest import TestCase

import numpy as np
from six import assertRaisesRegex

from simpc.errors import ParameterError
from simpc.layers import (
    MLP, DecoderParams, EncoderParams, PSAParams, attend, decode, encode,
    encoderWidths, psa, selfIndex)
from simpc.tensor import Tape, constant, gradCheck, sumAll
from simpc.utils import rng


class TestMLP(TestCase):
    """
    Test the MLP class.
    """
    def testShapes(self):
        """
        An MLP must map the last axis from the first to the last width.
        """
        mlp = MLP('m', [3, 5, 2], rng(0))
        out = mlp(constant(np.ones((4, 6, 3))))
        self.assertEqual((4, 6, 2), out.shape)

    def testParameterNames(self):
        """
        Parameters must be named by prefix, layer and kind, in order.
        """
        mlp = MLP('m', [3, 5, 2], rng(0))
        self.assertEqual(['m.0.W', 'm.0.b', 'm.1.W', 'm.1.b'],
                         list(mlp.parameters()))

    def testInitializationBounds(self):
        """
        Weights must lie within +/- sqrt(6 / fan_in).
        """
        mlp = MLP('m', [6, 100, 1], rng(1))
        W, _ = mlp.layers[0]
        self.assertLessEqual(np.abs(W.values).max(), 1.0)
        self.assertGreater(np.abs(W.values).max(), 0.9)

    def testZeroLast(self):
        """
        With zeroLast, the output must be zero.
        """
        mlp = MLP('m', [3, 5, 2], rng(2), zeroLast=True)
        out = mlp(constant(rng(3).standard_normal((7, 3))))
        self.assertEqual(0.0, np.abs(out.values).max())

    def testDeterministic(self):
        """
        The same generator seed must give the same weights.
        """
        a = MLP('m', [3, 5, 2], rng(4))
        b = MLP('m', [3, 5, 2], rng(4))
        for name, tensor in a.parameters().items():
            self.assertTrue(np.array_equal(tensor.values,
                                           b.parameters()[name].values))


class TestEncoder(TestCase):
    """
    Test the dynamic-graph encoder.
    """
    def testWidths(self):
        """
        Encoder widths must start at 3 and double up to the channel count.
        """
        self.assertEqual([3, 16, 32, 64], encoderWidths(64, 3))
        self.assertEqual([3, 4, 8, 16], encoderWidths(16, 3))
        self.assertEqual([3, 8], encoderWidths(8, 1))

    def testOutputShape(self):
        """
        The encoder must produce N x C features.
        """
        params = EncoderParams(16, 3, 4, rng(0))
        out = encode(constant(rng(1).standard_normal((30, 3))), params, 4)
        self.assertEqual((30, 16), out.shape)

    def testTooFewPoints(self):
        """
        A cloud with no more than k points must result in a ParameterError.
        """
        params = EncoderParams(8, 2, 4, rng(0))
        error = r'^The encoder needs more than k=4 points \(got 4\)\.$'
        assertRaisesRegex(self, ParameterError, error, encode,
                          constant(np.zeros((4, 3))), params, 4)

    def testPermutationEquivariant(self):
        """
        Permuting the input points must permute the features the same way.
        """
        params = EncoderParams(8, 2, 4, rng(2))
        generator = rng(3)
        points = generator.standard_normal((25, 3))
        order = generator.permutation(25)
        a = encode(constant(points), params, 4).values
        b = encode(constant(points[order]), params, 4).values
        self.assertTrue(np.allclose(a[order], b, atol=1e-12))

    def testGradients(self):
        """
        Gradients with respect to the coordinates must agree with central
        differences.
        """
        params = EncoderParams(8, 2, 4, rng(4))
        self.assertLess(
            gradCheck(lambda x: sumAll(encode(x, params, 4)),
                      rng(5).standard_normal((12, 3)), step=1e-7), 1e-4)


class TestAttention(TestCase):
    """
    Test point self-attention.
    """
    def testSelfIndex(self):
        """
        selfIndex must repeat each row index k times.
        """
        self.assertEqual([[0, 0], [1, 1], [2, 2]], selfIndex(3, 2).tolist())

    def testShape(self):
        """
        Attention must produce one C-vector per point.
        """
        params = PSAParams(8, 'psa', rng(0))
        generator = rng(1)
        coords = generator.standard_normal((20, 3))
        features = constant(generator.standard_normal((20, 8)))
        self.assertEqual((20, 8), psa(features, coords, params, 5).shape)

    def testTooLargeK(self):
        """
        A k larger than N - 1 must result in a ParameterError.
        """
        params = PSAParams(8, 'psa', rng(0))
        error = r'^Attention needs k=5 <= N - 1 = 4\.$'
        assertRaisesRegex(self, ParameterError, error, psa,
                          constant(np.zeros((5, 8))), np.zeros((5, 3)),
                          params, 5)

    def testConvexCombination(self):
        """
        With a single neighbor, the attention output must be that
        neighbor's value.
        """
        params = PSAParams(4, 'psa', rng(2))
        keys = constant(rng(3).standard_normal((6, 4)))
        neighbors = np.array([[2], [5]])
        out = attend(constant(np.zeros((2, 4))), keys, neighbors, params)
        values = params.valueMLP(keys).values
        self.assertTrue(np.allclose(values[[2, 5]], out.values, atol=1e-12))

    def testGradients(self):
        """
        Gradients with respect to a query MLP weight must agree with central
        differences.
        """
        params = PSAParams(4, 'psa', rng(4))
        generator = rng(5)
        coords = generator.standard_normal((10, 3))
        features = generator.standard_normal((10, 4))
        self.assertLess(
            gradCheck(lambda t: _withWeight(params, t, features, coords),
                      params.queryMLP.layers[0][0].values, step=1e-7), 1e-4)


def _withWeight(params, weight, features, coords):
    """
    Run attention with the first query weight replaced by a tensor.
    """
    bias = params.queryMLP.layers[0][1]
    saved = params.queryMLP.layers[0]
    params.queryMLP.layers[0] = (weight, bias)
    try:
        return sumAll(psa(constant(features), coords, params, 3))
    finally:
        params.queryMLP.layers[0] = saved


class TestDecoder(TestCase):
    """
    Test the displacement decoder.
    """
    def testZeroInitialized(self):
        """
        A new decoder must predict no displacement.
        """
        params = DecoderParams(8, 'decoder', rng(0))
        out = decode(constant(rng(1).standard_normal((10, 8))), params, 0.5)
        self.assertEqual((10, 3), out.shape)
        self.assertEqual(0.0, np.abs(out.values).max())

    def testBounded(self):
        """
        Displacements must lie strictly within the step bound.
        """
        params = DecoderParams(8, 'decoder', rng(2), zeroLast=False)
        features = constant(100.0 * rng(3).standard_normal((50, 8)))
        out = decode(features, params, 0.25)
        self.assertLess(np.abs(out.values).max(), 0.25)

    def testSaturatedBound(self):
        """
        Saturated displacements must still lie strictly within the step
        bound.
        """
        params = DecoderParams(8, 'decoder', rng(5), zeroLast=False)
        features = constant(1e6 * rng(6).standard_normal((50, 8)))
        for maxStep in 0.25, 0.3, 1.0:
            largest = np.abs(decode(features, params, maxStep).values).max()
            self.assertLess(largest, maxStep)
            self.assertGreater(largest, maxStep * (1.0 - 1e-12))

    def testWidths(self):
        """
        The decoder must narrow C -> C/2 -> C/4 -> 3.
        """
        params = DecoderParams(16, 'decoder', rng(0))
        self.assertEqual([16, 8, 4, 3], params.mlp.widths)

    def testGradientFlows(self):
        """
        A zero-initialized decoder must still pass a gradient to its last
        layer.
        """
        params = DecoderParams(8, 'decoder', rng(4))
        features = constant(rng(5).standard_normal((10, 8)))
        W, _ = params.mlp.layers[-1]
        with Tape() as tape:
            loss = sumAll(decode(features, params, 1.0))
        self.assertGreater(np.abs(tape.backward(loss)[W]).max(), 0.0)

    def testParameterTensors(self):
        """
        All decoder weights must be trainable.
        """
        params = DecoderParams(8, 'decoder', rng(0))
        self.assertTrue(all(t.requiresGrad
                            for t in params.parameters().values()))
