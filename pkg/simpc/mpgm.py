"""
Mirror-point generation and the training objectives.

The mirror branch of a denoiser block pushes each point further along its
predicted displacement (by w2 rather than w1), gathers a fresh neighborhood
around that mirror point, and denoises it with the block's own attention
and decoder weights. The consistency loss pulls the denoised seed and the
denoised mirror point together.
"""

from __future__ import division

import numpy as np

from simpc.errors import ParameterError, StateError
from simpc.geometry import PointCloud, knn
from simpc.layers import attend, decode, encode, psa
from simpc.metrics import DEFAULT_EMD_CAP, differentiableChamfer, emd
from simpc.tensor import (
    add, concatLast, constant, gatherRows, mse, reshape, scale, square,
    sub, sumAll)
from simpc.utils import rng

LOSS_MODES = ('simpc', 'sr_cd_only', 'sr_emd_only', 'noise_baseline')

MIRROR_NEIGHBORHOODS = ('current', 'input')


class MirrorTriple(object):
    """
    The seed, mirror and denoised points of one block, one row per point.

    All attributes are N x 3 C{Tensor}s.

    @param seed: The block's input points x.
    @param xHat: The denoised seed points x + w1 * d.
    @param xTilde: The mirror points x + w2 * d.
    @param xBar: The denoised mirror points xTilde + dTilde.
    @param d: The main-branch displacements.
    @param dTilde: The mirror-branch displacements.
    """
    def __init__(self, seed, xHat, xTilde, xBar, d, dTilde):
        self.seed = seed
        self.xHat = xHat
        self.xTilde = xTilde
        self.xBar = xBar
        self.d = d
        self.dTilde = dTilde

    def __len__(self):
        return self.seed.shape[0]


def mirrorBranch(x, u, d, reference, psaParams, decoderParams, hyper):
    """
    Generate and denoise the mirror points of one block.

    The neighbors of mirror point i are its k nearest points of
    C{reference}, point i itself excluded. Queries and keys are lifted from
    the concatenation of features and coordinates ([u_i || xTilde_i] for the
    query, [u_j || x_j] for the keys).

    @param x: The block's N x 3 input coordinate C{Tensor}.
    @param u: The block's N x C input feature C{Tensor}.
    @param d: The block's N x 3 displacement C{Tensor}.
    @param reference: The N x 3 coordinate C{Tensor} neighbors are drawn
        from (rows correspond to the rows of C{u}).
    @param psaParams: The block's C{PSAParams}.
    @param decoderParams: The block's C{DecoderParams}.
    @param hyper: The C{ModelHyper}.
    @raise ParameterError: If w2 <= w1 or N <= k + 1.
    @return: A C{MirrorTriple}.
    """
    n = x.shape[0]
    if not hyper.w2 > hyper.w1:
        raise ParameterError('The mirror scaling w2 (%r) must exceed w1 (%r).'
                             % (hyper.w2, hyper.w1))
    if n <= hyper.k + 1:
        raise ParameterError('Mirror neighborhoods need more than k + 1 = %d '
                             'points (got %d).' % (hyper.k + 1, n))

    xHat = add(x, scale(d, hyper.w1))
    xTilde = add(x, scale(d, hyper.w2))
    neighbors = knn(xTilde.values, reference.values, hyper.k,
                    exclude=np.arange(n))
    queries = psaParams.lift(concatLast([u, xTilde]))
    keys = psaParams.lift(concatLast([u, reference]))
    dTilde = decode(attend(queries, keys, neighbors, psaParams),
                    decoderParams, hyper.maxStep)
    xBar = add(xTilde, dTilde)
    return MirrorTriple(x, xHat, xTilde, xBar, d, dTilde)


def mpcLoss(triple):
    """
    The mirror-point consistency loss: the sum over points of the squared
    distance between the denoised seed and the denoised mirror point.

    @param triple: A C{MirrorTriple}.
    @return: A scalar C{Tensor}.
    """
    return sumAll(square(sub(triple.xHat, triple.xBar)))


def srLoss(trajA, trajB, block):
    """
    The similarity regularization of one block across two noisy variants.

    @param trajA: The C{DenoiseTrajectory} of the first variant.
    @param trajB: The C{DenoiseTrajectory} of the second variant.
    @param block: The C{int} block number, from 1 to L.
    @raise ParameterError: If either trajectory lacks the block.
    @return: A scalar C{Tensor}: CD(Xa^l, Xb^l) + CD(Xa^(l-1), Xb^l) +
        CD(Xb^(l-1), Xa^l).
    """
    if not (1 <= block <= len(trajA) and block <= len(trajB)):
        raise ParameterError('Block %d is not in both trajectories.' % block)
    a, b = trajA.clouds, trajB.clouds
    return add(add(differentiableChamfer(a[block], b[block]),
                   differentiableChamfer(a[block - 1], b[block])),
               differentiableChamfer(b[block - 1], a[block]))


def differentiableEMD(x, y, cap=DEFAULT_EMD_CAP):
    """
    The EMD between two coordinate tensors, with the optimal assignment
    found once and held fixed so gradients flow to the coordinates.

    @param x: An N x 3 C{Tensor}.
    @param y: An N x 3 C{Tensor}.
    @param cap: The C{int} largest N allowed.
    @raise ParameterError: If the sizes differ.
    @raise CapacityError: If N exceeds C{cap}.
    @return: A scalar C{Tensor} equal to C{emd(x, y).cost}.
    """
    assignment = emd(x.values, y.values, cap)
    matched = reshape(gatherRows(y, assignment.mapping[:, None]), y.shape)
    return scale(mse(x, matched), 3.0)


def emdTerms(trajA, trajB, cap=DEFAULT_EMD_CAP):
    """
    The EMD objective of two trajectories: EMD(Xa^L, Xb^0) +
    EMD(Xb^L, Xa^0) + EMD(Xa^L, Xb^L).

    @return: A scalar C{Tensor}.
    """
    a0, aL = trajA.clouds[0], trajA.clouds[-1]
    b0, bL = trajB.clouds[0], trajB.clouds[-1]
    return add(add(differentiableEMD(aL, b0, cap),
                   differentiableEMD(bL, a0, cap)),
               differentiableEMD(aL, bL, cap))


class LossBreakdown(object):
    """
    A total loss and the terms it was summed from.

    @param total: The scalar C{Tensor} to differentiate.
    @param mpc: A C{list} of per-block scalar C{Tensor}s (weighted) of the
        consistency loss of both variants.
    @param sr: A C{list} of per-block scalar C{Tensor}s of the similarity
        regularization.
    @param baseline: A C{list} of baseline objective C{Tensor}s.
    """
    def __init__(self, total, mpc=(), sr=(), baseline=()):
        self.total = total
        self.mpc = list(mpc)
        self.sr = list(sr)
        self.baseline = list(baseline)

    def values(self):
        """
        Get the loss values as floats, for logging.

        @return: A C{dict} with keys 'total', 'mpc', 'sr' and 'baseline'.
        """
        return {
            'total': self.total.item(),
            'mpc': sum(t.item() for t in self.mpc),
            'sr': sum(t.item() for t in self.sr),
            'baseline': sum(t.item() for t in self.baseline),
        }


def _sum(tensors):
    total = tensors[0]
    for tensor in tensors[1:]:
        total = add(total, tensor)
    return total


def totalLoss(trajA, trajB, mode='simpc', lambdaMPC=1.0,
              emdCap=DEFAULT_EMD_CAP):
    """
    Assemble the training objective for a pair of trajectories.

    @param trajA: The C{DenoiseTrajectory} of the first variant.
    @param trajB: The C{DenoiseTrajectory} of the second variant.
    @param mode: One of 'simpc' (consistency plus similarity, summed over
        blocks), 'sr_cd_only' (similarity only) or 'sr_emd_only' (the EMD
        objective). The 'noise_baseline' mode does not use trajectory pairs,
        see C{baselineNoiseLoss}.
    @param lambdaMPC: The C{float} weight of the consistency term.
    @param emdCap: The C{int} largest cloud size for EMD.
    @raise ParameterError: If the mode is unknown or is 'noise_baseline', or
        the trajectories have different numbers of blocks.
    @raise StateError: In 'simpc' mode, if a trajectory has no mirror
        records.
    @return: A C{LossBreakdown}.
    """
    if mode not in LOSS_MODES:
        raise ParameterError('Unknown loss mode %r. Known modes are: %s.' %
                             (mode, ', '.join(LOSS_MODES)))
    if mode == 'noise_baseline':
        raise ParameterError('The noise baseline is computed from single '
                             'clouds, use baselineNoiseLoss.')
    if len(trajA) != len(trajB):
        raise ParameterError('Trajectories have %d and %d blocks.' %
                             (len(trajA), len(trajB)))

    if mode == 'sr_emd_only':
        term = emdTerms(trajA, trajB, emdCap)
        return LossBreakdown(term, baseline=[term])

    blocks = len(trajA)
    sr = [srLoss(trajA, trajB, block) for block in range(1, blocks + 1)]

    if mode == 'sr_cd_only':
        return LossBreakdown(_sum(sr), sr=sr)

    if trajA.mirrorRecords is None or trajB.mirrorRecords is None:
        raise StateError('The consistency loss needs trajectories computed '
                         'with the mirror branch.')
    mpc = [scale(add(mpcLoss(trajA.mirrorRecords[block]),
                     mpcLoss(trajB.mirrorRecords[block])), lambdaMPC)
           for block in range(blocks)]
    return LossBreakdown(_sum([add(m, s) for m, s in zip(mpc, sr)]),
                         mpc=mpc, sr=sr)


def oneBlockDisplacement(x, params):
    """
    The displacement predicted by the encoder and the first block.

    @param x: An N x 3 coordinate C{Tensor}.
    @param params: A C{ModelParams}.
    @return: An N x 3 C{Tensor}.
    """
    hyper = params.hyper
    psaParams, decoderParams = params.blocks[0]
    u = encode(x, params.encoder, hyper.k)
    return decode(psa(u, x.values, psaParams, hyper.k), decoderParams,
                  hyper.maxStep)


def baselineNoiseLoss(cloud, params, deltaSigma, seed):
    """
    The noise-prediction objective: add fresh Gaussian noise u and ask the
    first block to predict -u.

    @param cloud: A C{PointCloud} or N x 3 array.
    @param params: A C{ModelParams}.
    @param deltaSigma: The C{float} standard deviation of the added noise.
    @param seed: The C{int} seed for the added noise.
    @raise ParameterError: If C{deltaSigma} is negative.
    @return: A scalar C{Tensor}.
    """
    if deltaSigma < 0.0:
        raise ParameterError('The added noise level must be non-negative '
                             '(got %r).' % deltaSigma)
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(
        cloud, dtype=float)
    noise = rng(seed).normal(0.0, deltaSigma, size=points.shape)
    d = oneBlockDisplacement(constant(points + noise), params)
    return mse(d, constant(-noise))


def baselineEMDLoss(cloudA, cloudB, params, cap=DEFAULT_EMD_CAP):
    """
    The EMD objective: match each denoised variant to the other noisy
    variant and the two denoised variants to each other.

    @param cloudA: A C{PointCloud} or N x 3 array.
    @param cloudB: A C{PointCloud} or N x 3 array of the same size.
    @param params: A C{ModelParams}.
    @param cap: The C{int} largest N allowed.
    @raise ParameterError: If the sizes differ.
    @raise CapacityError: If N exceeds C{cap}.
    @return: A scalar C{Tensor}.
    """
    # Imported here since the network module imports this one.
    from simpc.network import denoiseForward

    sizeA, sizeB = len(cloudA), len(cloudB)
    if sizeA != sizeB:
        raise ParameterError('The EMD objective needs equal-size clouds (got '
                             '%d and %d).' % (sizeA, sizeB))
    return emdTerms(denoiseForward(cloudA, params),
                    denoiseForward(cloudB, params), cap)
