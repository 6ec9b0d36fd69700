"""
Reverse-mode automatic differentiation over dense 64-bit float arrays.

Operations are plain functions taking and returning C{Tensor} instances.
When a C{Tape} is active (used as a context manager) and at least one input
requires a gradient, each operation appends a node holding its inputs, its
output and a function mapping the output gradient to input gradients.
C{Tape.backward} then sweeps the nodes in reverse order.
"""

from __future__ import division

import json
import struct
import threading
from collections import OrderedDict

import numpy as np

from simpc.errors import (
    EvaluationError, NumericError, ParameterError, ParseError, StateError)
from simpc.utils import atomicWrite, rng

_local = threading.local()


def _activeTape():
    stack = getattr(_local, 'tapes', None)
    return stack[-1] if stack else None


class Tensor(object):
    """
    A dense array of 64-bit floats that can take part in differentiation.

    @param values: Something convertible to a C{float} numpy array.
    @param requiresGrad: If C{True}, operations on this tensor are recorded
        on the active tape and its gradient can be looked up after
        C{Tape.backward}.
    @param name: An optional C{str} name (used for parameters).
    """
    def __init__(self, values, requiresGrad=False, name=None):
        self.values = np.array(values, dtype=float)
        self.requiresGrad = requiresGrad
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return len(self.values)

    def __repr__(self):
        return '<Tensor%s shape=%s%s>' % (
            (' %s' % self.name) if self.name else '', self.values.shape,
            ' requiresGrad' if self.requiresGrad else '')

    def item(self):
        """
        Get the value of a single-element tensor.

        @return: A C{float}.
        """
        return float(self.values.reshape(-1)[0])


def parameter(values, name=None):
    """
    Make a trainable tensor.

    @param values: Something convertible to a C{float} array.
    @param name: An optional C{str} name.
    @return: A C{Tensor} that requires a gradient.
    """
    return Tensor(values, requiresGrad=True, name=name)


def constant(values):
    """
    Make a tensor that never receives a gradient.

    @param values: Something convertible to a C{float} array.
    @return: A C{Tensor}.
    """
    return Tensor(values, requiresGrad=False)


class _Node(object):
    __slots__ = ('inputs', 'output', 'backward', 'op')

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Gradients(object):
    """
    The gradients computed by C{Tape.backward}, looked up by tensor.

    Tensors that did not influence the loss get a zero gradient.
    """
    def __init__(self, leaves):
        self._leaves = leaves

    def __getitem__(self, tensor):
        entry = self._leaves.get(id(tensor))
        if entry is None or entry[0] is not tensor:
            return np.zeros_like(tensor.values)
        return entry[1]

    def __contains__(self, tensor):
        entry = self._leaves.get(id(tensor))
        return entry is not None and entry[0] is tensor

    def forParameters(self, params):
        """
        Collect gradients for named parameters.

        @param params: A C{dict} of C{str} name to C{Tensor}.
        @return: An C{OrderedDict} of name to gradient array, in the order of
            C{params}.
        """
        return OrderedDict((name, self[tensor])
                           for name, tensor in params.items())


class Tape(object):
    """
    Record operations for reverse-mode differentiation.

    Use as a context manager. Tapes nest, and each thread has its own stack
    of active tapes, so distinct tapes can be used concurrently.
    """
    def __init__(self):
        self.nodes = []
        self._done = False

    def __enter__(self):
        if self._done:
            raise StateError('A tape cannot be re-entered after backward.')
        stack = getattr(_local, 'tapes', None)
        if stack is None:
            stack = _local.tapes = []
        stack.append(self)
        return self

    def __exit__(self, excType, excValue, traceback):
        stack = _local.tapes
        assert stack and stack[-1] is self, 'Tape stack is corrupted.'
        stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, op, inputs, output, backward):
        self.nodes.append(_Node(op, inputs, output, backward))

    def backward(self, loss):
        """
        Compute the gradient of a scalar loss with respect to every tensor
        recorded on this tape.

        @param loss: A single-element C{Tensor} produced on this tape.
        @raise ParameterError: If C{loss} is not a scalar.
        @raise StateError: If backward has already been run on this tape.
        @return: A C{Gradients} instance.
        """
        if self._done:
            raise StateError('Backward has already been run on this tape. '
                             'Run the forward pass again first.')
        if loss.values.size != 1:
            raise ParameterError('Backward needs a scalar loss (got shape '
                                 '%s).' % (loss.values.shape,))
        self._done = True

        grads = {id(loss): np.ones_like(loss.values)}
        produced = set()

        for node in reversed(self.nodes):
            produced.add(id(node.output))
            gradOutput = grads.pop(id(node.output), None)
            if gradOutput is None:
                continue
            inputGrads = node.backward(gradOutput)
            for tensor, grad in zip(node.inputs, inputGrads):
                if grad is None or not tensor.requiresGrad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad

        # Whatever remains belongs to leaves (tensors no node produced).
        leaves = {}
        for node in self.nodes:
            for tensor in node.inputs:
                key = id(tensor)
                if key in grads and key not in produced:
                    leaves[key] = (tensor, grads[key])
        if id(loss) in grads and id(loss) not in produced:
            leaves[id(loss)] = (loss, grads[id(loss)])

        self.nodes = []
        return Gradients(leaves)


def _result(op, values, inputs, backward):
    """
    Wrap the output of an operation, checking it and recording it.

    @param op: The C{str} operation name, for error messages.
    @param values: The output C{numpy} array.
    @param inputs: A C{tuple} of input C{Tensor}s.
    @param backward: A function mapping the output gradient to a C{tuple}
        of input gradients (C{None} for inputs without one).
    @raise NumericError: If any output value is not finite.
    @return: A C{Tensor}.
    """
    if not np.all(np.isfinite(values)):
        raise NumericError('Operation %s produced a non-finite value.' % op)
    tape = _activeTape()
    needsGrad = tape is not None and any(t.requiresGrad for t in inputs)
    output = Tensor(values, requiresGrad=needsGrad)
    if needsGrad:
        tape.record(op, inputs, output, backward)
    return output


def _sameShape(op, x, y):
    if x.shape != y.shape:
        raise ParameterError('%s: shape mismatch %s vs %s.' %
                             (op, x.shape, y.shape))


def affine(x, W, b):
    """
    Compute C{x @ W + b} over the last axis of C{x}.

    @param x: A C{Tensor} of shape (..., D_in).
    @param W: A C{Tensor} of shape (D_in, D_out).
    @param b: A C{Tensor} of shape (D_out,).
    @raise ParameterError: If the shapes do not conform.
    @return: A C{Tensor} of shape (..., D_out).
    """
    if (W.values.ndim != 2 or b.values.ndim != 1 or x.values.ndim < 1 or
            x.shape[-1] != W.shape[0] or W.shape[1] != b.shape[0]):
        raise ParameterError('affine: shapes %s, %s, %s do not conform.' %
                             (x.shape, W.shape, b.shape))
    xv, Wv = x.values, W.values
    dIn, dOut = Wv.shape

    def backward(g):
        flatG = g.reshape(-1, dOut)
        return (g @ Wv.T,
                xv.reshape(-1, dIn).T @ flatG,
                flatG.sum(axis=0))

    return _result('affine', xv @ Wv + b.values, (x, W, b), backward)


def pointwise(x, kind):
    """
    Apply an elementwise activation.

    @param x: A C{Tensor}.
    @param kind: Either 'relu' or 'tanh'.
    @raise ParameterError: If C{kind} is unknown.
    @return: A C{Tensor} of the same shape.
    """
    if kind == 'relu':
        positive = x.values > 0.0
        return _result('relu', np.where(positive, x.values, 0.0), (x,),
                       lambda g: (g * positive,))
    elif kind == 'tanh':
        # Keep the output strictly inside (-1, 1), which np.tanh reaches
        # exactly for |x| above about 19.
        bound = np.nextafter(1.0, 0.0)
        out = np.clip(np.tanh(x.values), -bound, bound)
        return _result('tanh', out, (x,), lambda g: (g * (1.0 - out * out),))
    else:
        raise ParameterError('Unknown activation %r.' % kind)


def gatherRows(x, idx):
    """
    Gather rows of a 2D tensor by an index matrix.

    @param x: A C{Tensor} of shape N x C.
    @param idx: An M x k C{int} array, or a C{NeighborIndex}.
    @raise ParameterError: If an index is out of range.
    @return: A C{Tensor} of shape M x k x C with C{out[i, j] = x[idx[i, j]]}.
    """
    idx = np.asarray(getattr(idx, 'indices', idx), dtype=np.int64)
    n = x.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ParameterError('gatherRows: indices must be in [0, %d).' % n)
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape)
        np.add.at(gx, idx, g)
        return (gx,)

    return _result('gatherRows', x.values[idx], (x,), backward)


def concatLast(xs):
    """
    Concatenate tensors along their last axis.

    @param xs: A C{list} of C{Tensor}s whose shapes agree except in the last
        axis.
    @raise ParameterError: If the leading dimensions differ.
    @return: A C{Tensor}.
    """
    xs = tuple(xs)
    if not xs:
        raise ParameterError('concatLast: nothing to concatenate.')
    leading = xs[0].shape[:-1]
    for x in xs[1:]:
        if x.shape[:-1] != leading:
            raise ParameterError('concatLast: leading dimensions %s and %s '
                                 'differ.' % (leading, x.shape[:-1]))
    splits = np.cumsum([x.shape[-1] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=-1))

    return _result('concatLast',
                   np.concatenate([x.values for x in xs], axis=-1), xs,
                   backward)


def softmaxOverNeighbors(x):
    """
    Softmax along the neighbor axis, separately for every point and channel.

    @param x: A C{Tensor} of shape N x k x C.
    @raise ParameterError: If C{x} is not three dimensional.
    @return: A C{Tensor} of shape N x k x C whose entries, summed over the
        second axis, give one.
    """
    if x.values.ndim != 3:
        raise ParameterError('softmaxOverNeighbors needs an N x k x C tensor '
                             '(got shape %s).' % (x.shape,))
    e = np.exp(x.values - x.values.max(axis=1, keepdims=True))
    out = e / _sequentialSum(e, 1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _result('softmaxOverNeighbors', out, (x,), backward)


def _sequentialSum(values, axis=None, keepdims=False):
    """
    Sum strictly left to right. numpy's own sums add in pairs.

    @param values: A C{float} array.
    @param axis: The C{int} axis to sum over, or C{None} for all elements.
    @param keepdims: If C{True}, keep the summed axis with length one.
    @return: A C{float} array (0-d when C{axis} is C{None}).
    """
    if axis is None:
        values = values.reshape(-1)
        return (np.cumsum(values)[-1] if values.size else
                np.float64(0.0))
    if values.shape[axis] == 0:
        return values.sum(axis=axis, keepdims=keepdims)
    total = np.take(np.cumsum(values, axis=axis), [-1], axis=axis)
    return total if keepdims else np.squeeze(total, axis=axis)


def reduce(x, kind, axis):
    """
    Sum or average a tensor over one axis.

    @param x: A C{Tensor}.
    @param kind: Either 'sum' or 'mean'.
    @param axis: The C{int} axis to reduce.
    @raise ParameterError: If C{kind} or C{axis} is invalid.
    @return: A C{Tensor} with the axis removed.
    """
    if kind not in ('sum', 'mean'):
        raise ParameterError('Unknown reduction %r.' % kind)
    ndim = x.values.ndim
    if not -ndim <= axis < ndim:
        raise ParameterError('reduce: axis %d out of range for shape %s.' %
                             (axis, x.shape))
    axis %= ndim
    shape = x.shape
    count = shape[axis]
    values = _sequentialSum(x.values, axis)
    if kind == 'mean':
        values = values / count

    def backward(g):
        g = np.broadcast_to(np.expand_dims(g, axis), shape)
        return (g / count if kind == 'mean' else g.copy(),)

    return _result(kind, values, (x,), backward)


def add(x, y):
    """
    Add two tensors of the same shape.
    """
    _sameShape('add', x, y)
    return _result('add', x.values + y.values, (x, y), lambda g: (g, g))


def sub(x, y):
    """
    Subtract two tensors of the same shape.
    """
    _sameShape('sub', x, y)
    return _result('sub', x.values - y.values, (x, y), lambda g: (g, -g))


def mul(x, y):
    """
    Multiply two tensors of the same shape elementwise.
    """
    _sameShape('mul', x, y)
    xv, yv = x.values, y.values
    return _result('mul', xv * yv, (x, y), lambda g: (g * yv, g * xv))


def scale(x, factor):
    """
    Multiply a tensor by a constant.

    @param x: A C{Tensor}.
    @param factor: A C{float}.
    @return: A C{Tensor}.
    """
    factor = float(factor)
    return _result('scale', x.values * factor, (x,),
                   lambda g: (g * factor,))


def square(x):
    xv = x.values
    return _result('square', xv * xv, (x,), lambda g: (2.0 * g * xv,))


def sumAll(x):
    """
    Sum every element of a tensor.

    @param x: A C{Tensor}.
    @return: A scalar C{Tensor}.
    """
    shape = x.shape
    return _result('sumAll', np.array(_sequentialSum(x.values)), (x,),
                   lambda g: (np.full(shape, float(g)),))


def reshape(x, shape):
    """
    Give a tensor a new shape with the same number of elements.
    """
    original = x.shape
    try:
        values = x.values.reshape(shape)
    except ValueError:
        raise ParameterError('Cannot reshape %s to %s.' % (original, shape))
    return _result('reshape', values, (x,),
                   lambda g: (g.reshape(original),))


def mse(a, b):
    """
    The mean of the squared differences of two same-shaped tensors.

    @param a: A C{Tensor}.
    @param b: A C{Tensor} with the same shape as C{a}.
    @raise ParameterError: If the shapes differ.
    @return: A scalar C{Tensor}.
    """
    _sameShape('mse', a, b)
    diff = a.values - b.values
    count = diff.size

    def backward(g):
        ga = (2.0 * float(g) / count) * diff
        return (ga, -ga)

    return _result('mse', np.array(_sequentialSum(diff * diff) / count),
                   (a, b), backward)


class AdamState(object):
    """
    The state of an Adam optimizer.

    @param lr: The C{float} learning rate.
    @param beta1: The C{float} first-moment decay.
    @param beta2: The C{float} second-moment decay.
    @param eps: The C{float} denominator offset.
    """
    DEFAULT_LR = 1e-4
    DEFAULT_BETA1 = 0.9
    DEFAULT_BETA2 = 0.999
    DEFAULT_EPS = 1e-8

    def __init__(self, lr=DEFAULT_LR, beta1=DEFAULT_BETA1,
                 beta2=DEFAULT_BETA2, eps=DEFAULT_EPS):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = OrderedDict()
        self.v = OrderedDict()

    def tensors(self):
        """
        Get the moment accumulators as named arrays, for checkpointing.

        @return: An C{OrderedDict} of C{str} name to array.
        """
        result = OrderedDict()
        for name in self.m:
            result['adam.m.' + name] = self.m[name]
            result['adam.v.' + name] = self.v[name]
        return result


def adamStep(params, grads, state):
    """
    Take one Adam step, with bias correction.

    New value arrays are assigned to the parameter tensors, so arrays held
    by earlier tapes are never changed.

    @param params: A C{dict} of C{str} name to C{Tensor}.
    @param grads: A C{dict} of C{str} name to gradient array.
    @param state: An C{AdamState}, updated in place.
    @raise ParameterError: If a gradient's shape does not match its
        parameter.
    @return: C{params}.
    """
    for name, tensor in params.items():
        grad = np.asarray(grads[name], dtype=float)
        if grad.shape != tensor.shape:
            raise ParameterError('adamStep: gradient for %r has shape %s but '
                                 'the parameter has shape %s.' %
                                 (name, grad.shape, tensor.shape))

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for name, tensor in params.items():
        grad = np.asarray(grads[name], dtype=float)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(tensor.values)
            v = np.zeros_like(tensor.values)
        else:
            v = state.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        tensor.values = tensor.values - state.lr * (m / correction1) / (
            np.sqrt(v / correction2) + state.eps)

    return params


def _evaluate(fn, values):
    """
    Evaluate a scalar tensor function without recording.

    @raise EvaluationError: If the function value is not finite.
    """
    try:
        result = fn(Tensor(values))
    except NumericError as e:
        raise EvaluationError('Function is not finite at a perturbed point: '
                              '%s' % e)
    value = result.item()
    if not np.isfinite(value):
        raise EvaluationError('Function value %r is not finite.' % value)
    return value


def gradCheck(fn, point, step=1e-5):
    """
    Compare automatic and central-difference gradients of a scalar function.

    @param fn: A function taking one C{Tensor} and returning a scalar
        C{Tensor} computed with the operations of this module.
    @param point: Something convertible to a C{float} array: where to check.
    @param step: The C{float} central-difference step.
    @raise EvaluationError: If C{fn} is not finite at a perturbed point.
    @return: The C{float} maximum over coordinates of
        |g_auto - g_fd| / max(1, |g_fd|).
    """
    point = np.array(point, dtype=float)
    x = Tensor(point.copy(), requiresGrad=True)
    with Tape() as tape:
        loss = fn(x)
    auto = tape.backward(loss)[x]

    worst = 0.0
    flat = point.reshape(-1)
    autoFlat = auto.reshape(-1)
    for i in range(flat.size):
        plus = flat.copy()
        plus[i] += step
        minus = flat.copy()
        minus[i] -= step
        fd = (_evaluate(fn, plus.reshape(point.shape)) -
              _evaluate(fn, minus.reshape(point.shape))) / (2.0 * step)
        worst = max(worst, abs(autoFlat[i] - fd) / max(1.0, abs(fd)))
    return worst


def gradCheckParameters(lossFn, params, count=20, seed=0, step=1e-5):
    """
    Compare automatic and central-difference gradients of a loss with
    respect to randomly chosen parameter coordinates.

    @param lossFn: A function of no arguments returning a scalar C{Tensor}
        computed from the tensors in C{params}.
    @param params: A C{dict} of C{str} name to C{Tensor}.
    @param count: The C{int} number of coordinates to check.
    @param seed: The C{int} seed for choosing coordinates.
    @param step: The C{float} central-difference step.
    @raise EvaluationError: If the loss is not finite at a perturbed point.
    @return: The C{float} maximum relative error over the checked
        coordinates.
    """
    with Tape() as tape:
        loss = lossFn()
    grads = tape.backward(loss)

    names = list(params)
    sizes = np.array([params[name].values.size for name in names])
    total = int(sizes.sum())
    chosen = rng(seed).choice(total, size=min(count, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def value():
        try:
            result = lossFn().item()
        except NumericError as e:
            raise EvaluationError('Loss is not finite at a perturbed point: '
                                  '%s' % e)
        if not np.isfinite(result):
            raise EvaluationError('Loss value %r is not finite.' % result)
        return result

    worst = 0.0
    for flatIndex in sorted(chosen):
        which = int(np.searchsorted(offsets, flatIndex, side='right') - 1)
        tensor = params[names[which]]
        i = flatIndex - offsets[which]
        original = tensor.values
        try:
            plus = original.copy()
            plus.reshape(-1)[i] += step
            tensor.values = plus
            high = value()
            minus = original.copy()
            minus.reshape(-1)[i] -= step
            tensor.values = minus
            low = value()
        finally:
            tensor.values = original
        fd = (high - low) / (2.0 * step)
        auto = grads[tensor].reshape(-1)[i]
        worst = max(worst, abs(auto - fd) / max(1.0, abs(fd)))
    return worst


CHECKPOINT_MAGIC = b'SIMPCKPT'
CHECKPOINT_VERSION = 1


def saveCheckpoint(path, arrays, meta=None):
    """
    Save named arrays in the checkpoint container, plus a JSON manifest
    (C{path} + '.json') listing each array's name, shape and byte offset.

    The container is the magic string, a little-endian C{uint32} version,
    a length-prefixed JSON metadata block, a C{uint32} record count, then
    per record: a length-prefixed UTF-8 name, a C{uint32} number of
    dimensions, C{uint64} dimensions and the row-major little-endian
    64-bit float values.

    @param path: The C{str} file name.
    @param arrays: A C{dict} of C{str} name to C{Tensor} or array.
    @param meta: A JSON-serializable C{dict} of metadata.
    """
    metaBytes = json.dumps(meta or {}, sort_keys=True).encode('utf-8')
    chunks = [CHECKPOINT_MAGIC, struct.pack('<I', CHECKPOINT_VERSION),
              struct.pack('<I', len(metaBytes)), metaBytes,
              struct.pack('<I', len(arrays))]
    offset = sum(len(chunk) for chunk in chunks)
    manifest = []

    for name, array in arrays.items():
        values = np.array(getattr(array, 'values', array), dtype='<f8',
                          order='C')
        nameBytes = name.encode('utf-8')
        header = (struct.pack('<H', len(nameBytes)) + nameBytes +
                  struct.pack('<I', values.ndim) +
                  struct.pack('<%dQ' % values.ndim, *values.shape))
        offset += len(header)
        manifest.append({'name': name, 'shape': list(values.shape),
                         'offset': offset})
        data = values.tobytes()
        offset += len(data)
        chunks.extend([header, data])

    with atomicWrite(path, 'wb') as fp:
        for chunk in chunks:
            fp.write(chunk)

    with atomicWrite(path + '.json') as fp:
        json.dump({'version': CHECKPOINT_VERSION, 'meta': meta or {},
                   'tensors': manifest}, fp, indent=2, sort_keys=True)
        fp.write('\n')


def loadCheckpoint(path):
    """
    Load a checkpoint container written by C{saveCheckpoint}.

    @param path: The C{str} file name.
    @raise ParseError: If the file is not a valid checkpoint.
    @return: A 2-C{tuple} of an C{OrderedDict} of C{str} name to array, and
        the metadata C{dict}.
    """
    with open(path, 'rb') as fp:
        data = fp.read()

    position = [0]

    def take(count):
        start = position[0]
        if start + count > len(data):
            raise ParseError('%s: checkpoint is truncated at byte %d.' %
                             (path, start))
        position[0] = start + count
        return data[start:start + count]

    if take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise ParseError('%s: not a checkpoint file (bad magic).' % path)
    version, = struct.unpack('<I', take(4))
    if version != CHECKPOINT_VERSION:
        raise ParseError('%s: unsupported checkpoint version %d.' %
                         (path, version))
    metaLength, = struct.unpack('<I', take(4))
    try:
        meta = json.loads(take(metaLength).decode('utf-8'))
    except ValueError as e:
        raise ParseError('%s: bad checkpoint metadata: %s' % (path, e))
    count, = struct.unpack('<I', take(4))

    arrays = OrderedDict()
    for _ in range(count):
        nameLength, = struct.unpack('<H', take(2))
        name = take(nameLength).decode('utf-8')
        ndim, = struct.unpack('<I', take(4))
        shape = struct.unpack('<%dQ' % ndim, take(8 * ndim))
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(take(8 * size), dtype='<f8').astype(float)
        arrays[name] = values.reshape(shape)

    return arrays, meta
