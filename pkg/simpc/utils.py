from __future__ import print_function

import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from tempfile import NamedTemporaryFile

import numpy as np

from simpc.errors import ParameterError

_threadCount = 1


def s(count):
    """
    Return an 's' unless a count is singular (i.e., one).

    @param count: The C{int} count.
    @return: A C{str}, either '' or 's' depending on whether the count is
        singular.
    """
    return '' if count == 1 else 's'


def commas(iterable):
    """
    Turn an iterable into a sorted comma-separated string.

    @param iterable: An iterable of things to be put into the return string.
    @return: A sorted comma-separated C{str} of the things in C{iterable}.
    """
    return ', '.join(map(str, sorted(iterable)))


def rng(seed, *stream):
    """
    Make a counter-based random number generator.

    The seed and the stream identifiers are folded into the key of a Philox
    generator, so the numbers drawn for (say) shape 3, variant 1 do not depend
    on what else was drawn before or on how work is split across threads.

    @param seed: A non-negative C{int} (64-bit) seed.
    @param stream: Zero or more non-negative C{int} stream identifiers.
    @return: A C{numpy.random.Generator} instance.
    """
    entropy = [int(seed)] + [int(x) for x in stream]
    if any(x < 0 for x in entropy):
        raise ParameterError('Seeds and stream ids must be non-negative '
                             '(got %s).' % commas(entropy))
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy)))


def setThreadCount(count):
    """
    Set the number of worker threads used by the block-parallel kernels
    (k-NN search and point-to-mesh distances).

    @param count: The C{int} number of threads (at least 1).
    """
    global _threadCount
    if count < 1:
        raise ParameterError('Thread count must be at least 1 (got %d).' %
                             count)
    _threadCount = int(count)


def threadCount():
    """
    Get the number of worker threads.

    @return: The C{int} thread count.
    """
    return _threadCount


def mapBlocks(func, starts):
    """
    Apply a function to each block start offset, possibly in parallel.

    Results are returned in the order of C{starts}, so callers that write
    each block into its own slice of an output array get the same answer
    for any thread count.

    @param func: A function of one C{int} block start offset.
    @param starts: An iterable of C{int} block start offsets.
    @return: A C{list} of the results of C{func}, in order.
    """
    starts = list(starts)
    if _threadCount == 1 or len(starts) == 1:
        return [func(start) for start in starts]
    with ThreadPoolExecutor(max_workers=_threadCount) as executor:
        return list(executor.map(func, starts))


def blockSize(rowCost, budget=4000000):
    """
    Choose how many rows to process at once so that a block holds roughly
    C{budget} floats.

    @param rowCost: The C{int} number of floats needed per row.
    @param budget: The C{int} number of floats per block.
    @return: A positive C{int} number of rows.
    """
    return max(1, budget // max(1, rowCost))


@contextmanager
def atomicWrite(path, mode='w'):
    """
    Write a file so that it either appears complete or not at all.

    A temporary file is written in the same directory and renamed over
    C{path} when the with block completes without an exception.

    @param path: The C{str} path of the file to write.
    @param mode: The C{str} open mode, either 'w' or 'wb'.
    """
    directory = os.path.dirname(os.path.abspath(path))
    fp = NamedTemporaryFile(mode=mode, dir=directory, delete=False,
                            prefix='.%s.' % os.path.basename(path))
    try:
        with fp:
            yield fp
        os.replace(fp.name, path)
    except BaseException:
        if os.path.exists(fp.name):
            os.unlink(fp.name)
        raise


class Reporter(object):
    """
    Mix-in providing verbosity-controlled status messages.

    @param verbose: The C{int}, verbosity level. Use C{0} for no output.
    """
    def __init__(self, verbose=0):
        self.verbose = verbose

    def report(self, *args, requiredVerbosityLevel=1):
        """
        Print a status message (to stderr), if our verbose setting is high
        enough.

        @param args: The arguments to print.
        @param requiredVerbosityLevel: The minimum C{int} verbosity
            level required.
        """
        if self.verbose >= requiredVerbosityLevel:
            print(*args, file=sys.stderr)


def deriveSeed(seed, *stream):
    """
    Derive an independent 64-bit seed for a sub-task, e.g. one noisy
    variant of one shape.

    @param seed: A non-negative C{int} seed.
    @param stream: Zero or more non-negative C{int} stream identifiers.
    @return: A non-negative C{int} below 2**63.
    """
    entropy = [int(seed)] + [int(x) for x in stream]
    if any(x < 0 for x in entropy):
        raise ParameterError('Seeds and stream ids must be non-negative '
                             '(got %s).' % commas(entropy))
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))
