class SIMPCError(Exception):
    """
    Base class for all errors raised by simpc.

    Each subclass has a short machine-parsable C{reason} and the C{exitCode}
    that bin/simpc.py exits with when the error reaches the command line.
    """
    reason = 'error'
    exitCode = 1

    def oneLine(self):
        """
        Produce the single line error summary printed by the command line
        tools.

        @return: A C{str} of the form 'reason: message' with no newlines.
        """
        return '%s: %s' % (self.reason, ' '.join(str(self).split()))


class ParameterError(SIMPCError, ValueError):
    reason = 'parameter'
    exitCode = 2


class CapacityError(ParameterError):
    reason = 'capacity'


class SingularityError(ParameterError):
    reason = 'singularity'


class ConfigError(ParameterError):
    reason = 'config'


class StateError(SIMPCError, RuntimeError):
    reason = 'state'
    exitCode = 2


class ParseError(SIMPCError, IOError):
    """
    A file could not be read or parsed. The message names the file and
    (where it makes sense) the 1-based line number.
    """
    reason = 'io'
    exitCode = 3


class NumericError(SIMPCError, ArithmeticError):
    reason = 'numeric'
    exitCode = 4


class EvaluationError(NumericError):
    reason = 'evaluation'


class AcceptanceError(SIMPCError):
    reason = 'acceptance'
    exitCode = 5
