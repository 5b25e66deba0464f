"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""


class CvfRankError(Exception):
    exit_code = 1


class InvalidInputError(CvfRankError, ValueError):
    exit_code = 2


class ConfigurationError(CvfRankError, ValueError):
    exit_code = 2


class PreconditionError(CvfRankError, ValueError):
    exit_code = 2


class ParseError(CvfRankError, ValueError):
    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(CvfRankError, MemoryError):
    exit_code = 3


class CyclicOutsideInvariantError(CvfRankError, RuntimeError):
    """The program-transition graph has a cycle among non-invariant states.

    Happens when the value domain K is too small for the ring to self-stabilize.
    """

    exit_code = 4


class NumericFailureError(CvfRankError, ArithmeticError):
    exit_code = 5


class ModelFileError(CvfRankError, ValueError):
    exit_code = 2


class WorkerFaultError(CvfRankError, RuntimeError):
    exit_code = 5
