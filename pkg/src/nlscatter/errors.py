"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class NLScatterError(Exception):
    """Base class. Unclassified failures are numerical failures."""

    exit_code = 3


class ConfigurationError(NLScatterError, ValueError):
    exit_code = 2


class RejectedInputError(ConfigurationError):
    """Non-finite or malformed input values."""


class UnsupportedOrderError(ConfigurationError):
    pass


class UnsupportedGeneratorError(ConfigurationError):
    pass


class PhaseInvarianceError(ConfigurationError):
    pass


class ExcludedCaseError(ConfigurationError):
    """(n, p) pair outside the covered range."""

    exit_code = 4


class DomainError(NLScatterError, ValueError):
    """Evaluation point outside the periodic box."""


class PotentialError(NLScatterError):
    pass


class PreconditionError(NLScatterError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SupportError(PreconditionError):
    pass


class TruncationError(NLScatterError):
    def __init__(self, message, tail_mass=None):
        super().__init__(message)
        self.tail_mass = tail_mass


class ResolutionError(NLScatterError):
    def __init__(self, message, word=None, tail=None):
        super().__init__(message)
        self.word = word
        self.tail = tail


class SingularityError(NLScatterError):
    pass


class WindowTooSmallError(NLScatterError):
    pass


class StepSizeError(NLScatterError):
    pass


class NonContractionError(NLScatterError):
    def __init__(self, message, history=None, data_norm=None):
        super().__init__(message)
        self.history = history or []
        self.data_norm = data_norm


class ConvergenceError(NLScatterError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class FixtureError(NLScatterError):
    exit_code = 2


class NotFoundError(NLScatterError):
    exit_code = 2


class InconclusiveRateWarning(UserWarning):
    pass


class BoxEdgeWarning(UserWarning):
    pass
