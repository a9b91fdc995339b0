"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Tensor and factor shapes do not agree."""


class FormatError(ValueError):
    """A tensor or model file is malformed."""


class MetricError(ValueError):
    """A metric cannot be evaluated on the given input (e.g. a zero column)."""


class ConfigError(ValueError):
    """A configuration file or value is invalid."""


class ResourceError(MemoryError):
    """The requested object would exceed the configured memory limit."""


class DivergedError(RuntimeError):
    """A solver produced non-finite or exploding factors.

    ``model`` holds the last finite factors, ``trace`` the records emitted
    before divergence, ``iteration`` the step at which it was detected and
    ``progress`` a record of the work counters at that step (NaN metrics).
    """

    def __init__(self, message, model=None, trace=None, iteration=None, progress=None):
        super().__init__(message)
        self.progress = progress
        self.model = model
        self.trace = trace if trace is not None else []
        self.iteration = iteration
