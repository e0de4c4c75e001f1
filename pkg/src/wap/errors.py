"""Exception types shared across the package."""


class WapError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(WapError):
    """A graph or profile file could not be decoded."""


class ShapeError(WapError):
    """Shape inference failed; the message names the node and both shapes."""


class CycleError(WapError):
    """The graph contains a dependency cycle."""


class BuildError(WapError):
    """A training graph could not be constructed from the forward spec."""


class WorkloadError(WapError):
    """Workload extraction or cost-model evaluation was given bad input."""


class TransformError(WapError):
    """A parallelizing rewrite was given a graph it cannot legally rewrite."""


class SimError(WapError):
    """The timing simulator was given an unschedulable graph."""


class EvalError(WapError):
    """The reference interpreter could not execute or compare graphs."""
