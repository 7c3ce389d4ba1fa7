"""Exception types."""


class DgflowError(Exception):
    """Base class for all errors raised by this package."""

    pass


class MeshError(DgflowError):
    """Exception to indicate an invalid mesh or refinement request."""

    def __init__(self, message, cells=None):
        """
        Initialize the object.

        message -- description of the problem
        cells -- list of offending cell indices, if any
        """
        DgflowError.__init__(self, message)
        self.cells = list(cells) if cells is not None else []


class SpaceError(DgflowError):
    """Exception to indicate a bad space, field or evaluation point."""

    pass


class SolverError(DgflowError):
    """Exception to indicate that an iterative solver failed."""

    def __init__(self, message, history=None, iterations=None):
        """
        Initialize the object.

        message -- description of the failure
        history -- residual norms, one per iteration
        iterations -- number of iterations performed
        """
        DgflowError.__init__(self, message)
        self.history = list(history) if history is not None else []
        self.iterations = iterations


class FixedPointError(SolverError):
    """Exception to indicate that a fixed-point loop did not converge."""

    pass


class ConfigError(DgflowError):
    """Exception to indicate an invalid case configuration."""

    def __init__(self, problems):
        """
        Initialize the object.

        problems -- list of every violated constraint
        """
        if isinstance(problems, str):
            problems = [problems]

        self.problems = list(problems)
        DgflowError.__init__(
            self, 'Invalid configuration: {}'.format('; '.join(self.problems)))


class AnalysisError(DgflowError):
    """Exception to indicate that a diagnostic cannot be computed."""

    pass
