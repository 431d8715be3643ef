"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``ModelError`` and ``PathError`` are
validation problems (1), ``NumericalError`` covers solver and simulation
failures (2).
"""


class SwitchLDError(Exception):
    """Base class for all package errors."""


class ModelError(SwitchLDError, ValueError):
    """A model definition could not be parsed or failed validation."""

    def __init__(self, message, invariant=None, witness=None):
        super().__init__(message)
        self.invariant = invariant
        self.witness = witness


class ExpressionError(ModelError):
    """Malformed expression text."""

    def __init__(self, message, position=None, source=None):
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)
        self.position = position
        self.source = source


class NumericalError(SwitchLDError, ArithmeticError):
    """Base class for numerical failures."""


class EvaluationError(NumericalError):
    """An expression produced a non-finite value."""

    def __init__(self, message, subexpression=None):
        super().__init__(message)
        self.subexpression = subexpression


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class GridError(ModelError):
    """The cell grid is too coarse for the requested momentum (grid-Péclet)."""

    def __init__(self, message, required_points=None):
        super().__init__(message, invariant="grid-peclet")
        self.required_points = required_points


class SimulationError(NumericalError):
    def __init__(self, message, path_index=None):
        if path_index is not None:
            message = f"path {path_index}: {message}"
        super().__init__(message)
        self.path_index = path_index


class PathError(SwitchLDError, ValueError):
    """Invalid path sample or reference domain."""
