"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: parameter/config errors -> 2,
geometry errors -> 3, solver errors -> 4.
"""


class ParameterError(ValueError):
    """A physical or numerical parameter is outside its admissible range."""


class ConfigError(ParameterError):
    """A run-configuration file is malformed or inconsistent."""


class GeometryError(RuntimeError):
    """Mesh construction produced an invalid geometry (e.g. folded elements)."""


class RefinementError(GeometryError):
    """Resolution too coarse to represent a geometric feature."""


class SolverError(RuntimeError):
    """An iterative or nonlinear solver failed to converge."""
