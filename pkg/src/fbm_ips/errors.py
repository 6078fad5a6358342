"""Exception hierarchy.

Configuration problems and numerical failures are kept apart so the CLI can
map them to distinct exit codes.
"""


class FbmIpsError(Exception):
    """Base class for all package errors."""


class ConfigError(FbmIpsError, ValueError):
    """Invalid user input: parameters, config keys, incompatible options."""


class NumericalError(FbmIpsError, ArithmeticError):
    """A computation produced an unusable result."""


class CholeskyError(NumericalError):
    def __init__(self, minor: int, size: int):
        super().__init__(
            f"covariance matrix of size {size} is not positive definite: "
            f"leading minor of order {minor} failed"
        )
        self.minor = minor
        self.size = size


class SimulationError(NumericalError):
    def __init__(self, particle: int, node: int, value: float):
        super().__init__(
            f"non-finite state {value!r} for particle {particle} at node {node}"
        )
        self.particle = particle
        self.node = node
        self.value = value


class SingularMatrixError(NumericalError):
    """The design matrix Psi cannot be inverted reliably."""


class DivergenceError(NumericalError):
    def __init__(self, message: str, trajectory):
        super().__init__(message)
        self.trajectory = list(trajectory)
