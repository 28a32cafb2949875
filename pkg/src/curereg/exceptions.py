"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
ConvergenceError -> 4.
"""


class CureRegError(Exception):
    """Base class for all package errors."""


class ConfigError(CureRegError):
    """Invalid configuration or option combination."""


class DataError(CureRegError):
    """Malformed, degenerate, or otherwise unusable input data."""


class ConvergenceError(CureRegError):
    """An iterative fit failed to converge.

    Carries diagnostics useful for post-mortems: the last iterate, the
    gradient norm there, and the number of iterations performed.
    """

    def __init__(self, message, *, theta=None, score_norm=None, n_iterations=None):
        super().__init__(message)
        self.theta = theta
        self.score_norm = score_norm
        self.n_iterations = n_iterations
