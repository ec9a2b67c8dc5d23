"""Exception hierarchy shared by all solvers."""


class ClosedRagError(Exception):
    """Base class for every error raised by closedrag."""


class InputError(ClosedRagError, ValueError):
    """Malformed scenario data, bad shapes or bad parameters."""


class SolverError(ClosedRagError, RuntimeError):
    """A numerical routine failed to produce a certified answer."""


class LpError(SolverError):
    """Iteration limit or certificate failure inside the simplex backend."""


class InfeasibleError(SolverError):
    """A problem that was required to be feasible is not."""


class NonConvergenceError(SolverError):
    """An iterative method stopped before meeting its tolerance.

    The best iterate found so far is attached as ``best`` together with
    its residual, so callers can inspect how close the run came.
    """

    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class ParticipationError(SolverError):
    """No type can earn a positive reward, so the log potential is undefined."""


class DivergenceError(SolverError):
    """Queue-delay dynamics left the a-priori bounded region."""
