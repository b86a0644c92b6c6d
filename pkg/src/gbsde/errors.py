"""Exception hierarchy shared by the solvers and the command line."""


class GBSDEError(Exception):
    pass


class ConfigurationError(GBSDEError, ValueError):
    """Discretization or solver settings that cannot produce a valid scheme
    (CFL violation, non-contractive Picard step, ...)."""


class ProblemInputError(GBSDEError, ValueError):
    """Problem data that violates a stated assumption."""


class UnsupportedCaseError(GBSDEError, ValueError):
    pass


class SizeError(GBSDEError, ValueError):
    pass


class ConvergenceError(GBSDEError, RuntimeError):
    def __init__(self, message, ladder=None):
        super().__init__(message)
        self.ladder = ladder
