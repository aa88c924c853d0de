"""Exception hierarchy shared by all modules."""


class BoseGPError(Exception):
    """Base class for every error raised by the package."""


class InvalidPotential(BoseGPError, ValueError):
    pass


class QuadratureFailure(BoseGPError, ArithmeticError):
    pass


class UnphysicalSolution(BoseGPError, ArithmeticError):
    pass


class EigenvalueBracketFailure(BoseGPError, ArithmeticError):
    pass


class AsymmetricModeSet(BoseGPError, ValueError):
    pass


class DimensionBudgetExceeded(BoseGPError, MemoryError):
    def __init__(self, dim, budget, what="basis"):
        super().__init__(f"{what} dimension {dim} exceeds budget {budget}")
        self.dim = dim
        self.budget = budget


class UnknownMode(BoseGPError, KeyError):
    pass


class WrongSector(BoseGPError, ValueError):
    pass


class ModeMismatch(BoseGPError, ValueError):
    pass


class UnsupportedMode(BoseGPError, ValueError):
    pass


class EmptyCutoffSet(BoseGPError, ValueError):
    pass


class KrylovStagnation(BoseGPError, ArithmeticError):
    def __init__(self, residual, message=None):
        super().__init__(message or f"Krylov iteration stagnated at residual {residual:.3e}")
        self.residual = residual


class ConvergenceGuard(BoseGPError, ValueError):
    pass


class NoConvergence(BoseGPError, ArithmeticError):
    def __init__(self, residual, message=None):
        super().__init__(message or f"eigensolver did not converge (best residual {residual:.3e})")
        self.residual = residual


class EmptyWindow(BoseGPError, ValueError):
    pass


class PartitionViolation(BoseGPError, ValueError):
    pass


class ConfigError(BoseGPError, ValueError):
    pass


class DegeneracyWarning(UserWarning):
    pass
