"""Exception hierarchy shared by every module."""

from __future__ import annotations


class DeePOError(Exception):
    """Base class for all errors raised by this package."""


class Unstable(DeePOError, ArithmeticError):
    """Closed-loop matrix is not Schur stable within the configured margin."""

    def __init__(self, rho: float, margin: float = 0.0):
        self.rho = float(rho)
        self.margin = float(margin)
        super().__init__(f"spectral radius {self.rho:.6g} >= 1 - {self.margin:g}")


class StepUnstable(Unstable):
    """A gradient step left the stability region (stepsize too large)."""

    def __init__(self, rho: float, margin: float = 0.0, iteration: int | None = None):
        super().__init__(rho, margin)
        self.iteration = iteration
        # filled in by the optimizer so callers can inspect the partial run
        self.trace = None
        if iteration is not None:
            self.args = (f"iteration {iteration}: {self.args[0]}",)


class SolveFailure(DeePOError, ArithmeticError):
    """A linear system was numerically singular."""


class NoConvergence(DeePOError, ArithmeticError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = float(residual)
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")


class RankDeficient(DeePOError, ValueError):
    def __init__(self, sigma_min: float, what: str = "matrix"):
        self.sigma_min = float(sigma_min)
        super().__init__(f"{what} is rank deficient (smallest singular value {sigma_min:.3e})")


class NotPSD(DeePOError, ValueError):
    def __init__(self, lambda_min: float):
        self.lambda_min = float(lambda_min)
        super().__init__(f"matrix is not positive semidefinite (lambda_min = {lambda_min:.3e})")


class EigenFailure(DeePOError, ArithmeticError):
    pass


class DimensionMismatch(DeePOError, ValueError):
    pass


class InsufficientData(DeePOError, ValueError):
    def __init__(self, T: int, needed: int):
        self.T = T
        self.needed = needed
        super().__init__(f"data length T={T} is below m+n={needed}")


class GenerationFailure(DeePOError, RuntimeError):
    pass


class ParseError(DeePOError, ValueError):
    pass


class Infeasible(DeePOError, ValueError):
    """The linear constraint X_- G = I is violated."""

    def __init__(self, violation: float):
        self.violation = float(violation)
        super().__init__(f"||X_- G - I||_F = {self.violation:.3e}")


class InfeasibleStart(Infeasible):
    pass


class SingularSigma(DeePOError, ArithmeticError):
    def __init__(self, lambda_min: float):
        self.lambda_min = float(lambda_min)
        super().__init__(f"Sigma is (near) singular: lambda_min = {lambda_min:.3e}")


class InfeasiblePerturbation(DeePOError, ArithmeticError):
    """A finite-difference probe left the domain of the cost."""


class MissingTrace(DeePOError, ValueError):
    pass
