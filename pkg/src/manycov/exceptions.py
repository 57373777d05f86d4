"""Exception hierarchy used across the package."""

from __future__ import annotations


class ManyCovError(Exception):
    """Base class for all package errors."""


class DesignError(ManyCovError, ValueError):
    """Invalid regression data (shapes, non-finite entries, degrees of freedom)."""


class DesignTooLargeError(ManyCovError, MemoryError):
    def __init__(self, n: int, cap: int):
        self.n = n
        self.cap = cap
        super().__init__(
            f"design too large: n={n} exceeds the memory cap of {cap} observations "
            f"(the dense n x n annihilator would need {8 * n * n / 2**20:.1f} MiB)"
        )


class CollinearityError(ManyCovError, ValueError):
    """The regressors of interest are (numerically) collinear with the nuisance design."""

    def __init__(self, min_eigenvalue: float, threshold: float):
        self.min_eigenvalue = min_eigenvalue
        self.threshold = threshold
        super().__init__(
            f"X collinear with W: minimum eigenvalue of the partialled Gram matrix is "
            f"{min_eigenvalue:.3e} (threshold {threshold:.3e})"
        )


class UnitLeverageError(ManyCovError, ValueError):
    def __init__(self, indices):
        self.indices = list(indices)
        shown = ", ".join(str(i) for i in self.indices[:20])
        more = "" if len(self.indices) <= 20 else f", ... ({len(self.indices)} total)"
        super().__init__(f"unit leverage observation(s) with M_ii = 0: [{shown}{more}]")


class HCKInfeasibleError(ManyCovError, ValueError):
    def __init__(self, mcal: float):
        self.mcal = mcal
        super().__init__(f"HCK infeasible: M_n = {mcal:.6g} is not below 1/2")


class KappaSolveError(ManyCovError, ArithmeticError):
    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class NegativeVarianceError(ManyCovError, ArithmeticError):
    def __init__(self, omega: float):
        self.omega = omega
        super().__init__(f"negative variance estimate: {omega:.6g}")
