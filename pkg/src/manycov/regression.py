"""Partialled-out OLS for the coefficients on the regressors of interest."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .design import AnnihilatorRep, RegressionData
from .exceptions import CollinearityError, DesignError

GRAM_EIG_TOL = 1e-12


@dataclass(frozen=True)
class PartialledFit:
    """OLS fit in partialled-out form.

    ``v_hat = M X`` are the regressors net of the nuisance design,
    ``u_hat = M (y - X beta_hat)`` the residuals and
    ``gamma_mat = v_hat' v_hat / n``.
    """

    beta_hat: NDArray[np.float64]
    v_hat: NDArray[np.float64] = field(repr=False)
    u_hat: NDArray[np.float64] = field(repr=False)
    gamma_mat: NDArray[np.float64]
    annihilator: AnnihilatorRep = field(repr=False)
    n: int
    d: int
    K_effective: int

    @property
    def gram_cholesky(self):
        return sla.cho_factor(self.gamma_mat, lower=True)


def fit_partialled(data: RegressionData, rep: AnnihilatorRep) -> PartialledFit:
    """Compute ``beta_hat = (sum v v')^{-1} sum v y`` with ``v = M X``.

    Raises:
        DesignError: dimensions disagree or no residual degrees of freedom remain.
        CollinearityError: the partialled Gram matrix is (numerically) singular.
    """
    n, d = data.n, data.d
    if rep.n != n:
        raise DesignError(f"annihilator is {rep.n}x{rep.n} but data has n={n}")
    if n <= d + rep.K_effective:
        raise DesignError(
            f"no residual degrees of freedom: n={n}, d={d}, K={rep.K_effective}"
        )
    v_hat = rep.M @ data.X
    vv = v_hat.T @ v_hat
    vv = 0.5 * (vv + vv.T)
    eig = np.linalg.eigvalsh(vv)
    # relative to the un-partialled scale: X inside span(W) leaves vv ~ 0 entirely
    threshold = GRAM_EIG_TOL * max(float(np.sum(data.X * data.X)), np.finfo(float).tiny)
    if eig[0] <= threshold:
        raise CollinearityError(float(eig[0]), threshold)
    beta_hat = sla.cho_solve(sla.cho_factor(vv, lower=True), v_hat.T @ data.y)
    u_hat = rep.M @ data.y - v_hat @ beta_hat
    return PartialledFit(
        beta_hat=beta_hat,
        v_hat=v_hat,
        u_hat=u_hat,
        gamma_mat=vv / n,
        annihilator=rep,
        n=n,
        d=d,
        K_effective=rep.K_effective,
    )
