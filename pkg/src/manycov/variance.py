"""Meat matrices for the sandwich variance of the partialled OLS estimator.

All estimators share the form ``(1/n) sum_i v_i v_i' * r_i`` where ``r_i`` is a
reweighted squared residual:

* HO0/HO1 use the pooled residual variance (``Sigma = s^2 Gamma``);
* HC0..HC4 reweight ``u_i^2`` by ``Upsilon_i * M_ii^(-xi_i)``;
* HCK replaces ``u_i^2`` by the solution of ``(M * M) u_tilde^2 = u_hat^2``
  where ``*`` is the elementwise product.
"""

from __future__ import annotations

import enum
import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .design import UNIT_LEVERAGE_TOL, AnnihilatorRep, hck_feasible
from .exceptions import HCKInfeasibleError, KappaSolveError, UnitLeverageError
from .regression import PartialledFit

KAPPA_RESIDUAL_TOL = 1e-8
PSD_TOL = 1e-10
# eigenvalues of M*M below this fraction of the largest are treated as exact zeros
MINNORM_RANK_TOL = 1e-9

SingularPolicy = Literal["raise", "minnorm"]


class EstimatorKind(str, enum.Enum):
    HO0 = "HO0"
    HO1 = "HO1"
    HC0 = "HC0"
    HC1 = "HC1"
    HC2 = "HC2"
    HC3 = "HC3"
    HC4 = "HC4"
    HCK = "HCK"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, name: str | EstimatorKind) -> EstimatorKind:
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().upper())
        except ValueError:
            valid = ", ".join(k.value.lower() for k in cls)
            raise ValueError(f"unknown estimator {name!r}; expected one of {valid}") from None


ALL_KINDS: tuple[EstimatorKind, ...] = tuple(EstimatorKind)
HC_DIAG_KINDS = (
    EstimatorKind.HC0,
    EstimatorKind.HC1,
    EstimatorKind.HC2,
    EstimatorKind.HC3,
    EstimatorKind.HC4,
)


@dataclass(frozen=True)
class MeatEstimate:
    sigma_mat: NDArray[np.float64]
    kind: EstimatorKind
    psd: bool
    aux: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SandwichEstimate:
    omega_mat: NDArray[np.float64]
    kind: EstimatorKind


def _is_psd(mat: NDArray[np.float64]) -> bool:
    eig = np.linalg.eigvalsh(mat)
    return bool(eig[0] >= -PSD_TOL * abs(float(np.trace(mat))))


def _weighted_outer(v_hat: NDArray[np.float64], weights: NDArray[np.float64]) -> NDArray[np.float64]:
    n = v_hat.shape[0]
    out = (v_hat * weights[:, None]).T @ v_hat / n
    return 0.5 * (out + out.T)


def meat_ho(fit: PartialledFit, dof_adjust: bool) -> MeatEstimate:
    """Homoskedasticity-only meat ``s^2 * Gamma``.

    With ``dof_adjust`` the residual variance divides by ``n - d - K``
    (HO1), otherwise by ``n`` (HO0).
    """
    ssr = float(fit.u_hat @ fit.u_hat)
    denom = fit.n - fit.d - fit.K_effective if dof_adjust else fit.n
    s2 = ssr / denom
    kind = EstimatorKind.HO1 if dof_adjust else EstimatorKind.HO0
    return MeatEstimate(s2 * fit.gamma_mat, kind, True, {"sigma2": s2})


def hc_weights(rep: AnnihilatorRep, kind: EstimatorKind | str) -> NDArray[np.float64]:
    """Diagonal weights ``Upsilon_i * M_ii^(-xi_i)`` for HC0..HC4."""
    kind = EstimatorKind.parse(kind)
    n, K = rep.n, rep.K_effective
    mii = np.asarray(rep.diag)
    if kind is EstimatorKind.HC0:
        return np.ones(n)
    if kind is EstimatorKind.HC1:
        return np.full(n, n / (n - K))
    if kind is EstimatorKind.HC2:
        xi = np.ones(n)
    elif kind is EstimatorKind.HC3:
        xi = np.full(n, 2.0)
    elif kind is EstimatorKind.HC4:
        # K = 0 forces M_ii = 1, where every exponent gives weight one
        xi = np.minimum(4.0, n * mii / K) if K else np.zeros(n)
    else:
        raise ValueError(f"{kind} is not a diagonal HC estimator")
    bad = np.flatnonzero((mii <= UNIT_LEVERAGE_TOL) & (xi > 0))
    if bad.size:
        raise UnitLeverageError(bad)
    return mii ** (-xi)


def meat_hc_diag(fit: PartialledFit, kind: EstimatorKind | str) -> MeatEstimate:
    kind = EstimatorKind.parse(kind)
    w = hc_weights(fit.annihilator, kind)
    sigma = _weighted_outer(fit.v_hat, w * fit.u_hat**2)
    return MeatEstimate(sigma, kind, _is_psd(sigma), {"max_weight": float(w.max())})


class _KappaFactorCache:
    """LRU cache of factorizations of ``M * M`` keyed on the annihilator's bytes."""

    def __init__(self, maxsize: int = 4):
        self.maxsize = maxsize
        self._lock = threading.Lock()
        self._data: OrderedDict[tuple, tuple] = OrderedDict()

    @staticmethod
    def key(rep: AnnihilatorRep, policy: str) -> tuple:
        digest = hashlib.blake2b(np.ascontiguousarray(rep.M).data, digest_size=16).hexdigest()
        return (rep.n, digest, policy)

    def get(self, key):
        with self._lock:
            hit = self._data.get(key)
            if hit is not None:
                self._data.move_to_end(key)
            return hit

    def put(self, key, value) -> None:
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)

    def clear(self) -> None:
        with self._lock:
            self._data.clear()


_KAPPA_CACHE = _KappaFactorCache()


def clear_kappa_cache() -> None:
    _KAPPA_CACHE.clear()


def _factorize(rep: AnnihilatorRep, policy: SingularPolicy) -> tuple:
    H = rep.M * rep.M
    if hck_feasible(rep.mcal):
        try:
            return ("chol", sla.cho_factor(H, lower=True, check_finite=False))
        except np.linalg.LinAlgError:
            raise KappaSolveError(
                "Cholesky factorization of M*M failed", float(np.linalg.cond(H))
            ) from None
    if policy == "raise":
        raise HCKInfeasibleError(rep.mcal)
    lam, vec = np.linalg.eigh(H)
    keep = lam > MINNORM_RANK_TOL * lam[-1]
    return ("eig", vec[:, keep], lam[keep], int(np.count_nonzero(~keep)))


def solve_kappa_system(
    rep: AnnihilatorRep,
    u_sq: NDArray[np.float64],
    *,
    singular: SingularPolicy = "raise",
    use_cache: bool = True,
) -> NDArray[np.float64]:
    """Solve ``(M * M) u_tilde^2 = u_sq`` for the bias-corrected squared residuals.

    The inverse of ``M * M`` is never formed. When ``M_n < 1/2`` the matrix is
    symmetric positive definite and a Cholesky factorization is used.

    With ``singular="raise"`` (default) an ``M_n >= 1/2`` design raises
    :class:`HCKInfeasibleError`. With ``singular="minnorm"`` the minimum-norm
    solution is returned instead. For any ``u_sq`` built from vectors in the
    range of ``M`` the system is consistent and ``sum_i v_i v_i' u_tilde_i^2``
    does not depend on which solution is taken, because ``z`` in the null space
    of ``M * M`` implies ``M diag(z) M = 0``.

    Raises:
        HCKInfeasibleError: ``M_n >= 1/2`` under the default policy.
        KappaSolveError: factorization failure, or the solution violates the
            residual contract ``||(M*M) u~ - u_sq||_inf <= 1e-8 ||u_sq||_inf``.
    """
    u_sq = np.asarray(u_sq, dtype=np.float64)
    if u_sq.shape[0] != rep.n:
        raise ValueError(f"u_sq has length {u_sq.shape[0]}, expected {rep.n}")
    if singular not in ("raise", "minnorm"):
        raise ValueError(f"unknown singular policy {singular!r}")
    if singular == "raise" and not hck_feasible(rep.mcal):
        raise HCKInfeasibleError(rep.mcal)
    key = _KAPPA_CACHE.key(rep, singular) if use_cache else None
    fac = _KAPPA_CACHE.get(key) if use_cache else None
    if fac is None:
        fac = _factorize(rep, singular)
        if use_cache:
            _KAPPA_CACHE.put(key, fac)
    if fac[0] == "chol":
        u_tilde = sla.cho_solve(fac[1], u_sq, check_finite=False)
    else:
        _, vec, lam, _ = fac
        coef = vec.T @ u_sq
        u_tilde = vec @ (coef / (lam[:, None] if u_sq.ndim == 2 else lam))

    H = rep.M * rep.M
    resid = np.max(np.abs(H @ u_tilde - u_sq), axis=0, initial=0.0)
    scale = np.max(np.abs(u_sq), axis=0, initial=0.0)
    bad = ~(resid <= KAPPA_RESIDUAL_TOL * scale)
    if np.any(bad):
        worst = int(np.argmax(np.atleast_1d(resid - KAPPA_RESIDUAL_TOL * scale)))
        r, s = np.atleast_1d(resid)[worst], np.atleast_1d(scale)[worst]
        raise KappaSolveError(
            f"kappa system residual {r:.3e} exceeds {KAPPA_RESIDUAL_TOL:g} * {s:.3e}",
            float(np.linalg.cond(H)),
        )
    return u_tilde


def meat_hck(
    fit: PartialledFit, *, singular: SingularPolicy = "raise", use_cache: bool = True
) -> MeatEstimate:
    """Many-covariate robust meat ``(1/n) sum_i v_i v_i' u_tilde_i^2``."""
    rep = fit.annihilator
    u_tilde = solve_kappa_system(rep, fit.u_hat**2, singular=singular, use_cache=use_cache)
    sigma = _weighted_outer(fit.v_hat, u_tilde)
    aux = {
        "negative_u_tilde": int(np.count_nonzero(u_tilde < 0)),
        "u_tilde_min": float(u_tilde.min()),
        "u_tilde_mean": float(u_tilde.mean()),
        "M_n": rep.mcal,
        "minnorm": not hck_feasible(rep.mcal),
    }
    return MeatEstimate(sigma, EstimatorKind.HCK, _is_psd(sigma), aux)


def compute_meat(
    fit: PartialledFit, kind: EstimatorKind | str, *, singular: SingularPolicy = "raise"
) -> MeatEstimate:
    kind = EstimatorKind.parse(kind)
    if kind is EstimatorKind.HO0:
        return meat_ho(fit, dof_adjust=False)
    if kind is EstimatorKind.HO1:
        return meat_ho(fit, dof_adjust=True)
    if kind is EstimatorKind.HCK:
        return meat_hck(fit, singular=singular)
    return meat_hc_diag(fit, kind)


def sandwich(fit: PartialledFit, meat: MeatEstimate) -> SandwichEstimate:
    """``Omega = Gamma^{-1} Sigma Gamma^{-1}``, symmetrized."""
    chol = sla.cho_factor(fit.gamma_mat, lower=True)
    left = sla.cho_solve(chol, meat.sigma_mat)
    omega = sla.cho_solve(chol, left.T)
    return SandwichEstimate(0.5 * (omega + omega.T), meat.kind)
