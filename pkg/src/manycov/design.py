"""Design matrices, collinearity pruning and the nuisance annihilator.

The annihilator ``M = I - W (W'W)^{-1} W'`` is built from an orthonormal
basis of the column space of ``W`` obtained by a column-pivoted QR
decomposition; the normal-equations inverse is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .exceptions import DesignError, DesignTooLargeError

DEFAULT_PRUNE_TOL = 1e-10
DEFAULT_MAX_N = 20_000
UNIT_LEVERAGE_TOL = 1e-10
# M_n within this distance of 1/2 counts as 1/2 (rounding in 1 - sum_k Q_ik^2)
FEASIBILITY_TOL = 1e-10


@dataclass(frozen=True)
class RegressionData:
    """Outcome ``y`` (n,), regressors of interest ``X`` (n, d), nuisance design ``W`` (n, K)."""

    y: NDArray[np.float64]
    X: NDArray[np.float64]
    W: NDArray[np.float64]

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        X = np.asarray(self.X, dtype=np.float64)
        W = np.asarray(self.W, dtype=np.float64)
        if y.ndim != 1:
            raise DesignError(f"y must be a vector, got shape {y.shape}")
        n = y.shape[0]
        if X.ndim == 1:
            X = X[:, None]
        if W.ndim == 1:
            W = W[:, None]
        if W.size == 0:
            W = np.zeros((n, 0))
        if X.ndim != 2 or X.shape[0] != n or X.shape[1] < 1:
            raise DesignError(f"X must be n x d with n={n}, d>=1; got shape {X.shape}")
        if W.ndim != 2 or W.shape[0] != n:
            raise DesignError(f"W must have n={n} rows; got shape {W.shape}")
        for name, arr in (("y", y), ("X", X), ("W", W)):
            if not np.all(np.isfinite(arr)):
                raise DesignError(f"{name} contains non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.W.shape[1]

    def take(self, rows) -> RegressionData:
        rows = np.asarray(rows)
        return RegressionData(self.y[rows], self.X[rows], self.W[rows])

    def with_W(self, W) -> RegressionData:
        return RegressionData(self.y, self.X, W)


@dataclass(frozen=True)
class PruneReport:
    dropped_columns: list[int]
    threshold: float
    pivot_ratios: NDArray[np.float64] = field(repr=False, default_factory=lambda: np.empty(0))


@dataclass(frozen=True)
class AnnihilatorRep:
    """Dense annihilator of the nuisance design.

    Attributes:
        M: symmetric idempotent n x n matrix.
        diag: the diagonal ``M_ii`` (clipped into [0, 1]).
        mcal: maximal nuisance leverage ``1 - min_i M_ii``.
        K_effective: rank of the projected-out design.
    """

    M: NDArray[np.float64] = field(repr=False)
    diag: NDArray[np.float64] = field(repr=False)
    mcal: float
    K_effective: int

    @property
    def n(self) -> int:
        return self.M.shape[0]


@dataclass(frozen=True)
class DiagnosticsSummary:
    n: int
    K_effective: int
    k_over_n: float
    mcal: float
    hck_feasible: bool
    varah_bound: float
    leverage_quantiles: dict[str, float]

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "K_effective": self.K_effective,
            "K_over_n": self.k_over_n,
            "M_n": self.mcal,
            "hck_feasible": self.hck_feasible,
            "varah_bound": self.varah_bound,
            "leverage_quantiles": dict(self.leverage_quantiles),
        }


def _pivoted_rank(R: NDArray[np.float64], rel_tol: float) -> tuple[int, NDArray[np.float64]]:
    piv = np.abs(np.diag(R))
    if piv.size == 0 or piv[0] == 0.0:
        return 0, np.zeros_like(piv)
    ratios = piv / piv[0]
    return int(np.count_nonzero(ratios > rel_tol)), ratios


def prune_collinear(
    W: NDArray[np.float64], rel_tol: float = DEFAULT_PRUNE_TOL
) -> tuple[NDArray[np.float64], PruneReport]:
    """Drop nuisance columns that are (numerically) linear combinations of others.

    A column-pivoted QR decomposition orders columns greedily; a column is kept
    when its pivot magnitude relative to the largest pivot exceeds ``rel_tol``.
    Retained columns keep their original order. Dropping every column is not an
    error and yields an ``n x 0`` design.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    n, K = W.shape
    if not np.all(np.isfinite(W)):
        raise DesignError("W contains non-finite entries")
    if K == 0:
        return W.copy(), PruneReport([], rel_tol)
    _, R, perm = sla.qr(W, mode="economic", pivoting=True)
    rank, ratios = _pivoted_rank(R, rel_tol)
    keep = np.sort(perm[:rank])
    dropped = sorted(set(range(K)) - set(keep.tolist()))
    full_ratios = np.zeros(K)
    full_ratios[perm[: ratios.size]] = ratios
    return W[:, keep], PruneReport(dropped, rel_tol, full_ratios)


def orthonormal_basis(W: NDArray[np.float64], rel_tol: float = DEFAULT_PRUNE_TOL) -> NDArray[np.float64]:
    """Orthonormal basis (n x rank) of the column space of ``W``."""
    W = np.asarray(W, dtype=np.float64)
    n, K = W.shape
    if K == 0:
        return np.zeros((n, 0))
    Q, R, _ = sla.qr(W, mode="economic", pivoting=True)
    rank, _ = _pivoted_rank(R, rel_tol)
    return Q[:, :rank]


def annihilator(W: NDArray[np.float64], max_n: int = DEFAULT_MAX_N) -> AnnihilatorRep:
    """Build ``M = I - QQ'`` for an orthonormal basis ``Q`` of ``span(W)``.

    ``W`` is expected to be pruned already; any residual rank deficiency is
    still handled by the pivoted factorization.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    n = W.shape[0]
    if n > max_n:
        raise DesignTooLargeError(n, max_n)
    Q = orthonormal_basis(W)
    M = -(Q @ Q.T)
    M = 0.5 * (M + M.T)
    diag = np.clip(1.0 - np.einsum("ij,ij->i", Q, Q), 0.0, 1.0)
    M[np.diag_indices(n)] = diag
    mcal = float(1.0 - diag.min()) if n else 0.0
    M.setflags(write=False)
    diag.setflags(write=False)
    return AnnihilatorRep(M=M, diag=diag, mcal=mcal, K_effective=Q.shape[1])


def hck_feasible(mcal: float) -> bool:
    """Whether ``M_n < 1/2``, the sufficient condition for invertibility of ``M * M``."""
    return mcal < 0.5 - FEASIBILITY_TOL


def varah_bound(mcal: float) -> float:
    """Upper bound on the max-row-sum norm of ``(M*M)^{-1}`` when ``M_n < 1/2``."""
    return 1.0 / (0.5 - mcal) if hck_feasible(mcal) else float("inf")


def leverage_diagnostics(rep: AnnihilatorRep) -> DiagnosticsSummary:
    n = rep.n
    leverage = 1.0 - rep.diag
    qs = (0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0)
    quant = np.quantile(leverage, qs) if n else np.zeros(len(qs))
    return DiagnosticsSummary(
        n=n,
        K_effective=rep.K_effective,
        k_over_n=rep.K_effective / n if n else float("nan"),
        mcal=rep.mcal,
        hck_feasible=hck_feasible(rep.mcal),
        varah_bound=varah_bound(rep.mcal),
        leverage_quantiles={f"q{int(round(100 * q)):02d}": float(v) for q, v in zip(qs, quant)},
    )


def unit_leverage_rows(W: NDArray[np.float64], tol: float = UNIT_LEVERAGE_TOL) -> NDArray[np.intp]:
    """Rows whose nuisance leverage is one (``M_ii <= tol``)."""
    Q = orthonormal_basis(W)
    mii = 1.0 - np.einsum("ij,ij->i", Q, Q)
    return np.flatnonzero(mii <= tol)


def drop_unit_leverage(
    data: RegressionData, tol: float = UNIT_LEVERAGE_TOL
) -> tuple[RegressionData, NDArray[np.intp]]:
    """Remove observations that the nuisance design fits perfectly.

    Such rows have ``v_i = u_i = 0`` and leave the estimate and all other
    partialled quantities unchanged; the nuisance rank drops by one per row
    (the absorbing direction becomes a zero column, removed by pruning).
    """
    rows = unit_leverage_rows(data.W, tol)
    if rows.size == 0:
        return data, rows
    keep = np.setdiff1d(np.arange(data.n), rows)
    return data.take(keep), rows


@dataclass(frozen=True)
class PreparedDesign:
    data: RegressionData
    prune: PruneReport
    rep: AnnihilatorRep
    dropped_rows: NDArray[np.intp]


def prepare_design(
    data: RegressionData,
    *,
    rel_tol: float = DEFAULT_PRUNE_TOL,
    max_n: int = DEFAULT_MAX_N,
    drop_singletons: bool = False,
) -> PreparedDesign:
    """Prune ``W``, optionally drop unit-leverage rows, and build the annihilator."""
    dropped_rows = np.empty(0, dtype=np.intp)
    if drop_singletons and data.K:
        data, dropped_rows = drop_unit_leverage(data)
    W, report = prune_collinear(data.W, rel_tol)
    data = data.with_W(W)
    if data.n <= data.d + data.K:
        raise DesignError(
            f"no residual degrees of freedom: n={data.n}, d={data.d}, K={data.K}"
        )
    return PreparedDesign(data, report, annihilator(W, max_n=max_n), dropped_rows)
