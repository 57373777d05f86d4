"""t-statistics, p-values and confidence intervals from a sandwich variance."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .design import DEFAULT_PRUNE_TOL, RegressionData, prepare_design
from .distributions import normal_cdf, normal_quantile, normal_sf
from .exceptions import ManyCovError, NegativeVarianceError
from .regression import PartialledFit, fit_partialled
from .rng import Stream
from .variance import EstimatorKind, SingularPolicy, compute_meat, sandwich

__all__ = [
    "IntervalEstimate",
    "bootstrap_ci",
    "gaussian_ci",
    "normal_cdf",
    "normal_quantile",
    "p_value",
    "standard_error",
    "t_statistic",
]

MAX_BOOTSTRAP_FAILURE_RATE = 0.10


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    level: float
    length: float
    kind: EstimatorKind | None
    method: Literal["gaussian", "bootstrap"]
    failed: bool = False
    reason: str = ""
    resample_failures: int = 0

    @classmethod
    def failure(cls, level, kind, method, reason, resample_failures=0) -> IntervalEstimate:
        nan = float("nan")
        return cls(nan, nan, level, nan, kind, method, True, reason, resample_failures)

    def covers(self, value: float) -> bool:
        return (not self.failed) and self.lower <= value <= self.upper

    def as_dict(self) -> dict:
        out = asdict(self)
        out["kind"] = None if self.kind is None else str(self.kind)
        return out


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")


def standard_error(omega: float, n: int) -> float:
    if not omega > 0.0:
        raise NegativeVarianceError(float(omega))
    return math.sqrt(omega / n)


def t_statistic(beta_hat: float, beta_null: float, omega: float, n: int) -> float:
    """``(beta_hat - beta_null) / sqrt(omega / n)``; raises on a non-positive variance."""
    return (float(beta_hat) - float(beta_null)) / standard_error(omega, n)


def p_value(t: float) -> float:
    """Two-sided p-value under the standard normal."""
    return float(2.0 * normal_sf(abs(t)))


def gaussian_ci(
    beta_hat: NDArray[np.float64],
    omega: NDArray[np.float64],
    n: int,
    level: float = 0.95,
    coord: int = 0,
    kind: EstimatorKind | None = None,
) -> IntervalEstimate:
    _check_level(level)
    b = float(np.atleast_1d(beta_hat)[coord])
    om = float(np.atleast_2d(omega)[coord, coord])
    if not om > 0.0:
        return IntervalEstimate.failure(
            level, kind, "gaussian", f"negative variance estimate ({om:.6g})"
        )
    se = math.sqrt(om / n)
    q = normal_quantile(0.5 + 0.5 * level)
    return IntervalEstimate(b - q * se, b + q * se, level, 2.0 * q * se, kind, "gaussian")


def _bootstrap_t(
    data: RegressionData,
    beta_ref: float,
    kind: EstimatorKind,
    coord: int,
    rows: NDArray[np.intp],
    K_ref: int,
    singular: SingularPolicy,
    require_same_rank: bool,
    drop_singletons: bool,
    rel_tol: float,
) -> float:
    """One percentile-t draw; NaN marks a failed resample."""
    try:
        prep = prepare_design(data.take(rows), rel_tol=rel_tol, drop_singletons=drop_singletons)
        if require_same_rank and prep.rep.K_effective != K_ref:
            return math.nan
        fit = fit_partialled(prep.data, prep.rep)
        omega = sandwich(fit, compute_meat(fit, kind, singular=singular)).omega_mat
        return t_statistic(fit.beta_hat[coord], beta_ref, omega[coord, coord], fit.n)
    except ManyCovError:
        return math.nan


def bootstrap_ci(
    data: RegressionData,
    fit: PartialledFit,
    kind: EstimatorKind | str,
    B: int = 999,
    level: float = 0.95,
    seed: int | Stream = 0,
    *,
    coord: int = 0,
    singular: SingularPolicy = "raise",
    require_same_rank: bool = True,
    drop_singletons: bool = False,
    rel_tol: float = DEFAULT_PRUNE_TOL,
    threads: int = 1,
) -> IntervalEstimate:
    """Pairs (observation-level) percentile-t bootstrap interval.

    Rows ``(y_i, x_i, w_i)`` are resampled with replacement, the studentized
    statistic ``T* = (b* - b) / sqrt(Omega*/n)`` is recomputed with the same
    variance estimator, and its type-7 empirical quantiles replace the normal
    quantiles: ``[b - q*_{1-a/2} se, b - q*_{a/2} se]``.

    A resample fails when the design loses rank (with ``require_same_rank``),
    the estimator is undefined, or the variance estimate is non-positive. More
    than 10% failures fail the interval. Resample ``b`` draws from its own
    counter-based stream, so the result does not depend on ``threads``.
    """
    kind = EstimatorKind.parse(kind)
    _check_level(level)
    if B < 100:
        raise ValueError(f"bootstrap needs B >= 100, got {B}")
    base = seed if isinstance(seed, Stream) else Stream(seed, "bootstrap")
    try:
        omega = sandwich(fit, compute_meat(fit, kind, singular=singular)).omega_mat
        se = standard_error(float(omega[coord, coord]), fit.n)
    except ManyCovError as exc:
        return IntervalEstimate.failure(level, kind, "bootstrap", str(exc))
    beta = float(fit.beta_hat[coord])
    n = data.n

    def draw(b: int) -> float:
        rows = base.child(b).integers(n, n)
        return _bootstrap_t(
            data, beta, kind, coord, rows, fit.K_effective,
            singular, require_same_rank, drop_singletons, rel_tol,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            t_star = np.fromiter(pool.map(draw, range(B)), dtype=np.float64, count=B)
    else:
        t_star = np.fromiter(map(draw, range(B)), dtype=np.float64, count=B)

    failures = int(np.count_nonzero(~np.isfinite(t_star)))
    if failures > MAX_BOOTSTRAP_FAILURE_RATE * B:
        return IntervalEstimate.failure(
            level, kind, "bootstrap", f"{failures} of {B} resamples failed", failures
        )
    alpha = 1.0 - level
    q_lo, q_hi = np.quantile(t_star[np.isfinite(t_star)], [alpha / 2, 1 - alpha / 2], method="linear")
    return IntervalEstimate(
        beta - q_hi * se,
        beta - q_lo * se,
        level,
        float((q_hi - q_lo) * se),
        kind,
        "bootstrap",
        resample_failures=failures,
    )
