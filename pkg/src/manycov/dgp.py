"""Seeded data-generating processes for coverage studies.

* ``Model1Spec``: i.i.d. design with ``K`` sparse, possibly overlapping dummy
  covariates ``w_ik = 1(v_ik >= 2.5)``, ``v ~ N(0, I_K)``; optional
  heteroskedasticity in both ``x`` and ``u`` driven by the dummy count.
* ``PanelSpec``: one-way fixed-effects panel (unit dummies, ``K/n = 1/T``).
* ``PlmSpec``: partially linear model with a total-degree power-series basis.

The panel and partially linear generators follow the structure of those
models; their smooth functions and variance forms are choices made here.
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Literal

import numpy as np
from numpy.typing import NDArray
from scipy.stats import binom

from .design import RegressionData
from .distributions import normal_cdf, normal_sf
from .rng import Stream

TRIM_BOUND = 2.0


def hetero_trim(a):
    """``a`` on ``[-2, 2]``, ``2 sgn(a)`` outside; endpoints map to themselves."""
    out = np.clip(np.asarray(a, dtype=np.float64), -TRIM_BOUND, TRIM_BOUND)
    return float(out) if out.ndim == 0 else out


def trimmed_normal_second_moment(scale) -> NDArray[np.float64] | float:
    """``E[t(x)^2]`` for ``x ~ N(0, scale^2)``, in closed form.

    ``E[x^2 1(|x| <= 2)] = s^2 [(2 Phi(a) - 1) - 2 a phi(a)]`` with ``a = 2/s``,
    plus ``4 P(|x| > 2)``.
    """
    s = np.asarray(scale, dtype=np.float64)
    a = TRIM_BOUND / s
    phi = np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    inner = s * s * ((2.0 * normal_cdf(a) - 1.0) - 2.0 * a * phi)
    out = inner + TRIM_BOUND**2 * 2.0 * normal_sf(a)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Model1Spec:
    n: int = 700
    K: int = 1
    beta: float = 1.0
    gamma: tuple[float, ...] | None = None
    hetero: bool = False
    dummy_threshold: float = 2.5
    seed: int = 0
    fixed_design: bool = False

    name = "model1"

    def __post_init__(self):
        if self.K < 0 or self.K >= self.n:
            raise ValueError(f"need 0 <= K < n, got K={self.K}, n={self.n}")
        if not math.isfinite(self.dummy_threshold):
            raise ValueError("dummy_threshold must be finite")
        if self.gamma is not None and len(self.gamma) != self.K:
            raise ValueError(f"gamma has length {len(self.gamma)}, expected K={self.K}")

    @property
    def dummy_probability(self) -> float:
        return float(normal_sf(self.dummy_threshold))

    def as_dict(self) -> dict:
        out = asdict(self)
        out["model"] = self.name
        return out


@functools.lru_cache(maxsize=64)
def _model1_constants_quadrature(K: int, threshold: float) -> tuple[float, float]:
    p = float(normal_sf(threshold))
    k = np.arange(K + 1, dtype=np.float64)
    pmf = binom.pmf(k, K, p)
    kappa_v = 1.0 / (1.0 + K * p * (1.0 - p) + (K * p) ** 2)
    scale = np.sqrt(kappa_v * (1.0 + k * k))
    second = trimmed_normal_second_moment(scale)
    kappa_u = 1.0 / float(np.sum(pmf * (1.0 + np.atleast_1d(second) + k * k)))
    return kappa_u, kappa_v


def _model1_constants_monte_carlo(
    K: int, threshold: float, draws: int, seed: int
) -> tuple[float, float, float, float]:
    p = float(normal_sf(threshold))
    base = Stream(seed, "calibrate", K, repr(threshold))
    chunk = 1_000_000
    sum_v = sum_v2 = 0.0
    counts = []
    gen = base.generator()
    for start in range(0, draws, chunk):
        m = min(chunk, draws - start)
        s = gen.binomial(K, p, size=m).astype(np.float64)
        counts.append(s)
        g = 1.0 + s * s
        sum_v += g.sum()
        sum_v2 += (g * g).sum()
    mean_v = sum_v / draws
    kappa_v = 1.0 / mean_v
    se_v = math.sqrt(max(sum_v2 / draws - mean_v**2, 0.0) / draws) / mean_v
    sum_u = sum_u2 = 0.0
    for i, s in enumerate(counts):
        eta = base.child("eta", i).normal(s.shape[0])
        x = np.sqrt(kappa_v * (1.0 + s * s)) * eta
        g = 1.0 + (hetero_trim(x) + s) ** 2
        sum_u += g.sum()
        sum_u2 += (g * g).sum()
    mean_u = sum_u / draws
    se_u = math.sqrt(max(sum_u2 / draws - mean_u**2, 0.0) / draws) / mean_u
    return 1.0 / mean_u, kappa_v, se_u, se_v


def calibrate_variance_constants(
    spec: Model1Spec,
    method: Literal["quadrature", "monte_carlo"] = "quadrature",
    draws: int = 10_000_000,
) -> tuple[float, float]:
    """Constants ``(kappa_u, kappa_v)`` giving ``V[u] = V[x] = 1`` in the
    heteroskedastic Model 1.

    The dummy count ``S = iota'w`` is Binomial(K, p) with ``p = 1 - Phi(c)``.
    ``kappa_v = 1 / E[1 + S^2]`` and ``kappa_u = 1 / E[1 + (t(x) + S)^2]``
    where ``E[(t(x) + S)^2] = E[t(x)^2] + E[S^2]`` by symmetry of ``x | S``.
    The default sums exactly over the binomial law; ``method="monte_carlo"``
    integrates by seeded simulation (at least ``10**7`` draws).
    """
    if method == "quadrature":
        return _model1_constants_quadrature(spec.K, float(spec.dummy_threshold))
    if method == "monte_carlo":
        if draws < 10_000_000:
            raise ValueError("Monte Carlo calibration requires at least 10**7 draws")
        ku, kv, _, _ = _model1_constants_monte_carlo(
            spec.K, float(spec.dummy_threshold), draws, spec.seed
        )
        return ku, kv
    raise ValueError(f"unknown calibration method {method!r}")


def _design_and_error_streams(spec, stream: Stream | None, error_stream: Stream | None):
    base = stream if stream is not None else Stream(spec.seed, spec.name)
    err = error_stream if error_stream is not None else base
    return base.child("design"), err.child("errors")


def gen_model1(
    spec: Model1Spec, stream: Stream | None = None, *, error_stream: Stream | None = None
) -> RegressionData:
    """Draw one Model 1 sample.

    ``stream`` drives the design ``(w, x)`` and ``error_stream`` (default: the
    same stream) drives ``u``; holding ``stream`` fixed while varying
    ``error_stream`` gives a fixed-design experiment.
    """
    n, K = spec.n, spec.K
    ds, es = _design_and_error_streams(spec, stream, error_stream)
    v = ds.normal((n, K))
    W = (v >= spec.dummy_threshold).astype(np.float64)
    eta = ds.normal(n)
    eps = es.normal(n)
    if spec.hetero:
        kappa_u, kappa_v = calibrate_variance_constants(spec)
        count = W.sum(axis=1)
        x = np.sqrt(kappa_v * (1.0 + count**2)) * eta
        u = np.sqrt(kappa_u * (1.0 + (hetero_trim(x) + count) ** 2)) * eps
    else:
        x, u = eta, eps
    y = spec.beta * x + u
    if spec.gamma is not None:
        y = y + W @ np.asarray(spec.gamma, dtype=np.float64)
    return RegressionData(y, x[:, None], W)


def model1_error_variance(spec: Model1Spec, data: RegressionData) -> NDArray[np.float64]:
    """True conditional variances ``V[u_i | x_i, w_i]`` for a Model 1 draw."""
    if not spec.hetero:
        return np.ones(data.n)
    kappa_u, _ = calibrate_variance_constants(spec)
    count = data.W.sum(axis=1)
    return kappa_u * (1.0 + (hetero_trim(data.X[:, 0]) + count) ** 2)


@dataclass(frozen=True)
class PanelSpec:
    N_units: int = 100
    T: int = 3
    beta: float = 1.0
    alpha: tuple[float, ...] | None = None
    hetero: bool = False
    seed: int = 0
    fixed_design: bool = False

    name = "panel"

    def __post_init__(self):
        if self.T < 2:
            raise ValueError(f"panel needs T >= 2, got T={self.T}")
        if self.N_units < 1:
            raise ValueError("panel needs at least one unit")
        if self.alpha is not None and len(self.alpha) != self.N_units:
            raise ValueError(f"alpha has length {len(self.alpha)}, expected {self.N_units}")

    @property
    def n(self) -> int:
        return self.N_units * self.T

    @property
    def K(self) -> int:
        return self.N_units

    def as_dict(self) -> dict:
        out = asdict(self)
        out["model"] = self.name
        return out


def unit_dummies(N: int, T: int) -> NDArray[np.float64]:
    """``n x N`` indicator design with observations ordered unit-major."""
    W = np.zeros((N * T, N))
    W[np.arange(N * T), np.arange(N * T) // T] = 1.0
    return W


def _panel_alpha(spec: PanelSpec, ds: Stream) -> NDArray[np.float64]:
    if spec.alpha is not None:
        return np.asarray(spec.alpha, dtype=np.float64)
    return ds.child("alpha").normal(spec.N_units)


def _panel_kappa_u(alpha: NDArray[np.float64]) -> float:
    return 1.0 / (1.0 + trimmed_normal_second_moment(1.0) + float(np.mean(hetero_trim(alpha) ** 2)))


def gen_panel(
    spec: PanelSpec, stream: Stream | None = None, *, error_stream: Stream | None = None
) -> RegressionData:
    """Draw ``Y_it = alpha_i + beta X_it + U_it`` with unit dummies as ``W``.

    Heteroskedastic errors use ``V[U_it | X, alpha] = kappa_u (1 + (t(X_it) + t(alpha_i))^2)``
    with ``kappa_u`` making the average variance one.
    """
    N, T = spec.N_units, spec.T
    ds, es = _design_and_error_streams(spec, stream, error_stream)
    alpha = _panel_alpha(spec, ds)
    x = ds.normal(N * T)
    eps = es.normal(N * T)
    a = np.repeat(alpha, T)
    if spec.hetero:
        u = np.sqrt(_panel_kappa_u(alpha) * (1.0 + (hetero_trim(x) + hetero_trim(a)) ** 2)) * eps
    else:
        u = eps
    y = a + spec.beta * x + u
    return RegressionData(y, x[:, None], unit_dummies(N, T))


def panel_error_variance(
    spec: PanelSpec, data: RegressionData, stream: Stream | None = None
) -> NDArray[np.float64]:
    """True ``V[U_it | X, alpha]`` for a panel draw made with ``stream``."""
    if not spec.hetero:
        return np.ones(data.n)
    ds, _ = _design_and_error_streams(spec, stream, None)
    alpha = _panel_alpha(spec, ds)
    a = np.repeat(alpha, spec.T)
    return _panel_kappa_u(alpha) * (1.0 + (hetero_trim(data.X[:, 0]) + hetero_trim(a)) ** 2)


G_FUNCTIONS: dict[str, Callable[[NDArray[np.float64]], NDArray[np.float64]]] = {
    "linear": lambda z: z.sum(axis=1) / math.sqrt(z.shape[1]),
    "exp": lambda z: np.exp(z.mean(axis=1)),
    "sin": lambda z: np.sin(math.pi * z.mean(axis=1)),
    "quadratic": lambda z: (z**2).mean(axis=1),
}


def _m_function(z: NDArray[np.float64]) -> NDArray[np.float64]:
    # regressor's conditional mean; centered for z ~ U[-1, 1]^dim
    return (z**2).mean(axis=1) - 1.0 / 3.0


def plm_basis_dimension(order: int, dim_z: int) -> int:
    """Number of monomials of total degree ``<= order`` in ``dim_z`` variables."""
    if order < 0 or dim_z < 1:
        raise ValueError("need order >= 0 and dim_z >= 1")
    return math.comb(order + dim_z, dim_z)


def power_series_exponents(order: int, dim_z: int) -> list[tuple[int, ...]]:
    exps = []
    for degree in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(dim_z), degree):
            e = [0] * dim_z
            for j in combo:
                e[j] += 1
            exps.append(tuple(e))
    return exps


def power_series_basis(z: NDArray[np.float64], order: int) -> NDArray[np.float64]:
    """All monomials of total degree ``<= order`` (intercept first)."""
    n, dim_z = z.shape
    exps = power_series_exponents(order, dim_z)
    out = np.empty((n, len(exps)))
    for col, e in enumerate(exps):
        out[:, col] = np.prod(z ** np.asarray(e, dtype=np.float64), axis=1)
    return out


@dataclass(frozen=True)
class PlmSpec:
    n: int = 1000
    g: str = "exp"
    basis: str = "power_series"
    order: int = 3
    dim_z: int = 10
    beta: float = 1.0
    hetero: bool = False
    seed: int = 0
    fixed_design: bool = False

    name = "plm"

    def __post_init__(self):
        if self.basis != "power_series":
            raise ValueError(f"unsupported basis {self.basis!r}")
        if self.g not in G_FUNCTIONS:
            raise ValueError(f"unknown g {self.g!r}; expected one of {sorted(G_FUNCTIONS)}")
        K = self.K
        if K >= self.n:
            raise ValueError(
                f"basis dimension {K} is not below n={self.n} "
                f"(order={self.order}, dim_z={self.dim_z})"
            )
        if 2 * K >= self.n:
            warnings.warn(
                f"basis dimension {K} is at least n/2; the many-covariate robust "
                "estimator is infeasible", stacklevel=3,
            )

    @property
    def K(self) -> int:
        return plm_basis_dimension(self.order, self.dim_z)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["model"] = self.name
        return out


def gen_plm(
    spec: PlmSpec, stream: Stream | None = None, *, error_stream: Stream | None = None
) -> RegressionData:
    """Draw ``y = beta x + g(z) + eps`` with ``x = m(z) + nu`` and ``W = p(z)``."""
    ds, es = _design_and_error_streams(spec, stream, error_stream)
    z = 2.0 * ds.uniform((spec.n, spec.dim_z)) - 1.0
    W = power_series_basis(z, spec.order)
    x = _m_function(z) + ds.normal(spec.n)
    eps = es.normal(spec.n)
    if spec.hetero:
        eps = eps * np.sqrt((1.0 + hetero_trim(x) ** 2) / (1.0 + trimmed_normal_second_moment(1.0)))
    y = spec.beta * x + G_FUNCTIONS[spec.g](z) + eps
    return RegressionData(y, x[:, None], W)


GENERATORS = {
    "model1": gen_model1,
    "panel": gen_panel,
    "plm": gen_plm,
}


def generate(spec, stream: Stream | None = None, *, error_stream: Stream | None = None) -> RegressionData:
    return GENERATORS[spec.name](spec, stream, error_stream=error_stream)
