"""Standard normal CDF and quantile function."""

from __future__ import annotations

import numpy as np
from scipy.special import erfc

_SQRT2 = np.sqrt(2.0)
_SQRT2PI = np.sqrt(2.0 * np.pi)

# rational approximation coefficients (P. J. Acklam)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x):
    """Standard normal CDF, accurate in both tails."""
    return 0.5 * erfc(-np.asarray(x, dtype=np.float64) / _SQRT2)


def normal_sf(x):
    return 0.5 * erfc(np.asarray(x, dtype=np.float64) / _SQRT2)


def _lower_quantile(p):
    """Quantile for ``p in (0, 0.5]`` with one Halley correction against erfc."""
    x = np.empty_like(p)
    tail = p < _P_LOW
    if np.any(tail):
        q = np.sqrt(-2.0 * np.log(p[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[tail] = num / den
    mid = ~tail
    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    e = 0.5 * erfc(-x / _SQRT2) - p
    u = e * _SQRT2PI * np.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_quantile(p):
    """Inverse standard normal CDF.

    Scalars in, float out; arrays in, array out. Upper-half arguments are
    reflected through ``1 - p``, which is exact in floating point for
    ``p >= 1/2``, so both tails keep full relative accuracy.

    Raises:
        ValueError: any ``p`` outside the open interval (0, 1).
    """
    arr = np.asarray(p, dtype=np.float64)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError("normal_quantile requires 0 < p < 1")
    flat = np.atleast_1d(arr).ravel()
    upper = flat > 0.5
    lower_arg = np.where(upper, 1.0 - flat, flat)
    out = _lower_quantile(lower_arg)
    out = np.where(upper, -out, out)
    out[flat == 0.5] = 0.0
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)
