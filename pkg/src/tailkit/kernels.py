"""CDF / quantile kernels for the reference distributions used by the tests."""

from __future__ import annotations

import math

import numpy as np
from scipy import special


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("probability must lie in (0, 1)")
    return p


def _check_dof(v, name="dof"):
    if np.any(np.asarray(v) <= 0):
        raise ValueError(f"{name} must be positive")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def norm_cdf(x):
    return _out(special.ndtr(np.asarray(x, dtype=float)))


def norm_sf(x):
    return _out(special.ndtr(-np.asarray(x, dtype=float)))


def norm_ppf(p):
    return _out(special.ndtri(_check_p(p)))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi))


def t_cdf(x, nu):
    _check_dof(nu, "nu")
    return _out(special.stdtr(nu, np.asarray(x, dtype=float)))


def t_ppf(p, nu):
    _check_dof(nu, "nu")
    return _out(special.stdtrit(nu, _check_p(p)))


def chi2_sf(x, k):
    if np.any(np.asarray(k) < 1):
        raise ValueError("chi-square degrees of freedom must be >= 1")
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    return _out(special.chdtrc(k, x))


def chi2_isf(alpha, k):
    """Upper ``alpha`` point of chi-square(k)."""
    if np.any(np.asarray(k) < 1):
        raise ValueError("chi-square degrees of freedom must be >= 1")
    return _out(special.chdtri(k, _check_p(alpha)))


def kolmogorov_sf(r: float) -> float:
    """P(K > r) for the Kolmogorov limit law, 1 - H(r), H(r) = 1 + 2 sum (-1)^k exp(-2 k^2 r^2)."""
    if r <= 0.05:
        return 1.0
    kmax = int(min(10_000, max(100, math.ceil(8.0 / r))))
    k = np.arange(1, kmax + 1, dtype=float)
    h = 1.0 + 2.0 * np.sum((-1.0) ** k * np.exp(-2.0 * k * k * r * r))
    return float(min(1.0, max(0.0, 1.0 - h)))


QUERIES = {
    "norm_cdf": norm_cdf,
    "norm_ppf": norm_ppf,
    "t_cdf": t_cdf,
    "t_ppf": t_ppf,
    "chi2_sf": chi2_sf,
}


def distribution_kernels(query: str, *args) -> float:
    """Dispatch by name, e.g. ``distribution_kernels("chi2_sf", 5.99, 2)``."""
    try:
        fn = QUERIES[query]
    except KeyError:
        raise ValueError(f"unknown kernel {query!r}") from None
    return float(fn(*args))
