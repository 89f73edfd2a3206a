"""VaR violation series with unconditional (Kupiec) and regression (DQ) backtests."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import kernels
from .risk import var_gaussian, var_historical, var_student
from .stattests import ols_fit


@dataclass(frozen=True)
class ViolationSeries:
    indicators: np.ndarray
    p: float
    var_path: np.ndarray

    @property
    def n_obs(self) -> int:
        return int(self.indicators.size)

    @property
    def n_violations(self) -> int:
        return int(self.indicators.sum())

    @property
    def coverage(self) -> float:
        return self.n_violations / self.n_obs

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "var", "violation"])
            for t, (v, i) in enumerate(zip(self.var_path, self.indicators)):
                w.writerow([t, repr(float(v)), int(i)])


def _check_p(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError("coverage p must lie in (0, 1)")


def violation_series(losses, var_path, p: float) -> ViolationSeries:
    """I_t = 1 when the loss strictly exceeds the ex-ante VaR."""
    _check_p(p)
    x = np.asarray(getattr(losses, "values", losses), dtype=float).reshape(-1)
    v = np.asarray(var_path, dtype=float).reshape(-1)
    if x.size != v.size:
        raise ValueError("losses and VaR path differ in length")
    if x.size == 0:
        raise ValueError("empty series")
    return ViolationSeries((x > v).astype(np.int8), float(p), v)


def violations_from_indicators(indicators, p: float, var_path=None) -> ViolationSeries:
    _check_p(p)
    ind = np.asarray(indicators).astype(np.int8).reshape(-1)
    if ind.size == 0 or np.any((ind != 0) & (ind != 1)):
        raise ValueError("indicators must be a nonempty 0/1 vector")
    vp = np.full(ind.size, np.nan) if var_path is None else np.asarray(var_path, dtype=float)
    return ViolationSeries(ind, float(p), vp)


@dataclass(frozen=True)
class BacktestResult:
    test: str
    statistic: float
    dof: int
    p_value: float
    n_violations: int
    n_obs: int

    def rejects(self, level: float = 0.05) -> bool:
        return self.p_value < level

    def to_dict(self) -> dict:
        return {"test": self.test, "stat": self.statistic, "dof": self.dof, "p": self.p_value,
                "n_violations": self.n_violations, "n_obs": self.n_obs,
                "reject": {"%g" % a: self.p_value < a for a in (0.01, 0.05, 0.10)}}


def kupiec_uc(v: ViolationSeries) -> BacktestResult:
    """Likelihood ratio of coverage p against the observed hit rate, chi-square(1)."""
    T, T1 = v.n_obs, v.n_violations
    T0 = T - T1
    p = v.p
    pi = T1 / T
    # xlogy gives the 0 log 0 = 0 limit when pi is 0 or 1
    ll_null = special.xlogy(T0, 1 - p) + special.xlogy(T1, p)
    ll_alt = special.xlogy(T0, 1 - pi) + special.xlogy(T1, pi)
    lr = max(0.0, float(-2.0 * (ll_null - ll_alt)))
    return BacktestResult("kupiec_uc", lr, 1, kernels.chi2_sf(lr, 1), T1, T)


def em_dq(v: ViolationSeries, K: int = 1) -> BacktestResult:
    """Dynamic quantile Wald test, chi-square(2K + 1).

    Hit_t = I_t - p is regressed on an intercept, Hit_{t-1..t-K} and the
    standardised VaR values VaR_{t-1..t-K}.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    T = v.n_obs
    if T <= 2 * K + 5:
        raise ValueError("series too short for the requested lags")
    var = np.asarray(v.var_path, dtype=float)
    if not np.all(np.isfinite(var)):
        raise ValueError("DQ needs a finite VaR path")
    hit = v.indicators.astype(float) - v.p
    sd = float(np.std(var))
    if sd == 0:
        raise ValueError("singular regressor matrix: VaR path is constant")
    zvar = (var - var.mean()) / sd
    cols = [hit[K - k:T - k] for k in range(1, K + 1)]
    cols += [zvar[K - k:T - k] for k in range(1, K + 1)]
    X = np.column_stack([np.ones(T - K)] + cols)
    y = hit[K:]
    try:
        fit = ols_fit(y, X, intercept=False)
    except ValueError as exc:
        raise ValueError(f"singular regressor matrix: {exc}") from None
    b = fit.coefficients
    stat = float(b @ (X.T @ X) @ b / (v.p * (1.0 - v.p)))
    dof = 2 * K + 1
    return BacktestResult("em_dq", stat, dof, kernels.chi2_sf(stat, dof), v.n_violations, T)


def rolling_var(losses, q: float, method: str = "historical", min_window: int = 250,
                nu: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Ex-ante VaR from an expanding window ending the day before.

    Returns ``(losses[min_window:], var_path)`` aligned for
    :func:`violation_series`.
    """
    x = np.asarray(getattr(losses, "values", losses), dtype=float).reshape(-1)
    if min_window < 2 or x.size <= min_window:
        raise ValueError("series must be longer than the minimum window")
    out = np.empty(x.size - min_window)
    csum = np.concatenate([[0.0], np.cumsum(x)])
    csq = np.concatenate([[0.0], np.cumsum(x * x)])
    for i, t in enumerate(range(min_window, x.size)):
        if method == "historical":
            out[i] = var_historical(x[:t], q).value
            continue
        mean = csum[t] / t
        sd = math.sqrt(max(csq[t] - t * mean * mean, 0.0) / (t - 1))
        if method == "gaussian":
            out[i] = var_gaussian(mean, sd, q).value
        elif method == "student":
            if nu is None:
                raise ValueError("student method needs nu")
            out[i] = var_student(mean, sd, nu, q).value
        else:
            raise ValueError(f"unknown rolling method {method!r}")
    return x[min_window:], out
