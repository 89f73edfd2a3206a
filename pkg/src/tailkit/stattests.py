"""Diagnostic, normality and unit-root tests plus the OLS kernel behind them.

Tests return a :class:`TestResult`. Right-tailed statistics (chi-square, KS,
Lilliefors) reject when the statistic exceeds the critical value; the
Dickey-Fuller family is left-tailed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .mc import RngStream
from .series import moments

LEVELS = (0.01, 0.05, 0.10)

# Built-in Dickey-Fuller points for the regression without deterministic terms.
DF_TABLE_NO_CONST = {0.01: -2.58, 0.05: -1.96, 0.10: -1.64}

# Finite-sample response surfaces for the one-regressor case: b_inf + b1/T + b2/T^2 + b3/T^3.
DF_RESPONSE_SURFACE = {
    "c": {0.01: (-3.43035, -6.5393, -16.786, -79.433),
          0.05: (-2.86154, -2.8903, -4.234, -40.040),
          0.10: (-2.56677, -1.5384, -2.809, 0.0)},
    "ct": {0.01: (-3.95877, -9.0531, -28.428, -134.155),
           0.05: (-3.41049, -4.3904, -9.036, -45.374),
           0.10: (-3.12705, -2.5856, -3.925, -22.380)},
}


@dataclass
class TestResult:
    statistic: float
    dist: str
    dof: float | None = None
    p_value: float | None = None
    critical_values: dict[float, float] | None = None
    reject_at: dict[float, bool] | None = None
    extra: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def rejects(self, level: float = 0.05) -> bool:
        if self.reject_at and level in self.reject_at:
            return self.reject_at[level]
        if self.p_value is None:
            raise ValueError("no decision available at this level")
        return self.p_value <= level

    def to_dict(self) -> dict:
        return {
            "stat": self.statistic,
            "dist": self.dist,
            "dof": self.dof,
            "p": self.p_value,
            "critical_values": _keyed(self.critical_values),
            "reject": _keyed(self.reject_at),
            **self.extra,
        }


def _keyed(d):
    return None if d is None else {f"{k:g}": v for k, v in d.items()}


def _right_tailed(stat, dist, dof, p, cvs, **extra) -> TestResult:
    return TestResult(float(stat), dist, dof, p, cvs,
                      {a: bool(stat > c) for a, c in cvs.items()}, extra)


def _left_tailed(stat, dist, dof, p, cvs, **extra) -> TestResult:
    return TestResult(float(stat), dist, dof, p, cvs,
                      {a: bool(stat < c) for a, c in cvs.items()}, extra)


def _chi2_result(stat, k, name, **extra) -> TestResult:
    cvs = {a: kernels.chi2_isf(a, k) for a in LEVELS}
    return _right_tailed(stat, name, k, kernels.chi2_sf(stat, k), cvs, **extra)


def _vec(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float).reshape(-1)


# ---------------------------------------------------------------- OLS

@dataclass
class OlsFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    residuals: np.ndarray
    r_squared: float
    ssr: float
    nobs: int

    @property
    def tvalues(self) -> np.ndarray:
        return self.coefficients / self.std_errors


def ols_fit(y, X, intercept: bool = True) -> OlsFit:
    """Least squares with classical standard errors sigma^2 (X'X)^-1, sigma^2 = SSR/(T-k)."""
    y = _vec(y)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    T, k = X.shape
    if T != y.size:
        raise ValueError("design rows and response length differ")
    if T <= k:
        raise ValueError("insufficient observations for the number of regressors")
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= sv[0] * max(T, k) * 1e-13:
        raise ValueError("design matrix is rank deficient")
    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    ssr = float(resid @ resid)
    s2 = ssr / (T - k)
    rinv = np.linalg.inv(r)
    se = np.sqrt(s2 * np.sum(rinv * rinv, axis=1))
    if intercept:
        sst = float(np.sum((y - y.mean()) ** 2))
    else:
        sst = float(y @ y)
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return OlsFit(beta, se, resid, r2, ssr, T)


def _batch_first_tstat(dy: np.ndarray, X: np.ndarray) -> np.ndarray:
    """t-ratio of the first regressor for a stack of regressions.

    ``dy`` has shape (m, T), ``X`` shape (m, T, k).
    """
    xtx = np.einsum("mtk,mtl->mkl", X, X)
    xty = np.einsum("mtk,mt->mk", X, dy)
    beta = np.linalg.solve(xtx, xty[..., None])[..., 0]
    resid = dy - np.einsum("mtk,mk->mt", X, beta)
    T, k = X.shape[1], X.shape[2]
    s2 = np.sum(resid * resid, axis=1) / (T - k)
    inv00 = np.linalg.inv(xtx)[:, 0, 0]
    return beta[:, 0] / np.sqrt(s2 * inv00)


# ---------------------------------------------------------------- serial correlation

def autocorrelations(x, h: int) -> np.ndarray:
    d = _vec(x)
    d = d - d.mean()
    denom = float(d @ d)
    if denom <= 0:
        raise ValueError("zero-variance series")
    return np.array([float(d[k:] @ d[:-k]) / denom for k in range(1, h + 1)])


def ljung_box(series, h: int = 10, model_dof: int = 0) -> TestResult:
    x = _vec(series)
    T = x.size
    if not 1 <= h < T:
        raise ValueError("need 1 <= h < len(series)")
    dof = h - model_dof
    if dof < 1:
        raise ValueError("h - model_dof must be at least 1")
    tau = autocorrelations(x, h)
    lags = np.arange(1, h + 1)
    q = T * (T + 2) * float(np.sum(tau * tau / (T - lags)))
    return _chi2_result(q, dof, "chi2", lags=h)


def durbin_watson(residuals) -> float:
    e = _vec(residuals)
    if e.size < 2:
        raise ValueError("need at least two residuals")
    denom = float(e @ e)
    if denom == 0:
        raise ValueError("all-zero residuals")
    return float(np.sum(np.diff(e) ** 2) / denom)


def arch_lm(residuals, lags: int = 1) -> TestResult:
    """Engle's LM test: regress e_t^2 on a constant and ``lags`` own lags, stat = T R^2."""
    e = _vec(residuals)
    if lags < 1 or e.size <= lags + 1:
        raise ValueError("series too short for the requested lags")
    e2 = e * e
    y = e2[lags:]
    X = np.column_stack([e2[lags - j:-j] for j in range(1, lags + 1)])
    fit = ols_fit(y, X, intercept=True)
    return _chi2_result(fit.nobs * fit.r_squared, lags, "chi2", r_squared=fit.r_squared)


# ---------------------------------------------------------------- normality

def jarque_bera(series) -> TestResult:
    x = _vec(series)
    if x.size < 8:
        raise ValueError("Jarque-Bera needs at least 8 observations")
    skew, kurt = moments(x)
    T = x.size
    jb = T / 6.0 * skew**2 + T / 24.0 * (kurt - 3.0) ** 2
    return _chi2_result(jb, 2, "chi2", skewness=skew, kurtosis=kurt)


def ks_statistic(a, b) -> float:
    a, b = np.sort(_vec(a)), np.sort(_vec(b))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a, b) -> TestResult:
    """Two-sample KS with the asymptotic Kolmogorov p-value at n_eff = n1 n2 / (n1 + n2)."""
    d = ks_statistic(a, b)
    n1, n2 = _vec(a).size, _vec(b).size
    en = math.sqrt(n1 * n2 / (n1 + n2))
    cvs = {a_: _kolmogorov_isf(a_) / en for a_ in LEVELS}
    return _right_tailed(d, "ks", None, kernels.kolmogorov_sf(en * d), cvs)


def _kolmogorov_isf(alpha: float) -> float:
    lo, hi = 0.1, 5.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if kernels.kolmogorov_sf(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _lilliefors_d(z_sorted: np.ndarray) -> np.ndarray:
    """sup |F_n - Phi| for rows of sorted standardized samples."""
    n = z_sorted.shape[-1]
    phi = kernels.norm_cdf(z_sorted)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - phi, axis=-1)
    d_minus = np.max(phi - (i - 1) / n, axis=-1)
    return np.maximum(d_plus, d_minus)


def _standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, ddof=1, keepdims=True)
    return (x - mu) / sd


def lilliefors_null(n: int, runs: int, stream: RngStream, chunk: int = 2000) -> np.ndarray:
    """Sorted simulated null distribution of the Lilliefors statistic at sample size ``n``."""
    if runs < 1000:
        raise ValueError("runs must be at least 1000")
    out = []
    left = runs
    while left:
        m = min(chunk, left)
        z = np.sort(_standardize(stream.normal((m, n))), axis=1)
        out.append(_lilliefors_d(z))
        left -= m
    return np.sort(np.concatenate(out))


def lilliefors(series, runs: int = 1000, stream: RngStream | None = None,
               null: np.ndarray | None = None) -> TestResult:
    """Normality test with estimated mean/std; critical values simulated at matched n.

    Pass ``null`` (from :func:`lilliefors_null`) to reuse a calibration
    across many samples of the same length.
    """
    x = _vec(series)
    if x.size < 5:
        raise ValueError("Lilliefors needs at least 5 observations")
    if np.std(x) == 0:
        raise ValueError("zero-variance series")
    d = float(_lilliefors_d(np.sort(_standardize(x))))
    if null is None:
        if stream is None:
            raise ValueError("a random stream is required to simulate critical values")
        null = lilliefors_null(x.size, runs, stream)
    null = np.sort(np.asarray(null, dtype=float))
    m = null.size
    p = (np.count_nonzero(null >= d) + 1) / (m + 1)
    cvs = {a: float(np.quantile(null, 1 - a)) for a in LEVELS}
    return _right_tailed(d, "mc_empirical", None, p, cvs, runs=m)


# ---------------------------------------------------------------- unit roots

@dataclass
class McCriticalTable:
    variant: str
    sample_length: int
    quantiles: dict[float, float]
    runs: int
    statistics: np.ndarray = field(repr=False)

    def p_value(self, stat: float) -> float:
        """Left-tail MC p-value, (count(null <= stat) + 1) / (runs + 1)."""
        k = np.searchsorted(self.statistics, stat, side="right")
        return float((k + 1) / (self.runs + 1))

    def bootstrap_se(self, level: float, n_boot: int, stream: RngStream) -> float:
        idx = stream.generator.integers(0, self.runs, size=(n_boot, self.runs))
        qs = np.quantile(self.statistics[idx], level, axis=1)
        return float(np.std(qs, ddof=1))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "T": self.sample_length, "runs": self.runs,
                "quantiles": _keyed(self.quantiles)}


def _check_variant(variant: str) -> None:
    if variant not in ("n", "c", "ct"):
        raise ValueError(f"unknown regression variant {variant!r}")


def _deterministic_columns(variant: str, T: int) -> list[np.ndarray]:
    cols = []
    if variant in ("c", "ct"):
        cols.append(np.ones(T))
    if variant == "ct":
        cols.append(np.arange(1, T + 1, dtype=float))
    return cols


def df_null_statistics(variant: str, T: int, runs: int, stream: RngStream,
                       chunk: int = 5000) -> np.ndarray:
    """t-ratios of gamma in dy_t = [det] + gamma y_{t-1} + e_t on simulated random walks.

    ``T`` is the number of regression observations.
    """
    _check_variant(variant)
    det = _deterministic_columns(variant, T)
    out = []
    left = runs
    while left:
        m = min(chunk, left)
        e = stream.normal((m, T))
        y = np.cumsum(e, axis=1)
        ylag = np.concatenate([np.zeros((m, 1)), y[:, :-1]], axis=1)
        X = np.stack([ylag] + [np.broadcast_to(c, (m, T)) for c in det], axis=2)
        out.append(_batch_first_tstat(e, X))
        left -= m
    return np.concatenate(out)


def df_mc_critical_values(variant: str, T: int, runs: int, stream: RngStream) -> McCriticalTable:
    if runs < 1000:
        raise ValueError("runs must be at least 1000")
    if T < 25:
        raise ValueError("T must be at least 25")
    stats_ = np.sort(df_null_statistics(variant, T, runs, stream))
    q = {a: float(np.quantile(stats_, a)) for a in LEVELS}
    return McCriticalTable(variant, T, q, runs, stats_)


def mackinnon_critical_values(variant: str, T: int) -> dict[float, float]:
    """Finite-sample Dickey-Fuller critical values; the built-in table for variant ``n``."""
    _check_variant(variant)
    if variant == "n":
        return dict(DF_TABLE_NO_CONST)
    return {a: b0 + b1 / T + b2 / T**2 + b3 / T**3
            for a, (b0, b1, b2, b3) in DF_RESPONSE_SURFACE[variant].items()}


def _adf_design(y: np.ndarray, variant: str, lags: int, start: int):
    """Response and design for dy_t on y_{t-1}, deterministics and ``lags`` lagged differences.

    Rows use t = start..N-1 so that all lag orders up to ``start - 1`` share a sample.
    """
    dy = np.diff(y)
    rows = np.arange(start, y.size)
    resp = dy[rows - 1]
    cols = [y[rows - 1]]
    if variant in ("c", "ct"):
        cols.append(np.ones(rows.size))
    if variant == "ct":
        cols.append(rows.astype(float))
    for j in range(1, lags + 1):
        cols.append(dy[rows - 1 - j])
    return resp, np.column_stack(cols)


def default_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(series, variant: str = "c", max_lag: int | None = None,
             lag_selection: str = "bic",
             critical_table: McCriticalTable | None = None) -> TestResult:
    """Augmented Dickey-Fuller t-test on gamma (H0: unit root).

    Lag order is fixed at ``max_lag`` or chosen by AIC/BIC over 0..max_lag on
    a common sample, then the chosen model is refit on all usable rows.
    """
    _check_variant(variant)
    y = _vec(series)
    if max_lag is None:
        max_lag = default_max_lag(y.size)
    if y.size <= max_lag + 3:
        raise ValueError("series too short for the requested lag order")
    if lag_selection == "fixed":
        lags = max_lag
    elif lag_selection in ("aic", "bic"):
        best = None
        for p in range(max_lag + 1):
            resp, X = _adf_design(y, variant, p, max_lag + 1)
            fit = ols_fit(resp, X, intercept=False)
            T, k = X.shape
            pen = 2.0 * k if lag_selection == "aic" else k * math.log(T)
            ic = T * math.log(fit.ssr / T) + pen
            if best is None or ic < best[0] - 1e-12:
                best = (ic, p)
        lags = best[1]
    else:
        raise ValueError(f"unknown lag selection {lag_selection!r}")
    resp, X = _adf_design(y, variant, lags, lags + 1)
    if resp.size <= X.shape[1]:
        raise ValueError("series too short for the requested lag order")
    fit = ols_fit(resp, X, intercept=False)
    stat = float(fit.tvalues[0])
    if critical_table is not None:
        if critical_table.variant != variant:
            raise ValueError("critical table built for a different regression variant")
        cvs, p = dict(critical_table.quantiles), critical_table.p_value(stat)
        dist = "mc_empirical"
    else:
        cvs, p = mackinnon_critical_values(variant, resp.size), None
        dist = f"dickey_fuller({variant})"
    return _left_tailed(stat, dist, None, p, cvs, lags=lags, nobs=int(resp.size),
                        variant=variant)


def _eg_batch_statistics(y: np.ndarray, x: np.ndarray, lags: int) -> np.ndarray:
    """Engle-Granger residual DF t-ratios for stacked pairs (m, N)."""
    xm = x - x.mean(axis=1, keepdims=True)
    ym = y - y.mean(axis=1, keepdims=True)
    slope = np.sum(xm * ym, axis=1) / np.sum(xm * xm, axis=1)
    e = ym - slope[:, None] * xm
    de = np.diff(e, axis=1)
    N = y.shape[1]
    rows = np.arange(lags + 1, N)
    resp = de[:, rows - 1]
    cols = [e[:, rows - 1]] + [de[:, rows - 1 - j] for j in range(1, lags + 1)]
    return _batch_first_tstat(resp, np.stack(cols, axis=2))


def engle_granger_coint(y, x, lags: int = 0, runs: int = 2000,
                        stream: RngStream | None = None) -> TestResult:
    """Two-step cointegration test (H0: no cointegration).

    Step 1 regresses ``y`` on a constant and ``x``; step 2 runs a
    Dickey-Fuller regression without deterministics on the residuals. Critical
    values come from simulating the same two steps on independent random
    walks of the observed length; the default stream is seed 0.
    """
    y, x = _vec(y), _vec(x)
    if y.size != x.size:
        raise ValueError("series differ in length")
    if y.size < 30:
        raise ValueError("need at least 30 observations")
    step1 = ols_fit(y, x, intercept=True)
    e = step1.residuals
    resp, X = _adf_design(e, "n", lags, lags + 1)
    stat = float(ols_fit(resp, X, intercept=False).tvalues[0])
    if runs < 1000:
        raise ValueError("runs must be at least 1000")
    stream = stream or RngStream(0)
    null = []
    left = runs
    while left:
        m = min(2000, left)
        rw = np.cumsum(stream.normal((2, m, y.size)), axis=2)
        null.append(_eg_batch_statistics(rw[0], rw[1], lags))
        left -= m
    null = np.sort(np.concatenate(null))
    cvs = {a: float(np.quantile(null, a)) for a in LEVELS}
    p = float((np.searchsorted(null, stat, side="right") + 1) / (runs + 1))
    return _left_tailed(stat, "mc_empirical", None, p, cvs, runs=runs,
                        coefficients=step1.coefficients.tolist())
