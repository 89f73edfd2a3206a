"""Extreme-value fitting: block maxima / GEV, peaks over threshold / GPD, Hill.

Shape parameters follow the sign convention where xi > 0 is heavy tailed
(Frechet domain). Distribution functions switch to the Gumbel / exponential
limit when |xi| < 1e-6. The likelihoods instead use a series expansion of
log(1 + xi y) / xi near zero so that they stay smooth for the optimiser and
the finite-difference Hessian.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import kernels
from .garch import numerical_hessian, std_errors_from_hessian
from .series import digest

XI_ZERO = 1e-6


def _vec(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float).reshape(-1)


def _log1p_over_xi(xi: float, y: np.ndarray) -> np.ndarray:
    """log(1 + xi y) / xi, with its Taylor series for tiny xi (limit y at xi = 0)."""
    if abs(xi) < XI_ZERO:
        return y - 0.5 * xi * y * y + xi * xi * y**3 / 3.0
    return np.log1p(xi * y) / xi


# ---------------------------------------------------------------- block maxima / GEV

def block_maxima(series, block_size: int) -> np.ndarray:
    """Maximum of each consecutive full block; a trailing partial block is dropped."""
    x = _vec(series)
    if block_size < 2:
        raise ValueError("block_size must be at least 2")
    if block_size > x.size:
        raise ValueError("block_size exceeds series length")
    k = x.size // block_size
    return x[: k * block_size].reshape(k, block_size).max(axis=1)


def gev_cdf(x, xi: float, mu: float, sigma: float):
    y = (np.asarray(x, dtype=float) - mu) / sigma
    if abs(xi) < XI_ZERO:
        out = np.exp(-np.exp(-y))
    else:
        base = 1.0 + xi * y
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            t = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), -1.0 / xi), np.nan)
        out = np.exp(-t)
        # outside the support: below the lower end (xi > 0) or above the upper end (xi < 0)
        out = np.where(base > 0, out, 0.0 if xi > 0 else 1.0)
    return float(out) if np.ndim(out) == 0 else out


def gev_ppf(p, xi: float, mu: float, sigma: float):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("p must lie in (0, 1)")
    ly = -np.log(p)
    if abs(xi) < XI_ZERO:
        out = mu - sigma * np.log(ly)
    else:
        out = mu + sigma * (ly ** (-xi) - 1.0) / xi
    return float(out) if np.ndim(out) == 0 else out


def gev_loglik(maxima, xi: float, mu: float, sigma: float) -> float:
    m = _vec(maxima)
    if sigma <= 0:
        return -math.inf
    y = (m - mu) / sigma
    if np.any(1.0 + xi * y <= 0):
        return -math.inf
    L = _log1p_over_xi(xi, y)
    return float(np.sum(-math.log(sigma) - (1.0 + xi) * L - np.exp(-L)))


@dataclass
class GevFit:
    xi: float
    mu: float
    sigma: float
    loglik: float
    std_errors: dict[str, float]
    block_size: int | None
    block_count: int

    def cdf(self, x):
        return gev_cdf(x, self.xi, self.mu, self.sigma)

    def ci(self, name: str, level: float = 0.95) -> tuple[float, float]:
        z = kernels.norm_ppf(0.5 + level / 2)
        v, s = getattr(self, name), self.std_errors[name]
        return v - z * s, v + z * s

    def to_dict(self) -> dict:
        return {"method": "gev", "xi": self.xi, "mu": self.mu, "sigma": self.sigma,
                "loglik": self.loglik, "se": self.std_errors,
                "block_size": self.block_size, "block_count": self.block_count}


def fit_gev(maxima, block_size: int | None = None) -> GevFit:
    """ML fit of (xi, mu, sigma) under the support constraint 1 + xi (m - mu)/sigma > 0."""
    m = _vec(maxima)
    if m.size < 20:
        raise ValueError("need at least 20 block maxima")
    if np.ptp(m) == 0:
        raise ValueError("block maxima are constant")
    s = float(np.std(m, ddof=1))
    sig0 = math.sqrt(6.0) * s / math.pi
    mu0 = float(np.mean(m)) - 0.5772156649 * sig0

    def nll(x):
        ll = gev_loglik(m, x[2], x[0], math.exp(x[1]))
        return -ll if math.isfinite(ll) else 1e300

    best = None
    for xi0 in (0.1, -0.1, 0.0):
        res = optimize.minimize(nll, [mu0, math.log(sig0), xi0], method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-11, "maxiter": 8000,
                                         "maxfev": 16000})
        if best is None or res.fun < best.fun:
            best = res
    if best.fun >= 1e299 or not best.success:
        raise RuntimeError("GEV optimisation did not converge")
    mu, sigma, xi = float(best.x[0]), math.exp(best.x[1]), float(best.x[2])
    H = numerical_hessian(lambda p: gev_loglik(m, p[2], p[0], p[1]),
                          np.array([mu, sigma, xi]), rel_step=1e-3)
    se = std_errors_from_hessian(H)
    return GevFit(xi, mu, sigma, -float(best.fun),
                  {"mu": float(se[0]), "sigma": float(se[1]), "xi": float(se[2])},
                  block_size, int(m.size))


def return_level(fit: GevFit, u: float) -> float:
    """Expected number of blocks until a block maximum exceeds ``u``: 1 / (1 - H(u))."""
    h = fit.cdf(u)
    if h >= 1.0:
        raise ValueError("level lies at or beyond the upper end of the fitted support")
    return 1.0 / (1.0 - h)


# ---------------------------------------------------------------- peaks over threshold / GPD

def gpd_cdf(y, xi: float, beta: float):
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    if abs(xi) < XI_ZERO:
        out = -np.expm1(-y / beta)
    else:
        base = np.maximum(1.0 + xi * y / beta, 0.0)
        with np.errstate(divide="ignore"):
            out = 1.0 - base ** (-1.0 / xi)
    return float(out) if np.ndim(out) == 0 else out


def gpd_loglik(excesses, xi: float, beta: float) -> float:
    """-N log(beta) - (1 + 1/xi) sum log(1 + xi e / beta)."""
    e = _vec(excesses)
    if beta <= 0:
        return -math.inf
    y = e / beta
    if np.any(1.0 + xi * y <= 0):
        return -math.inf
    L = _log1p_over_xi(xi, y)
    return float(-e.size * math.log(beta) - np.sum((1.0 + xi) * L))


@dataclass
class GpdFit:
    xi: float
    beta: float
    threshold: float
    n_exceed: int
    n_total: int
    loglik: float
    std_errors: dict[str, float] | None
    flagged: bool = False
    data_digest: str = ""

    def ci(self, name: str, level: float = 0.95) -> tuple[float, float]:
        if self.std_errors is None:
            raise ValueError("standard errors unavailable for this fit")
        z = kernels.norm_ppf(0.5 + level / 2)
        v, s = getattr(self, name), self.std_errors[name]
        return v - z * s, v + z * s

    def tail_cdf(self, x):
        """F(x) = 1 - (N_u/n) (1 + xi (x - u)/beta)^(-1/xi) for x >= u."""
        sf = 1.0 - gpd_cdf(np.asarray(x, dtype=float) - self.threshold, self.xi, self.beta)
        return 1.0 - self.n_exceed / self.n_total * sf

    def to_dict(self) -> dict:
        return {"method": "gpd", "xi": self.xi, "beta": self.beta, "threshold": self.threshold,
                "n_exceed": self.n_exceed, "n_total": self.n_total, "loglik": self.loglik,
                "se": self.std_errors, "flagged": self.flagged, "data_digest": self.data_digest}

    @classmethod
    def from_dict(cls, d: dict) -> "GpdFit":
        return cls(d["xi"], d["beta"], d["threshold"], d["n_exceed"], d["n_total"],
                   d["loglik"], d.get("se"), d.get("flagged", False), d.get("data_digest", ""))


def fit_gpd(series, u: float, min_exceed: int = 30) -> GpdFit:
    """ML fit of a GPD to the excesses x - u of observations strictly above ``u``.

    Standard errors are withheld (and the fit flagged) when xi <= -0.5, where
    the usual asymptotics fail.
    """
    x = _vec(series)
    if u >= np.max(x):
        raise ValueError("threshold at or above the sample maximum")
    e = x[x > u] - u
    if e.size < min_exceed:
        raise ValueError(f"only {e.size} exceedances; need at least {min_exceed}")

    def nll(p):
        xi, beta = p[0], math.exp(p[1])
        if xi <= -1.0:
            return 1e300
        ll = gpd_loglik(e, xi, beta)
        return -ll if math.isfinite(ll) else 1e300

    mean_e = float(np.mean(e))
    best = None
    for xi0 in (0.1, -0.1, 0.3):
        res = optimize.minimize(nll, [xi0, math.log(mean_e * (1 - xi0))], method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    if best.fun >= 1e299 or not best.success:
        raise RuntimeError("GPD optimisation did not converge")
    xi, beta = float(best.x[0]), math.exp(best.x[1])
    flagged = xi <= -0.5
    se = None
    if not flagged:
        H = numerical_hessian(lambda p: gpd_loglik(e, p[0], p[1]), np.array([xi, beta]),
                              rel_step=1e-3)
        s = std_errors_from_hessian(H)
        se = {"xi": float(s[0]), "beta": float(s[1])}
    return GpdFit(xi, beta, float(u), int(e.size), int(x.size), -float(best.fun), se, flagged,
                  digest(x))


# ---------------------------------------------------------------- Hill

@dataclass
class HillFit:
    alpha_hat: float
    ci_low: float
    ci_high: float
    u: float
    N: int

    def to_dict(self) -> dict:
        return {"method": "hill", "alpha": self.alpha_hat, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "u": self.u, "N": self.N}


def hill_estimator(tail, u: float, level: float = 0.95, select: bool = False) -> HillFit:
    """Tail index from 1/alpha = mean(log x_i - log u) with CI alpha (1 -/+ z / sqrt(N)).

    ``tail`` must hold only points above ``u`` unless ``select`` is set, in
    which case observations <= u are discarded first.
    """
    x = _vec(tail)
    if u <= 0:
        raise ValueError("threshold must be positive")
    if select:
        x = x[x > u]
    elif np.any(x <= u):
        raise ValueError("all tail points must exceed the threshold")
    if x.size < 10:
        raise ValueError("need at least 10 tail points")
    alpha = 1.0 / float(np.mean(np.log(x) - math.log(u)))
    z = kernels.norm_ppf(0.5 + level / 2)
    half = z / math.sqrt(x.size)
    return HillFit(alpha, alpha * (1 - half), alpha * (1 + half), float(u), int(x.size))


# ---------------------------------------------------------------- threshold diagnostics

@dataclass(frozen=True)
class MeanExcessPoint:
    u: float
    mean_excess: float
    n_exceed: int
    flagged: bool


def mean_excess_curve(series, grid) -> list[MeanExcessPoint]:
    """Empirical mean excess e_n(u) = sum (x - u)^+ / N_u on a grid of thresholds.

    Points supported by fewer than 5 exceedances are flagged.
    """
    x = np.sort(_vec(series))
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ValueError("empty threshold grid")
    if np.any(grid >= x[-1]):
        raise ValueError("grid contains a threshold at or above the sample maximum")
    if np.any(grid < x[0]):
        raise ValueError("grid extends below the sample minimum")
    csum = np.concatenate([[0.0], np.cumsum(x[::-1])])
    out = []
    for u in grid:
        k = x.size - np.searchsorted(x, u, side="right")
        e = (csum[k] - k * u) / k
        out.append(MeanExcessPoint(float(u), float(e), int(k), bool(k < 5)))
    return out


def write_mean_excess_csv(points: list[MeanExcessPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "mean_excess", "n_exceed", "flagged"])
        for p in points:
            w.writerow([repr(p.u), repr(p.mean_excess), p.n_exceed, int(p.flagged)])


@dataclass(frozen=True)
class ThresholdChoice:
    u: float
    ks_distance: float
    alpha_hat: float
    n_tail: int


def select_threshold_ks(series, min_tail: int = 50, step: int = 5,
                        max_candidates: int = 2000) -> ThresholdChoice:
    """Power-law threshold minimising the KS distance between the tail and its ML fit.

    Candidates are every ``step``-th distinct order statistic that leaves at
    least ``min_tail`` points at or above it; the stride widens so at most
    ``max_candidates`` thresholds are scanned. ``alpha_hat`` is the Pareto
    tail index n / sum log(x / u).
    """
    x = np.sort(_vec(series))
    n = x.size
    if min_tail < 2 or 2 * min_tail > n:
        raise ValueError("need at least 2 * min_tail observations")
    if x[0] <= 0:
        x = x[x > 0]
        n = x.size
        if n < 2 * min_tail:
            raise ValueError("not enough positive observations")
    last = n - min_tail
    stride = max(step, math.ceil((last + 1) / max_candidates))
    lx = np.log(x)
    tail_logsum = np.cumsum(lx[::-1])[::-1]
    best = None
    seen = set()
    for i in range(0, last + 1, stride):
        i = int(np.searchsorted(x, x[i], side="left"))  # first index of a tied block
        if i in seen or i > last:
            continue
        seen.add(i)
        nt = n - i
        s = tail_logsum[i] - nt * lx[i]
        if s <= 0:
            continue
        alpha = nt / s
        tail = x[i:]
        model = 1.0 - (tail / x[i]) ** (-alpha)
        j = np.arange(nt)
        d = float(max(np.max(np.abs((j + 1) / nt - model)), np.max(np.abs(j / nt - model))))
        if best is None or d < best.ks_distance:
            best = ThresholdChoice(float(x[i]), d, float(alpha), int(nt))
    if best is None:
        raise ValueError("no admissible threshold candidates")
    return best
