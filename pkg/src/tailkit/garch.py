"""AR(1)-GARCH(1,1) filtering, simulation and conditional maximum likelihood.

Model::

    r_t       = mu_t + sigma_t z_t
    mu_t      = mu + theta r_{t-1}
    sigma_t^2 = omega + alpha1 (r_{t-1} - mu_{t-1})^2 + beta1 sigma_{t-1}^2

The likelihood conditions on r_0 and sigma_0. The residual at t = 0 uses the
unconditional mean mu / (1 - theta) as mu_0, which is also how
:func:`simulate_garch` starts its paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, signal, special

from .mc import RngStream
from .series import Convention, ReturnSeries, digest

_NORM_CONST = -0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GarchSpec:
    mu: float = 0.0
    theta: float = 0.0
    omega: float = 0.1
    alpha1: float = 0.1
    beta1: float = 0.8
    innovation: str = "normal"
    nu: float | None = None

    def __post_init__(self):
        if self.omega < 0 or self.alpha1 < 0 or self.beta1 < 0:
            raise ValueError("omega, alpha1 and beta1 must be nonnegative")
        if self.alpha1 + self.beta1 >= 1:
            raise ValueError("alpha1 + beta1 must be below 1 for covariance stationarity")
        if not abs(self.theta) < 1:
            raise ValueError("AR coefficient must satisfy |theta| < 1")
        if self.innovation == "student":
            if self.nu is None or not self.nu > 2:
                raise ValueError("student innovations need nu > 2")
        elif self.innovation != "normal":
            raise ValueError(f"unknown innovation law {self.innovation!r}")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha1 - self.beta1)

    @property
    def unconditional_mean(self) -> float:
        return self.mu / (1.0 - self.theta)

    def to_dict(self) -> dict:
        d = {"mu": self.mu, "theta": self.theta, "omega": self.omega,
             "alpha1": self.alpha1, "beta1": self.beta1, "innovation": self.innovation}
        if self.nu is not None:
            d["nu"] = self.nu
        return d


@dataclass
class GarchFit:
    spec: GarchSpec
    loglik: float
    sigma_path: np.ndarray
    z: np.ndarray
    std_errors: dict[str, float]
    r_last: float
    a_last: float
    sigma0_sq: float
    boundary: bool = False
    converged: bool = True
    n_obs: int = 0
    z_digest: str = field(default="", repr=False)
    loss_oriented: bool = False
    loss_z_digest: str = field(default="", repr=False)

    def __post_init__(self):
        if not self.z_digest:
            self.z_digest = digest(self.z)
        if not self.loss_z_digest:
            self.loss_z_digest = digest(self.loss_innovations())

    def loss_innovations(self) -> np.ndarray:
        """Standardised innovations oriented so that large positive values are losses."""
        return self.z if self.loss_oriented else -self.z

    def loss_mean_forecast(self) -> float:
        m = self.spec.mu + self.spec.theta * self.r_last
        return m if self.loss_oriented else -m

    def to_dict(self) -> dict:
        return {
            "params": self.spec.to_dict(),
            "se": self.std_errors,
            "loglik": self.loglik,
            "boundary": self.boundary,
            "converged": self.converged,
            "n_obs": self.n_obs,
            "state": {"r_last": self.r_last, "a_last": self.a_last,
                      "sigma_last": float(self.sigma_path[-1]), "sigma0_sq": self.sigma0_sq},
            "z_digest": self.z_digest,
            "loss_oriented": self.loss_oriented,
            "loss_z_digest": self.loss_z_digest,
        }

    @classmethod
    def from_dict(cls, d: dict, z=None) -> "GarchFit":
        """Rebuild enough of a fit for forecasting from its JSON form."""
        st = d["state"]
        sigma = np.array([st["sigma_last"]])
        return cls(GarchSpec(**d["params"]), d["loglik"], sigma,
                   np.asarray(z if z is not None else [], dtype=float), d.get("se", {}),
                   st["r_last"], st["a_last"], st["sigma0_sq"], d.get("boundary", False),
                   d.get("converged", True), d.get("n_obs", 0), d.get("z_digest", ""),
                   d.get("loss_oriented", False), d.get("loss_z_digest", ""))


def _values(series) -> np.ndarray:
    return np.asarray(getattr(series, "values", series), dtype=float).reshape(-1)


def _recursion(r, mu, theta, omega, alpha, beta, sigma0_sq):
    """Conditional means, residuals and variances for t = 1..n."""
    mean_t = mu + theta * r[:-1]
    a = r[1:] - mean_t
    a_prev = np.empty_like(a)
    a_prev[0] = r[0] - mu / (1.0 - theta)
    a_prev[1:] = a[:-1]
    drive = omega + alpha * a_prev * a_prev
    sig2, _ = signal.lfilter([1.0], [1.0, -beta], drive, zi=[beta * sigma0_sq])
    return mean_t, a, sig2


def _student_logpdf_unit(z, nu):
    """Log density of a Student-t rescaled to unit variance."""
    c = (special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu)
         - 0.5 * math.log(math.pi * (nu - 2)))
    return c - 0.5 * (nu + 1) * np.log1p(z * z / (nu - 2))


def _loglik_raw(r, mu, theta, omega, alpha, beta, nu, sigma0_sq) -> float:
    _, a, sig2 = _recursion(r, mu, theta, omega, alpha, beta, sigma0_sq)
    if not np.all(sig2 > 0):
        return -np.inf
    if nu is None:
        ll = np.sum(_NORM_CONST - 0.5 * np.log(sig2) - 0.5 * a * a / sig2)
    else:
        z = a / np.sqrt(sig2)
        ll = np.sum(_student_logpdf_unit(z, nu) - 0.5 * np.log(sig2))
    return float(ll)


def _check_inputs(r: np.ndarray, spec: GarchSpec, min_len: int = 10):
    if r.size < min_len:
        raise ValueError(f"need at least {min_len} observations")
    if spec.omega == 0 and spec.alpha1 == 0:
        raise ValueError("omega = alpha1 = 0 gives a variance path decaying to zero")


def _sigma0_sq(r: np.ndarray, sigma0_sq: float | None) -> float:
    s = float(np.var(r, ddof=1)) if sigma0_sq is None else float(sigma0_sq)
    if not s > 0:
        raise ValueError("initial variance must be positive")
    return s


def garch_loglik(series, spec: GarchSpec, sigma0_sq: float | None = None) -> float:
    """Conditional log-likelihood given r_0 and sigma_0 (default: sample variance)."""
    r = _values(series)
    _check_inputs(r, spec)
    s0 = _sigma0_sq(r, sigma0_sq)
    ll = _loglik_raw(r, spec.mu, spec.theta, spec.omega, spec.alpha1, spec.beta1,
                     spec.nu if spec.innovation == "student" else None, s0)
    if not math.isfinite(ll):
        raise ValueError("log-likelihood is not finite for this specification")
    return ll


def filter_standardized(series, spec: GarchSpec, sigma0_sq: float | None = None):
    """Return ``(sigma_path, z)`` with r_t = mu_t + sigma_t z_t for t = 1..n."""
    r = _values(series)
    _check_inputs(r, spec)
    s0 = _sigma0_sq(r, sigma0_sq)
    _, a, sig2 = _recursion(r, spec.mu, spec.theta, spec.omega, spec.alpha1, spec.beta1, s0)
    if not np.all(sig2 > 0):
        raise ValueError("variance path is not strictly positive")
    sigma = np.sqrt(sig2)
    return sigma, a / sigma


def _innovations(stream: RngStream, spec: GarchSpec, n: int) -> np.ndarray:
    if spec.innovation == "student":
        t = stream.generator.standard_t(spec.nu, n)
        return t * math.sqrt((spec.nu - 2.0) / spec.nu)
    return stream.normal(n)


def simulate_garch(stream: RngStream, spec: GarchSpec, T: int,
                   convention: Convention | str = Convention.LOG_RETURN,
                   return_innovations: bool = False):
    """Simulate ``T`` observations, starting from the unconditional mean and variance.

    With ``return_innovations`` the driving ``z`` and ``sigma`` (both length
    ``T``, index 0 being the start-up draw) are returned alongside the series.
    """
    if T < 2:
        raise ValueError("T must be at least 2")
    z = _innovations(stream, spec, T)
    r = np.empty(T)
    sig = np.empty(T)
    s2 = spec.unconditional_variance
    sig[0] = math.sqrt(s2)
    a_prev = sig[0] * z[0]
    r[0] = spec.unconditional_mean + a_prev
    omega, alpha, beta, mu, theta = spec.omega, spec.alpha1, spec.beta1, spec.mu, spec.theta
    for t in range(1, T):
        s2 = omega + alpha * a_prev * a_prev + beta * s2
        s = math.sqrt(s2)
        a_prev = s * z[t]
        r[t] = mu + theta * r[t - 1] + a_prev
        sig[t] = s
    series = ReturnSeries(r, convention)
    if return_innovations:
        return series, z, sig
    return series


# ---------------------------------------------------------------- estimation

def _unpack(x: np.ndarray, student: bool):
    mu = float(x[0])
    theta = math.tanh(x[1])
    omega = math.exp(x[2])
    persistence = float(special.expit(x[3]))
    share = float(special.expit(x[4]))
    alpha, beta = persistence * share, persistence * (1.0 - share)
    nu = 2.0 + math.exp(x[5]) if student else None
    return mu, theta, omega, alpha, beta, nu


def _pack(mu, theta, omega, alpha, beta, nu):
    persistence = alpha + beta
    share = alpha / persistence
    x = [mu, math.atanh(theta), math.log(omega), special.logit(persistence), special.logit(share)]
    if nu is not None:
        x.append(math.log(nu - 2.0))
    return np.array(x, dtype=float)


_PARAM_NAMES = ("mu", "theta", "omega", "alpha1", "beta1", "nu")


def numerical_hessian(f, x: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    k = x.size
    h = rel_step * np.maximum(np.abs(x), 1e-2)
    H = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4.0 * h[i] * h[j])
    return H


def std_errors_from_hessian(H: np.ndarray) -> np.ndarray:
    """Square roots of the diagonal of the inverse observed information (-H)."""
    try:
        cov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return np.full(H.shape[0], np.nan)
    d = np.diag(cov)
    return np.where(d > 0, np.sqrt(np.abs(d)), np.nan)


def fit_ar_garch(series, innovation: str = "normal", restarts: int = 5,
                 sigma0_sq: float | None = None) -> GarchFit:
    """Conditional (pseudo) ML fit of AR(1)-GARCH(1,1).

    Nelder-Mead runs in an unconstrained parametrisation (log omega, tanh
    theta, logistic persistence and alpha share) and is restarted from the
    incumbent up to ``restarts`` times.
    """
    r = _values(series)
    if r.size < 250:
        raise ValueError("fit_ar_garch needs at least 250 observations")
    if np.ptp(r) == 0:
        raise ValueError("cannot fit a constant series")
    if innovation not in ("normal", "student"):
        raise ValueError(f"unknown innovation law {innovation!r}")
    student = innovation == "student"
    s0 = _sigma0_sq(r, sigma0_sq)

    def nll(x):
        try:
            p = _unpack(x, student)
        except (OverflowError, ValueError):
            return 1e300
        if not 0 < p[3] + p[4] < 1:
            return 1e300
        ll = _loglik_raw(r, *p, s0)
        return -ll if math.isfinite(ll) else 1e300

    var = float(np.var(r))
    lag1 = float(np.corrcoef(r[1:], r[:-1])[0, 1]) if np.std(r[:-1]) > 0 else 0.0
    theta0 = float(np.clip(lag1, -0.5, 0.5))
    starts = [
        _pack(float(np.mean(r)) * (1 - theta0), theta0, var * 0.05, 0.05, 0.90, 8.0 if student else None),
        _pack(float(np.mean(r)), 0.0, var * 0.3, 0.15, 0.55, 5.0 if student else None),
    ]
    opts = {"maxiter": 6000, "maxfev": 12000, "xatol": 1e-7, "fatol": 1e-9, "adaptive": True}
    best = None
    for x0 in starts:
        res = optimize.minimize(nll, x0, method="Nelder-Mead", options=opts)
        if best is None or res.fun < best.fun:
            best = res
    for _ in range(restarts):
        res = optimize.minimize(nll, best.x, method="Nelder-Mead", options=opts)
        improved = best.fun - res.fun
        if res.fun <= best.fun:
            best = res
        if improved < 1e-8:
            break
    if best.fun >= 1e299:
        raise RuntimeError("GARCH optimisation failed to find a feasible point")
    converged = bool(best.success)
    if not converged:
        raise RuntimeError(f"GARCH optimisation did not converge: {best.message}")

    mu, theta, omega, alpha, beta, nu = _unpack(best.x, student)
    spec = GarchSpec(mu, theta, omega, alpha, beta, innovation, nu)
    natural = np.array([mu, theta, omega, alpha, beta] + ([nu] if student else []))

    def ll_natural(p):
        return _loglik_raw(r, p[0], p[1], p[2], p[3], p[4], p[5] if student else None, s0)

    se = std_errors_from_hessian(numerical_hessian(ll_natural, natural))
    names = _PARAM_NAMES[: natural.size]
    sigma, z = filter_standardized(r, spec, s0)
    boundary = alpha < 1e-6 or beta < 1e-6 or alpha + beta > 1 - 1e-6
    _, a, _ = _recursion(r, mu, theta, omega, alpha, beta, s0)
    loss = getattr(series, "convention", None) == Convention.LOSS
    return GarchFit(spec, -float(best.fun), sigma, z,
                    {k: float(v) for k, v in zip(names, se)},
                    float(r[-1]), float(a[-1]), s0, boundary, converged, int(r.size),
                    loss_oriented=loss)


def forecast_sigma(fit: GarchFit, horizon: int = 1) -> np.ndarray:
    """Conditional standard deviation forecasts for steps 1..horizon."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    s = fit.spec
    out = np.empty(horizon)
    v = s.omega + s.alpha1 * fit.a_last**2 + s.beta1 * float(fit.sigma_path[-1]) ** 2
    out[0] = v
    persistence = s.alpha1 + s.beta1
    for k in range(1, horizon):
        v = s.omega + persistence * v
        out[k] = v
    return np.sqrt(out)


def forecast_mean(fit: GarchFit) -> float:
    return fit.spec.mu + fit.spec.theta * fit.r_last


def conditional_mean_path(series, spec: GarchSpec) -> np.ndarray:
    r = _values(series)
    return spec.mu + spec.theta * r[:-1]


def with_spec(fit: GarchFit, **changes) -> GarchFit:
    return replace(fit, spec=replace(fit.spec, **changes))
