"""Bivariate copulas: Gaussian, Student-t, Clayton, Gumbel, Frank and independence.

The Frank family uses C(u, v) = -log(1 + (e^{-tu} - 1)(e^{-tv} - 1)/(e^{-t} - 1)) / t,
so that theta > 0 means positive dependence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from . import kernels
from .mc import RngStream, sample_mvnormal
from .series import mean_ranks

FAMILIES = ("independence", "gaussian", "student_t", "clayton", "gumbel", "frank")
_FRANK_ZERO = 1e-10


@dataclass(frozen=True)
class CopulaSpec:
    family: str
    theta: float | None = None  # rho for the elliptical families
    nu: float | None = None
    loglik: float | None = None

    def __post_init__(self):
        f, t = self.family, self.theta
        if f not in FAMILIES:
            raise ValueError(f"unknown copula family {f!r}")
        if f == "independence":
            return
        if t is None or not math.isfinite(t):
            raise ValueError(f"{f} copula needs a finite parameter")
        if f in ("gaussian", "student_t") and not -1 < t < 1:
            raise ValueError("rho must lie in (-1, 1)")
        if f == "student_t" and (self.nu is None or not self.nu > 2):
            raise ValueError("student_t copula needs nu > 2")
        if f == "clayton" and not t > 0:
            raise ValueError("clayton theta must be positive")
        if f == "gumbel" and not t >= 1:
            raise ValueError("gumbel theta must be at least 1")
        if f == "frank" and t == 0:
            raise ValueError("frank theta must be nonzero")

    @property
    def rho(self) -> float | None:
        return self.theta if self.family in ("gaussian", "student_t") else None

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family in ("gaussian", "student_t"):
            d["rho"] = self.theta
        elif self.theta is not None:
            d["theta"] = self.theta
        if self.nu is not None:
            d["nu"] = self.nu
        if self.loglik is not None:
            d["loglik"] = self.loglik
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CopulaSpec":
        return cls(d["family"], d.get("rho", d.get("theta")), d.get("nu"), d.get("loglik"))


@dataclass(frozen=True)
class PseudoSample:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError("u and v differ in length")
        if np.any((self.u <= 0) | (self.u >= 1) | (self.v <= 0) | (self.v >= 1)):
            raise ValueError("pseudo-observations must lie strictly inside (0, 1)")

    def __len__(self) -> int:
        return int(self.u.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v"])
            for a, b in zip(self.u, self.v):
                w.writerow([repr(float(a)), repr(float(b))])


@dataclass(frozen=True)
class TailDependence:
    lambda_lower: float
    lambda_upper: float
    method: str = "analytic"
    converged: bool = True

    def to_dict(self) -> dict:
        return {"lambda_lower": self.lambda_lower, "lambda_upper": self.lambda_upper,
                "method": self.method, "converged": self.converged}


def pseudo_observations(x, y) -> PseudoSample:
    """Ranks scaled by n + 1; ties share their mean rank."""
    x = np.asarray(getattr(x, "values", x), dtype=float).reshape(-1)
    y = np.asarray(getattr(y, "values", y), dtype=float).reshape(-1)
    if x.size != y.size:
        raise ValueError("x and y differ in length")
    if x.size == 0:
        raise ValueError("empty sample")
    n1 = x.size + 1.0
    return PseudoSample(mean_ranks(x) / n1, mean_ranks(y) / n1)


# ---------------------------------------------------------------- tau inversion

def _debye1(x: float) -> float:
    """D_1(x) = (1/x) int_0^x t / (e^t - 1) dt."""
    if x == 0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / math.expm1(t) if t != 0 else 1.0, 0.0, x)
    return val / x


def frank_tau(theta: float) -> float:
    if theta == 0:
        return 0.0
    return 1.0 - 4.0 / theta * (1.0 - _debye1(theta))


def kendall_tau_of(spec: CopulaSpec) -> float:
    """Population Kendall tau implied by a copula."""
    f, t = spec.family, spec.theta
    if f == "independence":
        return 0.0
    if f in ("gaussian", "student_t"):
        return 2.0 / math.pi * math.asin(t)
    if f == "clayton":
        return t / (t + 2.0)
    if f == "gumbel":
        return 1.0 - 1.0 / t
    return frank_tau(t)


def fit_tau_inversion(tau: float, family: str, nu: float | None = None) -> CopulaSpec:
    """Parameter matching a Kendall tau: Gumbel 1/(1-tau), Clayton 2 tau/(1-tau),
    elliptical sin(pi tau / 2), Frank by root finding on its tau(theta)."""
    if not -1 < tau < 1:
        raise ValueError("tau must lie in (-1, 1)")
    if family == "gumbel":
        if tau < 0:
            raise ValueError("gumbel needs tau >= 0")
        return CopulaSpec("gumbel", 1.0 / (1.0 - tau))
    if family == "clayton":
        if tau <= 0:
            raise ValueError("clayton needs tau > 0")
        return CopulaSpec("clayton", 2.0 * tau / (1.0 - tau))
    if family == "gaussian":
        return CopulaSpec("gaussian", math.sin(math.pi * tau / 2.0))
    if family == "student_t":
        return CopulaSpec("student_t", math.sin(math.pi * tau / 2.0), 4.0 if nu is None else nu)
    if family == "frank":
        if tau == 0:
            raise ValueError("frank needs tau != 0")
        hi = 1.0
        while (frank_tau(hi) - abs(tau)) < 0:
            hi *= 2.0
            if hi > 1e4:
                raise ValueError("tau too close to 1 for the frank family")
        th = optimize.brentq(lambda t: frank_tau(t) - abs(tau), 1e-8, hi, xtol=1e-13)
        return CopulaSpec("frank", math.copysign(th, tau))
    raise ValueError(f"tau inversion not available for {family!r}")


# ---------------------------------------------------------------- CDF

def _prep(u, v, closed: bool):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    lo_bad = (u < 0) | (v < 0) | (u > 1) | (v > 1) if closed else (u <= 0) | (v <= 0) | (u >= 1) | (v >= 1)
    if np.any(lo_bad) or np.any(~np.isfinite(u)) or np.any(~np.isfinite(v)):
        raise ValueError("copula arguments outside the unit square" if closed
                         else "copula arguments must lie strictly inside (0, 1)")
    return u, v


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF via Owen's T function."""
    h = np.where(h == 0, 1e-300, h)
    k = np.where(k == 0, 1e-300, k)
    s = math.sqrt(1.0 - rho * rho)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ah = (k - rho * h) / (h * s)
        ak = (h - rho * k) / (k * s)
    delta = np.where(np.sign(h) == np.sign(k), 0.0, 0.5)
    out = (0.5 * special.ndtr(h) + 0.5 * special.ndtr(k)
           - special.owens_t(h, ah) - special.owens_t(k, ak) - delta)
    return np.clip(out, 0.0, np.minimum(special.ndtr(h), special.ndtr(k)))


def _t_cdf_point(x: float, y: float, rho: float, nu: float) -> float:
    # integrate the conditional law of Y given X = s against the density of X
    scale = lambda s: math.sqrt((nu + s * s) * (1 - rho * rho) / (nu + 1))
    f = lambda s: (math.exp(special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2))
                   / math.sqrt(nu * math.pi) * (1 + s * s / nu) ** (-(nu + 1) / 2)
                   * special.stdtr(nu + 1, (y - rho * s) / scale(s)))
    val, _ = integrate.quad(f, -np.inf, x, epsabs=1e-13, epsrel=1e-11, limit=200)
    return val


def _cdf_interior(spec: CopulaSpec, u, v):
    f, t = spec.family, spec.theta
    if f == "independence" or (f == "gumbel" and t == 1.0):
        return u * v
    if f == "gaussian":
        return _bvn_cdf(special.ndtri(u), special.ndtri(v), t)
    if f == "student_t":
        x = special.stdtrit(spec.nu, u)
        y = special.stdtrit(spec.nu, v)
        vals = np.vectorize(lambda a, b: _t_cdf_point(a, b, t, spec.nu))(x, y)
        return np.clip(vals, np.maximum(u + v - 1, 0), np.minimum(u, v))
    if f == "clayton":
        return (u ** -t + v ** -t - 1.0) ** (-1.0 / t)
    if f == "gumbel":
        a = ((-np.log(u)) ** t + (-np.log(v)) ** t) ** (1.0 / t)
        return np.exp(-a)
    # frank
    return -np.log1p(np.expm1(-t * u) * np.expm1(-t * v) / np.expm1(-t)) / t


def copula_cdf(spec: CopulaSpec, u, v):
    """C(u, v); on the boundary of the unit square the exact limits
    C(u, 0) = C(0, v) = 0, C(u, 1) = u and C(1, v) = v are returned."""
    u, v = _prep(u, v, closed=True)
    inner = (u > 0) & (u < 1) & (v > 0) & (v < 1)
    out = np.where(u == 1, v, np.where(v == 1, u, 0.0)).astype(float)
    if np.any(inner):
        out[inner] = _cdf_interior(spec, u[inner], v[inner])
    return _out(out)


# ---------------------------------------------------------------- density

def copula_density(spec: CopulaSpec, u, v):
    u, v = _prep(u, v, closed=False)
    f, t = spec.family, spec.theta
    if f == "independence":
        return _out(np.ones_like(u))
    if f == "gaussian":
        x, y = special.ndtri(u), special.ndtri(v)
        r2 = 1.0 - t * t
        q = (t * t * (x * x + y * y) - 2.0 * t * x * y) / (2.0 * r2)
        return _out(np.exp(-q) / math.sqrt(r2))
    if f == "student_t":
        nu = spec.nu
        x, y = special.stdtrit(nu, u), special.stdtrit(nu, v)
        r2 = 1.0 - t * t
        logk = (special.gammaln((nu + 2) / 2) + special.gammaln(nu / 2)
                - 2.0 * special.gammaln((nu + 1) / 2))
        num = -(nu + 2) / 2 * np.log1p((x * x + y * y - 2 * t * x * y) / (nu * r2))
        den = -(nu + 1) / 2 * (np.log1p(x * x / nu) + np.log1p(y * y / nu))
        return _out(np.exp(logk - 0.5 * math.log(r2) + num - den))
    if f == "clayton":
        s = u ** -t + v ** -t - 1.0
        return _out((1.0 + t) * (u * v) ** (-t - 1.0) * s ** (-1.0 / t - 2.0))
    if f == "gumbel":
        x, y = -np.log(u), -np.log(v)
        a = (x ** t + y ** t) ** (1.0 / t)
        return _out(np.exp(-a) / (u * v) * (x * y) ** (t - 1.0) * a ** (1.0 - 2.0 * t)
                    * (a + t - 1.0))
    # frank
    if abs(t) < _FRANK_ZERO:
        return _out(np.ones_like(u))
    em = -math.expm1(-t)
    den = em - np.expm1(-t * u) * np.expm1(-t * v)
    return _out(t * em * np.exp(-t * (u + v)) / (den * den))


def _log_density_sum(spec: CopulaSpec, u, v) -> float:
    with np.errstate(all="ignore"):
        c = copula_density(spec, u, v)
    c = np.asarray(c)
    if np.any(~np.isfinite(c)) or np.any(c <= 0):
        return -math.inf
    return float(np.sum(np.log(c)))


# ---------------------------------------------------------------- canonical ML

_BOUNDS = {"gaussian": (-0.999, 0.999), "student_t": (-0.999, 0.999),
           "clayton": (1e-4, 40.0), "gumbel": (1.0, 25.0), "frank": (-60.0, 60.0)}


def _profile(family, u, v, nu=None):
    lo, hi = _BOUNDS[family]

    def nll(t):
        if family == "frank" and t == 0:
            return 0.0
        ll = _log_density_sum(CopulaSpec(family, t, nu), u, v)
        return -ll if math.isfinite(ll) else 1e300

    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-8, "maxiter": 500})
    if not res.success or res.fun >= 1e299:
        raise RuntimeError(f"CML optimisation failed for {family}")
    theta = float(res.x)
    if family == "gumbel" and nll(1.0) <= res.fun:
        theta = 1.0
    return theta, -float(nll(theta))


def _profile_t(u, v, nu: float):
    # quantiles depend only on nu, so transform once per profile
    x, y = special.stdtrit(nu, u), special.stdtrit(nu, v)
    base = (special.gammaln((nu + 2) / 2) + special.gammaln(nu / 2)
            - 2.0 * special.gammaln((nu + 1) / 2)) * x.size \
        + (nu + 1) / 2 * float(np.sum(np.log1p(x * x / nu) + np.log1p(y * y / nu)))
    sxx = x * x + y * y
    sxy = x * y

    def nll(r):
        r2 = 1.0 - r * r
        return -(base - 0.5 * x.size * math.log(r2)
                 - (nu + 2) / 2 * float(np.sum(np.log1p((sxx - 2 * r * sxy) / (nu * r2)))))

    res = optimize.minimize_scalar(nll, bounds=_BOUNDS["student_t"], method="bounded",
                                   options={"xatol": 1e-8, "maxiter": 500})
    if not res.success:
        raise RuntimeError("CML optimisation failed for student_t")
    return float(res.x), -float(res.fun)


def fit_cml(sample: PseudoSample, family: str) -> CopulaSpec:
    """Maximise sum log c(u_i, v_i) over the family parameter.

    For the Student-t family nu is profiled over the integers 3..30.
    """
    if len(sample) < 50:
        raise ValueError("canonical ML needs at least 50 observations")
    u, v = sample.u, sample.v
    if family == "independence":
        return CopulaSpec("independence", loglik=0.0)
    if family not in _BOUNDS:
        raise ValueError(f"unknown copula family {family!r}")
    if family == "student_t":
        best = None
        for nu in range(3, 31):
            th, ll = _profile_t(u, v, float(nu))
            if best is None or ll > best[2]:
                best = (th, float(nu), ll)
        return CopulaSpec("student_t", best[0], best[1], best[2])
    th, ll = _profile(family, u, v)
    if family == "frank" and th == 0:
        th = _FRANK_ZERO
    return CopulaSpec(family, th, None, ll)


# ---------------------------------------------------------------- sampling

def conditional_cdf(spec: CopulaSpec, u, v):
    """h(v | u) = dC(u, v)/du for the Archimedean families."""
    f, t = spec.family, spec.theta
    if f == "clayton":
        return u ** (-t - 1.0) * (u ** -t + v ** -t - 1.0) ** (-1.0 / t - 1.0)
    if f == "gumbel":
        x, y = -np.log(u), -np.log(v)
        a = (x ** t + y ** t) ** (1.0 / t)
        return np.exp(-a) * a ** (1.0 - t) * x ** (t - 1.0) / u
    if f == "frank":
        eu, ev = np.expm1(-t * u), np.expm1(-t * v)
        return (eu + 1.0) * ev / (np.expm1(-t) + eu * ev)
    raise ValueError(f"no conditional inversion for {f!r}")


def _invert_conditional(spec: CopulaSpec, u, w, iters: int = 60):
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    with np.errstate(all="ignore"):
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            below = conditional_cdf(spec, u, mid) < w
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def _inside(x):
    return np.clip(x, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


def sample_copula(stream: RngStream, spec: CopulaSpec, n: int) -> PseudoSample:
    if n < 1:
        raise ValueError("n must be positive")
    f, t = spec.family, spec.theta
    if f == "independence" or (f == "gumbel" and t == 1.0):
        uv = stream.uniform((2, n))
        return PseudoSample(_inside(uv[0]), _inside(uv[1]))
    if f in ("gaussian", "student_t"):
        z = sample_mvnormal(stream, n, [[1.0, t], [t, 1.0]])
        if f == "gaussian":
            uv = special.ndtr(z)
        else:
            w = stream.generator.chisquare(spec.nu, n)
            uv = special.stdtr(spec.nu, z / np.sqrt(w / spec.nu)[:, None])
        return PseudoSample(_inside(uv[:, 0]), _inside(uv[:, 1]))
    uw = _inside(stream.uniform((2, n)))
    v = _invert_conditional(spec, uw[0], uw[1])
    return PseudoSample(uw[0], _inside(v))


# ---------------------------------------------------------------- tail dependence

def _analytic_tails(spec: CopulaSpec) -> tuple[float, float]:
    f, t = spec.family, spec.theta
    if f == "student_t":
        lam = 2.0 * kernels.t_cdf(-math.sqrt((spec.nu + 1) * (1 - t) / (1 + t)), spec.nu + 1)
        return lam, lam
    if f == "clayton":
        return 2.0 ** (-1.0 / t), 0.0
    if f == "gumbel":
        return 0.0, 2.0 - 2.0 ** (1.0 / t)
    return 0.0, 0.0


def _richardson(vals: np.ndarray) -> np.ndarray:
    # error assumed linear in q with q shrinking tenfold per step
    return (10.0 * vals[1:] - vals[:-1]) / 9.0


def tail_dependence(spec: CopulaSpec, method: str = "analytic",
                    tol: float = 1e-3) -> TailDependence:
    """Lower and upper tail-dependence coefficients.

    ``method="numeric"`` evaluates C(q, q)/q and (1 - 2q + C(q, q))/(1 - q)
    along q = 10^-2 .. 10^-6 (mirrored for the upper tail), extrapolates,
    and reports ``converged=False`` when the last two extrapolants differ by
    more than ``tol``.
    """
    if method == "analytic":
        lo, up = _analytic_tails(spec)
        return TailDependence(lo, up, "analytic", True)
    if method != "numeric":
        raise ValueError(f"unknown method {method!r}")
    q = 10.0 ** -np.arange(2, 7)
    lower = np.asarray(copula_cdf(spec, q, q)) / q
    s = 1.0 - q
    upper = (2.0 * q - 1.0 + np.asarray(copula_cdf(spec, s, s))) / q
    lo_x, up_x = _richardson(lower), _richardson(upper)
    ok = abs(lo_x[-1] - lo_x[-2]) < tol and abs(up_x[-1] - up_x[-2]) < tol
    clip = lambda x: float(min(1.0, max(0.0, x)))
    return TailDependence(clip(lo_x[-1]), clip(up_x[-1]), "numeric", bool(ok))
