"""Value-at-Risk and Expected Shortfall in loss units (positive = loss)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .evt import XI_ZERO, GpdFit
from .garch import GarchFit, forecast_sigma
from .series import digest

KINDS = ("var", "es")
METHODS = ("historical", "gaussian", "student", "gpd", "mc")


@dataclass
class RiskEstimate:
    kind: str
    method: str
    q: float
    value: float
    inputs: dict = field(default_factory=dict)
    path: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        _check_q(self.q)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "method": self.method, "q": self.q, "value": self.value,
             "inputs": self.inputs}
        if self.path is not None:
            d["path"] = [float(v) for v in self.path]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RiskEstimate":
        path = d.get("path")
        return cls(d["kind"], d["method"], d["q"], d["value"], dict(d.get("inputs", {})),
                   None if path is None else np.asarray(path, dtype=float))


def _check_q(q: float) -> None:
    # the median itself is allowed so that location-only checks are possible
    if not 0.5 <= q < 1.0:
        raise ValueError("q must lie in [0.5, 1)")


def _check_sigma(sigma: float) -> None:
    if sigma < 0 or not math.isfinite(sigma):
        raise ValueError("sigma must be finite and nonnegative")


def _losses(losses) -> np.ndarray:
    x = np.asarray(getattr(losses, "values", losses), dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("empty loss series")
    if not np.all(np.isfinite(x)):
        raise ValueError("losses must be finite")
    return x


def _historical_index(n: int, q: float) -> int:
    """1-based order statistic m = nq when integral, floor(nq) + 1 otherwise."""
    nq = n * q
    m = int(round(nq)) if abs(nq - round(nq)) < 1e-9 else math.floor(nq) + 1
    return min(max(m, 1), n)


def var_historical(losses, q: float) -> RiskEstimate:
    _check_q(q)
    x = np.sort(_losses(losses))
    m = _historical_index(x.size, q)
    return RiskEstimate("var", "historical", q, float(x[m - 1]),
                        {"n": int(x.size), "m": m, "data_digest": digest(_losses(losses))})


def es_historical(losses, q: float) -> RiskEstimate:
    """Mean of losses strictly above the historical VaR."""
    x = _losses(losses)
    var = var_historical(x, q)
    tail = x[x > var.value]
    if tail.size == 0:
        raise ValueError("no loss strictly exceeds the historical VaR")
    return RiskEstimate("es", "historical", q, float(np.mean(tail)),
                        {"n": int(x.size), "n_tail": int(tail.size), "var": var.value,
                         "data_digest": digest(x)})


def var_gaussian(mu: float, sigma: float, q: float) -> RiskEstimate:
    _check_q(q)
    _check_sigma(sigma)
    z = 0.0 if q == 0.5 else kernels.norm_ppf(q)
    return RiskEstimate("var", "gaussian", q, mu + sigma * z, {"mu": mu, "sigma": sigma})


def es_gaussian(mu: float, sigma: float, q: float) -> RiskEstimate:
    _check_q(q)
    _check_sigma(sigma)
    z = 0.0 if q == 0.5 else kernels.norm_ppf(q)
    return RiskEstimate("es", "gaussian", q, mu + sigma * kernels.norm_pdf(z) / (1.0 - q),
                        {"mu": mu, "sigma": sigma})


def var_student(mu: float, sigma: float, nu: float, q: float) -> RiskEstimate:
    """mu + t_nu(q) sigma sqrt((nu - 2)/nu), with sigma the standard deviation."""
    _check_q(q)
    _check_sigma(sigma)
    if not nu > 2:
        raise ValueError("nu must exceed 2")
    t = 0.0 if q == 0.5 else kernels.t_ppf(q, nu)
    return RiskEstimate("var", "student", q, mu + t * sigma * math.sqrt((nu - 2.0) / nu),
                        {"mu": mu, "sigma": sigma, "nu": nu})


def var_gaussian_sample(losses, q: float) -> RiskEstimate:
    x = _losses(losses)
    est = var_gaussian(float(np.mean(x)), float(np.std(x, ddof=1)) if x.size > 1 else 0.0, q)
    est.inputs["data_digest"] = digest(x)
    return est


def var_student_sample(losses, nu: float, q: float) -> RiskEstimate:
    x = _losses(losses)
    est = var_student(float(np.mean(x)), float(np.std(x, ddof=1)) if x.size > 1 else 0.0, nu, q)
    est.inputs["data_digest"] = digest(x)
    return est


def _gpd_ratio(fit: GpdFit, q: float) -> float:
    ratio = fit.n_total * (1.0 - q) / fit.n_exceed
    if ratio > 1.0 + 1e-12:
        raise ValueError(f"q={q} lies below the threshold coverage 1 - N_u/n = "
                         f"{1 - fit.n_exceed / fit.n_total:.6g}")
    return min(ratio, 1.0)


def var_gpd(fit: GpdFit, q: float) -> RiskEstimate:
    """u + (beta/xi) ((n (1-q)/N_u)^(-xi) - 1), with the log limit for xi near 0."""
    _check_q(q)
    ratio = _gpd_ratio(fit, q)
    if abs(fit.xi) < XI_ZERO:
        value = fit.threshold - fit.beta * math.log(ratio)
    else:
        value = fit.threshold + fit.beta / fit.xi * (ratio ** (-fit.xi) - 1.0)
    return RiskEstimate("var", "gpd", q, value, _gpd_inputs(fit))


def es_gpd(fit: GpdFit, q: float) -> RiskEstimate:
    """Tail mean beyond the GPD VaR; finite only for xi < 1."""
    if fit.xi >= 1:
        raise ValueError("expected shortfall is infinite for xi >= 1")
    var = var_gpd(fit, q).value
    value = (var + fit.beta - fit.xi * fit.threshold) / (1.0 - fit.xi)
    return RiskEstimate("es", "gpd", q, value, _gpd_inputs(fit))


def _gpd_inputs(fit: GpdFit) -> dict:
    return {"xi": fit.xi, "beta": fit.beta, "threshold": fit.threshold,
            "n_exceed": fit.n_exceed, "n_total": fit.n_total, "data_digest": fit.data_digest}


def var_es_mc(samples, q: float) -> tuple[RiskEstimate, RiskEstimate]:
    """Historical estimators applied to simulated losses."""
    v = var_historical(samples, q)
    e = es_historical(samples, q)
    return (RiskEstimate("var", "mc", q, v.value, v.inputs),
            RiskEstimate("es", "mc", q, e.value, e.inputs))


def _check_provenance(fit: GarchFit, z_var: RiskEstimate) -> None:
    src = z_var.inputs.get("data_digest")
    if src != fit.loss_z_digest:
        raise ValueError("innovation estimate was not computed on this fit's loss innovations")


def conditional_var(fit: GarchFit, z_var: RiskEstimate, horizon: int = 1) -> RiskEstimate:
    """mu_{t+k} + sigma_{t+k} VaR_q(Z) in loss units for k = 1..horizon.

    ``z_var`` must be estimated on ``fit.loss_innovations()``. The returned
    value is the step-``horizon`` figure; ``path`` holds every step.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    _check_provenance(fit, z_var)
    sig = forecast_sigma(fit, horizon)
    sign = 1.0 if fit.loss_oriented else -1.0
    s = fit.spec
    means = np.empty(horizon)
    m = s.mu + s.theta * fit.r_last
    for k in range(horizon):
        means[k] = m
        m = s.mu + s.theta * m
    path = sign * means + sig * z_var.value
    inputs = {"z_var": z_var.value, "z_method": z_var.method, "horizon": horizon,
              "sigma_next": float(sig[0]), "mean_next": float(sign * means[0]),
              "data_digest": z_var.inputs.get("data_digest")}
    return RiskEstimate("var", z_var.method, z_var.q, float(path[-1]), inputs, path)


def conditional_var_path(fit: GarchFit, series, z_var: RiskEstimate) -> np.ndarray:
    """In-sample one-step VaR for t = 1..T-1 from the filtered sigma path."""
    _check_provenance(fit, z_var)
    r = np.asarray(getattr(series, "values", series), dtype=float).reshape(-1)
    if r.size != fit.sigma_path.size + 1:
        raise ValueError("series length does not match the fitted sigma path")
    mean = fit.spec.mu + fit.spec.theta * r[:-1]
    sign = 1.0 if fit.loss_oriented else -1.0
    return sign * mean + fit.sigma_path * z_var.value
