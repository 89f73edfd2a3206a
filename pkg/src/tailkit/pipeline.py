"""Named operations shared by the CLI subcommands and JSON-configured pipelines.

Each operation takes a :class:`Context` (the data and fitted objects produced
so far) and a parameter dict, updates the context and returns a JSON-ready
dict. Running a pipeline step and the matching subcommand therefore executes
the same code.
"""

from __future__ import annotations

import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__, backtest, copula, evt, garch, mc, risk, stattests
from .jsonio import dumps, load_file
from .series import (Convention, ReturnSeries, digest, empirical_quantile, load_csv,
                     summary_stats, to_returns)


class StepError(Exception):
    """A failing step; ``code`` is the process exit status to use."""

    def __init__(self, message: str, code: int = 1, step=None):
        super().__init__(message)
        self.code = code
        self.step = step


@dataclass
class Context:
    input: str | None = None
    column: str | int = "value"
    convention: str = "price"
    sep: str = ","
    skip_bad: bool = False
    time_column: str | int | None = None
    seed: int | None = None
    series: ReturnSeries | None = None
    garch_fit: garch.GarchFit | None = None
    evt_fit: object | None = None
    last_risk: risk.RiskEstimate | None = None
    step_index: int = 0
    artifacts: dict = field(default_factory=dict)

    def load_column(self, column, convention=None) -> ReturnSeries:
        if self.input is None:
            raise ValueError("no input file configured")
        return load_csv(self.input, column, sep=self.sep, skip_bad=self.skip_bad,
                        time_column=self.time_column,
                        convention=convention or self.convention)

    def stream(self) -> mc.RngStream:
        if self.seed is None:
            raise StepError("this step is stochastic and needs a seed (--seed or TAILKIT_SEED)", 2)
        return mc.RngStream(self.seed, self.step_index)

    def require_series(self) -> ReturnSeries:
        if self.series is None:
            self.series = self.load_column(self.column)
        return self.series

    def losses(self) -> np.ndarray:
        s = self.require_series()
        if s.convention is Convention.PRICE:
            raise ValueError("price series must be converted to returns first")
        return s.as_losses().values

    def require_garch(self) -> garch.GarchFit:
        if self.garch_fit is None:
            raise ValueError("no fitted GARCH model available")
        return self.garch_fit

    def data(self, on: str) -> np.ndarray:
        """Loss-oriented data: the series itself or the GARCH loss innovations."""
        if on == "series":
            return self.losses()
        if on == "innovations":
            fit = self.require_garch()
            if fit.z.size == 0:
                raise ValueError("GARCH fit carries no innovations")
            return fit.loss_innovations()
        raise ValueError(f"unknown data source {on!r}")


def _get(params: dict, key: str, default=None, cast=None):
    v = params.get(key, default)
    if v is None:
        return None
    return cast(v) if cast else v


def _need(params: dict, key: str, cast=None):
    if params.get(key) is None:
        raise StepError(f"missing parameter {key!r}", 2)
    return cast(params[key]) if cast else params[key]


# ---------------------------------------------------------------- series operations

def op_load(ctx: Context, p: dict) -> dict:
    for k in ("input", "column", "convention", "sep", "time_column"):
        if p.get(k) is not None:
            setattr(ctx, k, p[k])
    if "skip_bad" in p:
        ctx.skip_bad = bool(p["skip_bad"])
    ctx.series = ctx.load_column(ctx.column)
    return _series_out(ctx.series)


def _series_out(s: ReturnSeries) -> dict:
    return {"convention": s.convention.value, "n": len(s), "digest": digest(s.values),
            "records": s.to_records()}


def op_to_returns(ctx: Context, p: dict) -> dict:
    ctx.series = to_returns(ctx.require_series(), p.get("mode", "log"))
    return _series_out(ctx.series)


def op_as_losses(ctx: Context, p: dict) -> dict:
    ctx.series = ctx.require_series().as_losses()
    return _series_out(ctx.series)


def op_summary_stats(ctx: Context, p: dict) -> dict:
    return summary_stats(ctx.require_series(), bool(p.get("higher", True))).to_dict()


# ---------------------------------------------------------------- tests

def _test_data(ctx: Context, p: dict) -> np.ndarray:
    on = p.get("on", "series")
    if on == "series":
        x = ctx.require_series().values
    elif on == "innovations":
        x = ctx.require_garch().z
    else:
        raise ValueError(f"unknown data source {on!r}")
    tr = p.get("transform", "none")
    if tr == "square":
        return x * x
    if tr == "abs":
        return np.abs(x)
    if tr != "none":
        raise ValueError(f"unknown transform {tr!r}")
    return x


def op_test(ctx: Context, p: dict) -> dict:
    name = _need(p, "name").replace("-", "_")
    x = _test_data(ctx, p)
    if name == "ljung_box":
        res = stattests.ljung_box(x, int(p.get("h", 10)), int(p.get("model_dof", 0)))
    elif name == "jarque_bera":
        res = stattests.jarque_bera(x)
    elif name == "arch_lm":
        res = stattests.arch_lm(x, int(p.get("lags", 1)))
    elif name == "lilliefors":
        res = stattests.lilliefors(x, int(p.get("runs", 1000)), ctx.stream())
    elif name == "durbin_watson":
        return {"stat": stattests.durbin_watson(x), "dist": "durbin_watson"}
    elif name == "adf":
        table = None
        variant = p.get("variant", "c")
        if p.get("mc_runs"):
            max_lag = _get(p, "max_lag", None, int)
            table_T = x.size - 1 - (max_lag if max_lag is not None
                                    else stattests.default_max_lag(x.size))
            table = stattests.df_mc_critical_values(variant, max(table_T, 25),
                                                    int(p["mc_runs"]), ctx.stream())
        res = stattests.adf_test(x, variant, _get(p, "max_lag", None, int),
                                 p.get("lag_selection", "bic"), table)
    elif name in ("engle_granger", "ks"):
        other = ctx.load_column(_need(p, "column2"), ctx.convention).values
        if name == "ks":
            res = stattests.ks_two_sample(x, other)
        else:
            res = stattests.engle_granger_coint(x, other, int(p.get("lags", 0)),
                                                int(p.get("runs", 2000)), ctx.stream())
    else:
        raise StepError(f"unknown test {name!r}", 2)
    return res.to_dict()


# ---------------------------------------------------------------- GARCH

def garch_output(fit: garch.GarchFit) -> dict:
    d = fit.to_dict()
    d["z"] = fit.z
    return d


def garch_from_output(d: dict) -> garch.GarchFit:
    return garch.GarchFit.from_dict(d, z=d.get("z"))


def op_fit_garch(ctx: Context, p: dict) -> dict:
    s = ctx.require_series()
    if s.convention is Convention.PRICE:
        raise ValueError("price series must be converted to returns first")
    fit = garch.fit_ar_garch(s, p.get("innovation", "normal"), int(p.get("restarts", 5)))
    ctx.garch_fit = fit
    ctx.artifacts["sigma_z"] = (fit.sigma_path, fit.z)
    return garch_output(fit)


# ---------------------------------------------------------------- EVT

def _threshold(x: np.ndarray, p: dict) -> float:
    if p.get("threshold") is not None:
        return float(p["threshold"])
    if p.get("threshold_quantile") is not None:
        return empirical_quantile(x, float(p["threshold_quantile"]))
    raise StepError("need threshold or threshold_quantile", 2)


def op_fit_evt(ctx: Context, p: dict) -> dict:
    method = _need(p, "method")
    x = ctx.data(p.get("on", "series"))
    if method == "gev":
        fit = evt.fit_gev(evt.block_maxima(x, _need(p, "block_size", int)), int(p["block_size"]))
    elif method == "gpd":
        fit = evt.fit_gpd(x, _threshold(x, p))
    elif method == "hill":
        if p.get("select"):
            choice = evt.select_threshold_ks(x, int(p.get("min_tail", 50)))
            fit = evt.hill_estimator(x, choice.u, select=True)
        else:
            fit = evt.hill_estimator(x, _threshold(x, p), select=True)
    else:
        raise StepError(f"unknown EVT method {method!r}", 2)
    if p.get("mean_excess_points"):
        k = int(p["mean_excess_points"])
        grid = np.quantile(x, np.linspace(0.5, 0.995, k))
        ctx.artifacts["mean_excess"] = evt.mean_excess_curve(x, grid)
    ctx.evt_fit = fit
    return fit.to_dict()


def evt_from_output(d: dict):
    if d.get("method") != "gpd":
        raise ValueError("expected a GPD fit")
    return evt.GpdFit.from_dict(d)


# ---------------------------------------------------------------- risk

def _z_var(ctx: Context, p: dict, q: float) -> risk.RiskEstimate:
    fit = ctx.require_garch()
    zm = p.get("z_method", "gpd" if isinstance(ctx.evt_fit, evt.GpdFit) else "historical")
    if zm == "gpd":
        if not isinstance(ctx.evt_fit, evt.GpdFit):
            raise ValueError("no GPD fit on the innovations available")
        return risk.var_gpd(ctx.evt_fit, q)
    z = ctx.data("innovations")
    if zm == "historical":
        return risk.var_historical(z, q)
    if zm == "gaussian":
        return risk.var_gaussian_sample(z, q)
    if zm == "student":
        return risk.var_student_sample(z, _need(p, "nu", float), q)
    raise StepError(f"unknown innovation VaR method {zm!r}", 2)


def op_var(ctx: Context, p: dict) -> dict:
    q = _need(p, "q", float)
    method = _need(p, "method")
    if method == "gaussian" and p.get("sigma") is not None:
        est = risk.var_gaussian(float(p.get("mu", 0.0)), float(p["sigma"]), q)
    elif method == "student" and p.get("sigma") is not None:
        est = risk.var_student(float(p.get("mu", 0.0)), float(p["sigma"]), _need(p, "nu", float), q)
    elif method == "gaussian":
        est = risk.var_gaussian_sample(ctx.data(p.get("on", "series")), q)
    elif method == "student":
        est = risk.var_student_sample(ctx.data(p.get("on", "series")), _need(p, "nu", float), q)
    elif method == "historical":
        est = risk.var_historical(ctx.data(p.get("on", "series")), q)
    elif method == "gpd":
        if not isinstance(ctx.evt_fit, evt.GpdFit):
            x = ctx.data(p.get("on", "series"))
            ctx.evt_fit = evt.fit_gpd(x, _threshold(x, p))
        est = risk.var_gpd(ctx.evt_fit, q)
    elif method == "conditional":
        est = risk.conditional_var(ctx.require_garch(), _z_var(ctx, p, q), int(p.get("horizon", 1)))
    else:
        raise StepError(f"unknown VaR method {method!r}", 2)
    ctx.last_risk = est
    return est.to_dict()


def op_es(ctx: Context, p: dict) -> dict:
    q = _need(p, "q", float)
    method = _need(p, "method")
    if method == "gaussian" and p.get("sigma") is not None:
        est = risk.es_gaussian(float(p.get("mu", 0.0)), float(p["sigma"]), q)
    elif method == "gaussian":
        x = ctx.data(p.get("on", "series"))
        est = risk.es_gaussian(float(np.mean(x)), float(np.std(x, ddof=1)), q)
        est.inputs["data_digest"] = digest(x)
    elif method == "historical":
        est = risk.es_historical(ctx.data(p.get("on", "series")), q)
    elif method == "gpd":
        if not isinstance(ctx.evt_fit, evt.GpdFit):
            x = ctx.data(p.get("on", "series"))
            ctx.evt_fit = evt.fit_gpd(x, _threshold(x, p))
        est = risk.es_gpd(ctx.evt_fit, q)
    else:
        raise StepError(f"unknown ES method {method!r}", 2)
    ctx.last_risk = est
    return est.to_dict()


# ---------------------------------------------------------------- backtest

def op_backtest(ctx: Context, p: dict) -> dict:
    cov = float(p.get("p", 0.01))
    test = p.get("test", "kupiec")
    method = p.get("method", "historical")
    if method == "conditional":
        fit = ctx.require_garch()
        z_var = _z_var(ctx, p, 1.0 - cov)
        path = risk.conditional_var_path(fit, ctx.require_series(), z_var)
        losses = ctx.losses()[1:]
    elif p.get("var_column") is not None:
        losses = ctx.losses()
        path = ctx.load_column(p["var_column"], "loss").values
    else:
        losses, path = backtest.rolling_var(ctx.losses(), 1.0 - cov, method,
                                            int(p.get("window", 250)), _get(p, "nu", None, float))
    v = backtest.violation_series(losses, path, cov)
    ctx.artifacts["violations"] = v
    if test == "kupiec":
        res = backtest.kupiec_uc(v)
    elif test == "dq":
        res = backtest.em_dq(v, int(p.get("lags", 1)))
    else:
        raise StepError(f"unknown backtest {test!r}", 2)
    return res.to_dict()


# ---------------------------------------------------------------- copulas

def _copula_spec(p: dict) -> copula.CopulaSpec:
    fam = _need(p, "family")
    par = p.get("theta", p.get("rho"))
    return copula.CopulaSpec(fam, None if par is None else float(par), _get(p, "nu", None, float))


def op_copula_fit(ctx: Context, p: dict) -> dict:
    cols = _need(p, "columns")
    x = ctx.load_column(cols[0]).values
    y = ctx.load_column(cols[1]).values
    if p.get("returns"):
        x, y = np.diff(np.log(x)), np.diff(np.log(y))
    sample = copula.pseudo_observations(x, y)
    fam = _need(p, "family")
    if p.get("method", "cml") == "tau":
        from .series import kendall_tau
        spec = copula.fit_tau_inversion(kendall_tau(x, y), fam, _get(p, "nu", None, float))
    else:
        spec = copula.fit_cml(sample, fam)
    return spec.to_dict()


def op_copula_sample(ctx: Context, p: dict) -> dict:
    spec = _copula_spec(p)
    s = copula.sample_copula(ctx.stream(), spec, int(p.get("n", 1000)))
    ctx.artifacts["copula_sample"] = s
    return {"spec": spec.to_dict(), "n": len(s), "u": s.u, "v": s.v}


def op_copula_tails(ctx: Context, p: dict) -> dict:
    return copula.tail_dependence(_copula_spec(p), p.get("method", "analytic")).to_dict()


# ---------------------------------------------------------------- Monte Carlo

_EXPR_NAMES = {name: getattr(np, name) for name in
               ("exp", "log", "log1p", "expm1", "sqrt", "sin", "cos", "tan", "arctan", "abs",
                "sinh", "cosh", "tanh", "power", "where", "maximum", "minimum")}
_EXPR_NAMES.update(pi=math.pi, e=math.e)


def compile_expression(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised integrand from an expression in ``x`` (or ``x0, x1, ...``)."""
    code = compile(expr, "<expr>", "eval")
    for name in code.co_names:
        if name not in _EXPR_NAMES and name != "x" and not (name[0] == "x" and name[1:].isdigit()):
            raise ValueError(f"name {name!r} not allowed in an integrand")

    def f(pts):
        ns = dict(_EXPR_NAMES)
        ns["x"] = pts
        if pts.ndim == 2:
            ns.update({f"x{i}": pts[:, i] for i in range(pts.shape[1])})
        else:
            ns["x0"] = pts
        return eval(code, {"__builtins__": {}}, ns)  # names checked above

    return f


def op_mc_pi(ctx: Context, p: dict) -> dict:
    return mc.estimate_pi(ctx.stream(), int(p.get("n", 1_000_000))).to_dict()


def op_mc_integrate(ctx: Context, p: dict) -> dict:
    dom = p.get("domain", [[0.0, 1.0]])
    f = compile_expression(_need(p, "expr"))
    return mc.mc_integrate(ctx.stream(), f, [tuple(map(float, d)) for d in dom],
                           int(p.get("n", 100_000))).to_dict()


OPERATIONS: dict[str, Callable[[Context, dict], dict]] = {
    "load": op_load,
    "to_returns": op_to_returns,
    "as_losses": op_as_losses,
    "summary_stats": op_summary_stats,
    "test": op_test,
    "fit_garch": op_fit_garch,
    "fit_evt": op_fit_evt,
    "var": op_var,
    "es": op_es,
    "backtest": op_backtest,
    "copula_fit": op_copula_fit,
    "copula_sample": op_copula_sample,
    "copula_tails": op_copula_tails,
    "mc_pi": op_mc_pi,
    "mc_integrate": op_mc_integrate,
}


# ---------------------------------------------------------------- pipeline runner

@dataclass
class PipelineConfig:
    input: str | None
    steps: list[dict]
    column: str | int = "value"
    convention: str = "price"
    seed: int | None = None
    output_dir: str | None = None
    sep: str = ","
    skip_bad: bool = False
    time_column: str | int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {"input", "steps", "column", "convention", "seed", "output_dir", "sep",
                 "skip_bad", "time_column"}
        extra = set(d) - known
        if extra:
            raise StepError(f"unknown config keys: {sorted(extra)}", 2)
        if "steps" not in d or not isinstance(d["steps"], list):
            raise StepError("config needs a list of steps", 2)
        return cls(**d)

    def validate(self) -> None:
        for i, step in enumerate(self.steps):
            op = step.get("op") if isinstance(step, dict) else None
            if op not in OPERATIONS:
                raise StepError(f"unknown operation {op!r}", 2, i)
            if not isinstance(step.get("params", {}), dict):
                raise StepError("step params must be an object", 2, i)


@dataclass
class RunReport:
    steps: list[dict]
    seed: int | None
    versions: dict
    wall_time: float

    def to_dict(self) -> dict:
        return {"steps": self.steps, "seed": self.seed, "versions": self.versions,
                "wall_time": self.wall_time}


def versions() -> dict:
    return {"tailkit": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_step(ctx: Context, op: str, params: dict, index: int = 0) -> dict:
    ctx.step_index = index
    try:
        return OPERATIONS[op](ctx, params)
    except StepError as exc:
        exc.step = index if exc.step is None else exc.step
        raise
    except (ValueError, RuntimeError, KeyError, FileNotFoundError, ArithmeticError) as exc:
        raise StepError(str(exc), 1, index) from exc


def run_pipeline(config: PipelineConfig | dict) -> RunReport:
    """Validate every step, then execute them in order.

    ``wall_time`` is the only field that differs between identical runs.
    """
    if isinstance(config, dict):
        config = PipelineConfig.from_dict(config)
    config.validate()
    ctx = Context(config.input, config.column, config.convention, config.sep, config.skip_bad,
                  config.time_column, config.seed)
    t0 = time.perf_counter()
    out = []
    for i, step in enumerate(config.steps):
        result = run_step(ctx, step["op"], dict(step.get("params", {})), i)
        out.append({"op": step["op"], "output": result})
    report = RunReport(out, config.seed, versions(), time.perf_counter() - t0)
    if config.output_dir:
        d = Path(config.output_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_text(dumps(report) + "\n", encoding="utf-8")
    return report


def load_config(path) -> PipelineConfig:
    return PipelineConfig.from_dict(load_file(path))
