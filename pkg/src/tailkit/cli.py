"""Command-line front end: ``tailkit <subcommand> ...`` prints one JSON document.

Exit status is 0 on success, 1 when a computation fails and 2 for usage or
configuration errors; failures print ``{"error", "code", "step"}``.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import pipeline as pl
from .jsonio import dumps, load_file

ADF_HELP = """\
Only the single-equation ADF regression is automated. A sequential strategy
starts from the trend variant, tests the trend term, then drops to the
constant-only and no-deterministic variants in turn; run the three variants
with --variant ct|c|n and compare their decisions by hand.
"""


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_input(p: argparse.ArgumentParser, convention: str, required: bool = True) -> None:
    g = p.add_argument_group("input")
    g.add_argument("--input", required=required, help="CSV file with a header row")
    g.add_argument("--column", default="value", help="column name or 0-based index")
    g.add_argument("--convention", default=convention,
                   choices=["price", "simple-return", "log-return", "loss"])
    g.add_argument("--time-column", default=None)
    g.add_argument("--sep", default=",")
    g.add_argument("--skip-bad", action="store_true", help="drop rows that do not parse")


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="random seed; falls back to the TAILKIT_SEED environment variable")


def build_parser() -> Parser:
    parser = Parser(prog="tailkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("ingest", help="load one column of a CSV file")
    _add_input(p, "price")
    p.add_argument("--csv-out", default=None)

    p = sub.add_parser("returns", help="prices to simple or log returns")
    _add_input(p, "price")
    p.add_argument("--mode", choices=["log", "simple"], default="log")
    p.add_argument("--csv-out", default=None)

    p = sub.add_parser("test", help="diagnostic and unit-root tests", epilog=ADF_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("name", choices=["ljung-box", "jarque-bera", "arch-lm", "lilliefors",
                                     "durbin-watson", "adf", "engle-granger", "ks"])
    _add_input(p, "log-return", required=False)
    p.add_argument("--garch", default=None, help="fit-garch JSON; with --on innovations")
    p.add_argument("--on", choices=["series", "innovations"], default="series")
    p.add_argument("--transform", choices=["none", "square", "abs"], default="none")
    p.add_argument("--h", type=int, default=10, help="Ljung-Box lags")
    p.add_argument("--model-dof", type=int, default=0)
    p.add_argument("--lags", type=int, default=None)
    p.add_argument("--variant", choices=["n", "c", "ct"], default="c")
    p.add_argument("--max-lag", type=int, default=None)
    p.add_argument("--lag-selection", choices=["aic", "bic", "fixed"], default="bic")
    p.add_argument("--runs", type=int, default=None, help="Monte Carlo replications")
    p.add_argument("--mc-runs", type=int, default=None,
                   help="ADF: simulate critical values instead of the response surface")
    p.add_argument("--column2", default=None, help="second series for ks / engle-granger")
    _add_seed(p)

    p = sub.add_parser("fit-garch", help="AR(1)-GARCH(1,1) maximum likelihood")
    _add_input(p, "log-return")
    p.add_argument("--innovation", choices=["normal", "student"], default="normal")
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--paths-csv", default=None, help="write t,sigma,z")

    p = sub.add_parser("fit-evt", help="GEV, GPD or Hill fit on losses")
    _add_input(p, "loss", required=False)
    p.add_argument("--method", choices=["gev", "gpd", "hill"], required=True)
    p.add_argument("--garch", default=None, help="fit on this model's loss innovations")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--threshold-quantile", type=float, default=None)
    p.add_argument("--block-size", type=int, default=None)
    p.add_argument("--select", action="store_true", help="Hill: pick the threshold by KS")
    p.add_argument("--min-tail", type=int, default=50)
    p.add_argument("--mean-excess-csv", default=None)
    p.add_argument("--mean-excess-points", type=int, default=50)

    for kind in ("var", "es"):
        p = sub.add_parser(kind, help=f"{kind.upper()} in loss units")
        _add_input(p, "loss", required=False)
        methods = ["historical", "gaussian", "student", "gpd", "conditional"] if kind == "var" \
            else ["historical", "gaussian", "gpd"]
        p.add_argument("--method", choices=methods, required=True)
        p.add_argument("--q", type=float, required=True)
        p.add_argument("--mu", type=float, default=None)
        p.add_argument("--sigma", type=float, default=None)
        p.add_argument("--nu", type=float, default=None)
        p.add_argument("--threshold", type=float, default=None)
        p.add_argument("--threshold-quantile", type=float, default=None)
        p.add_argument("--gpd", default=None, help="fit-evt GPD JSON")
        if kind == "var":
            p.add_argument("--garch", default=None, help="fit-garch JSON")
            p.add_argument("--z-method", choices=["gpd", "historical", "gaussian", "student"],
                           default=None)
            p.add_argument("--horizon", type=int, default=1)

    p = sub.add_parser("backtest", help="Kupiec or dynamic-quantile backtest")
    _add_input(p, "loss")
    p.add_argument("--test", choices=["kupiec", "dq"], default="kupiec")
    p.add_argument("--p", type=float, default=0.01, help="violation probability 1 - q")
    p.add_argument("--lags", type=int, default=1)
    p.add_argument("--var-column", default=None, help="ex-ante VaR column in the input file")
    p.add_argument("--method", choices=["historical", "gaussian", "student", "conditional"],
                   default="historical", help="rolling VaR method when no VaR column is given")
    p.add_argument("--window", type=int, default=250)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--garch", default=None)
    p.add_argument("--gpd", default=None)
    p.add_argument("--violations-csv", default=None)

    p = sub.add_parser("copula", help="copula fit, sampling and tail dependence")
    p.add_argument("action", choices=["fit", "sample", "tails"])
    p.add_argument("--family", required=True, choices=list(pl.copula.FAMILIES))
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--input", default=None)
    p.add_argument("--columns", default=None, help="two comma-separated columns")
    p.add_argument("--returns", action="store_true", help="fit on log returns of the columns")
    p.add_argument("--fit-method", choices=["cml", "tau"], default="cml")
    p.add_argument("--tail-method", choices=["analytic", "numeric"], default="analytic")
    p.add_argument("--csv-out", default=None)
    _add_seed(p)

    p = sub.add_parser("mc", help="Monte Carlo estimators")
    p.add_argument("action", choices=["pi", "integrate"])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--expr", default=None, help="integrand in x (or x0, x1, ...)")
    p.add_argument("--domain", action="append", default=None,
                   help="lo,hi per dimension (repeat for more dimensions); default 0,1")
    _add_seed(p)

    p = sub.add_parser("pipeline", help="run a JSON-configured sequence of steps")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return parser


def _seed(args) -> int | None:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("TAILKIT_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError("TAILKIT_SEED must be an integer") from None


def _context(args, with_input: bool = True) -> pl.Context:
    ctx = pl.Context(seed=_seed(args))
    if with_input and getattr(args, "input", None):
        ctx.input = args.input
        for name in ("column", "convention", "sep", "skip_bad", "time_column"):
            if hasattr(args, name):
                setattr(ctx, name, getattr(args, name))
    if getattr(args, "garch", None):
        ctx.garch_fit = pl.garch_from_output(load_file(args.garch))
    if getattr(args, "gpd", None):
        ctx.evt_fit = pl.evt_from_output(load_file(args.gpd))
    return ctx


def _params(args, *names) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def dispatch(args) -> dict:
    cmd = args.command
    if cmd == "pipeline":
        cfg = pl.load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        elif cfg.seed is None:
            cfg.seed = _seed(args)
        return pl.run_pipeline(cfg).to_dict()

    ctx = _context(args)
    if cmd in ("ingest", "returns"):
        out = pl.run_step(ctx, "load", {})
        if cmd == "returns":
            out = pl.run_step(ctx, "to_returns", {"mode": args.mode})
        if args.csv_out:
            ctx.series.to_csv(args.csv_out)
        return out
    if cmd == "test":
        if args.on == "series" and not args.input:
            raise UsageError("--input is required unless testing GARCH innovations")
        p = _params(args, "h", "model_dof", "lags", "variant", "max_lag", "lag_selection",
                    "runs", "mc_runs", "column2", "on", "transform")
        p["name"] = args.name
        return pl.run_step(ctx, "test", p)
    if cmd == "fit-garch":
        out = pl.run_step(ctx, "fit_garch", _params(args, "innovation", "restarts"))
        if args.paths_csv:
            sig, z = ctx.artifacts["sigma_z"]
            _write_rows(args.paths_csv, ["t", "sigma", "z"],
                        ([t, repr(float(s)), repr(float(e))] for t, (s, e) in enumerate(zip(sig, z))))
        return out
    if cmd == "fit-evt":
        p = _params(args, "method", "threshold", "threshold_quantile", "block_size", "min_tail")
        p["on"] = "innovations" if args.garch else "series"
        p["select"] = args.select
        if not args.garch and not args.input:
            raise UsageError("fit-evt needs --input or --garch")
        if args.mean_excess_csv:
            p["mean_excess_points"] = args.mean_excess_points
        out = pl.run_step(ctx, "fit_evt", p)
        if args.mean_excess_csv:
            pts = ctx.artifacts["mean_excess"]
            pl.evt.write_mean_excess_csv(pts, args.mean_excess_csv)
        return out
    if cmd in ("var", "es"):
        p = _params(args, "method", "q", "mu", "sigma", "nu", "threshold", "threshold_quantile",
                    "z_method", "horizon")
        if args.method == "conditional" and not args.garch:
            raise UsageError("conditional VaR needs --garch")
        if args.method in ("historical", "student") and not args.input and args.sigma is None:
            raise UsageError(f"--method {args.method} needs --input")
        if args.method == "gpd" and not args.gpd and not args.input:
            raise UsageError("--method gpd needs --gpd or --input")
        return pl.run_step(ctx, "var" if cmd == "var" else "es", p)
    if cmd == "backtest":
        p = _params(args, "test", "p", "lags", "var_column", "method", "window", "nu")
        out = pl.run_step(ctx, "backtest", p)
        if args.violations_csv:
            ctx.artifacts["violations"].to_csv(args.violations_csv)
        return out
    if cmd == "copula":
        p = _params(args, "family", "theta", "rho", "nu", "n")
        if args.action == "fit":
            if not args.input or not args.columns:
                raise UsageError("copula fit needs --input and --columns a,b")
            ctx.input = args.input
            ctx.convention = "price"
            p.update(columns=args.columns.split(","), method=args.fit_method,
                     returns=args.returns)
            return pl.run_step(ctx, "copula_fit", p)
        if args.action == "sample":
            out = pl.run_step(ctx, "copula_sample", p)
            if args.csv_out:
                ctx.artifacts["copula_sample"].to_csv(args.csv_out)
                out = {"spec": out["spec"], "n": out["n"], "csv": args.csv_out}
            return out
        p["method"] = args.tail_method
        return pl.run_step(ctx, "copula_tails", p)
    if cmd == "mc":
        if args.action == "pi":
            return pl.run_step(ctx, "mc_pi", _params(args, "n"))
        if not args.expr:
            raise UsageError("mc integrate needs --expr")
        p = {"expr": args.expr}
        if args.n is not None:
            p["n"] = args.n
        if args.domain:
            p["domain"] = [[float(v) for v in d.split(",")] for d in args.domain]
        return pl.run_step(ctx, "mc_integrate", p)
    raise UsageError(f"unknown command {cmd!r}")


def _fail(message: str, code: int, step) -> int:
    print(dumps({"error": message, "code": code, "step": step}))
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        result = dispatch(args)
    except UsageError as exc:
        return _fail(str(exc), 2, None)
    except pl.StepError as exc:
        return _fail(str(exc), exc.code, exc.step if args.command == "pipeline" else args.command)
    except (ValueError, RuntimeError, KeyError, FileNotFoundError, OSError) as exc:
        return _fail(str(exc), 1, None)
    print(dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
