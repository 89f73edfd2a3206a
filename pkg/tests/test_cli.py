import json
import math
import subprocess
import sys

import numpy as np
import pytest

from tailkit import cli, pipeline as pl
from tailkit.garch import GarchSpec, simulate_garch
from tailkit.jsonio import dumps
from tailkit.mc import RngStream

from conftest import write_csv


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out.strip()
    return code, out


@pytest.fixture
def prices(tmp_path):
    return write_csv(tmp_path / "p.csv", ["date", "value"],
                     [("d1", 100.0), ("d2", 110.0), ("d3", 99.0)])


@pytest.fixture
def returns_file(tmp_path):
    r = simulate_garch(RngStream(42), GarchSpec(0.0, 0.0, 0.1, 0.1, 0.8), 1500).values
    return write_csv(tmp_path / "r.csv", ["value"], [(repr(float(v)),) for v in r])


def test_var_gaussian(capsys):
    code, out = run(capsys, "var", "--method", "gaussian", "--mu", "0", "--sigma", "1", "--q", "0.99")
    assert code == 0
    assert json.loads(out)["value"] == pytest.approx(2.33, abs=0.005)


def test_unknown_flag_exit_2(capsys):
    code, out = run(capsys, "var", "--bogus")
    assert code == 2 and json.loads(out)["code"] == 2


def test_subprocess_exit_codes(tmp_path):
    ok = subprocess.run([sys.executable, "-m", "tailkit.cli", "mc", "pi", "--n", "1000000",
                         "--seed", "7"], capture_output=True, text=True)
    assert ok.returncode == 0
    d = json.loads(ok.stdout)
    assert abs(d["value"] - math.pi) < 0.005 and d["se"] > 0
    bad = subprocess.run([sys.executable, "-m", "tailkit.cli", "frobnicate"],
                         capture_output=True, text=True)
    assert bad.returncode == 2


def test_missing_seed_is_usage_error(capsys, monkeypatch):
    monkeypatch.delenv("TAILKIT_SEED", raising=False)
    code, out = run(capsys, "mc", "pi", "--n", "100")
    assert code == 2
    monkeypatch.setenv("TAILKIT_SEED", "3")
    code, out = run(capsys, "mc", "pi", "--n", "100")
    assert code == 0


def test_domain_error_exit_1(capsys, tmp_path):
    bad = write_csv(tmp_path / "bad.csv", ["value"], [(100.0,), (-5.0,)])
    code, out = run(capsys, "returns", "--input", str(bad))
    d = json.loads(out)
    assert code == 1 and d["step"] == "returns"


def test_ingest_and_returns(capsys, prices):
    code, out = run(capsys, "returns", "--input", str(prices), "--mode", "simple")
    assert code == 0
    d = json.loads(out)
    assert d["n"] == 2 and d["convention"] == "simple-return"
    assert d["records"][0]["v"] == pytest.approx(0.1)


def test_mc_integrate(capsys):
    code, out = run(capsys, "mc", "integrate", "--expr", "exp(x)", "--domain", "0,1",
                    "--n", "100000", "--seed", "1")
    d = json.loads(out)
    assert code == 0 and abs(d["value"] - (math.e - 1)) < 4 * math.sqrt(0.2420356 / 1e5)
    code, out = run(capsys, "mc", "integrate", "--expr", "__import__('os')", "--seed", "1")
    assert code != 0


def test_expression_whitelist():
    f = pl.compile_expression("sin(x0) * x1 + 2")
    assert f(np.array([[0.0, 3.0]])).tolist() == [2.0]
    with pytest.raises(Exception):
        pl.compile_expression("open('x')")


def test_stat_test_command(capsys, returns_file):
    code, out = run(capsys, "test", "ljung-box", "--input", str(returns_file),
                    "--convention", "log-return", "--h", "10")
    d = json.loads(out)
    assert code == 0 and d["dof"] == 10 and 0 <= d["p"] <= 1


def test_copula_commands(capsys):
    code, out = run(capsys, "copula", "tails", "--family", "gumbel", "--theta", "2")
    assert code == 0 and json.loads(out)["lambda_upper"] == pytest.approx(2 - math.sqrt(2))
    code, out = run(capsys, "copula", "sample", "--family", "clayton", "--theta", "2",
                    "--n", "50", "--seed", "3")
    assert code == 0


def test_pipeline_summary_stats(tmp_path, prices):
    rep = pl.run_pipeline({"input": str(prices), "steps": [
        {"op": "load"}, {"op": "to_returns", "params": {"mode": "log"}}, {"op": "summary_stats"}]})
    assert len(rep.steps) == 3
    stats = rep.steps[-1]["output"]
    r = np.log([110 / 100, 99 / 110])
    assert stats["mean"] == pytest.approx(r.mean(), abs=1e-15)


def test_pipeline_unknown_step_validates_first(tmp_path, prices):
    out = tmp_path / "out"
    cfg = {"input": str(prices), "output_dir": str(out),
           "steps": [{"op": "load"}, {"op": "no_such_op"}]}
    with pytest.raises(pl.StepError) as exc:
        pl.run_pipeline(cfg)
    assert exc.value.code == 2 and exc.value.step == 1
    assert not out.exists()
    with pytest.raises(pl.StepError):
        pl.run_pipeline({"steps": [], "colour": "blue"})


def _chain_config(path, out_dir=None):
    return {"input": str(path), "convention": "log-return", "seed": 11,
            "output_dir": out_dir,
            "steps": [{"op": "load"},
                      {"op": "fit_garch"},
                      {"op": "fit_evt", "params": {"method": "gpd", "on": "innovations",
                                                   "threshold_quantile": 0.9}},
                      {"op": "var", "params": {"method": "conditional", "q": 0.99}}]}


def test_pipeline_reproducible(tmp_path, returns_file):
    a = pl.run_pipeline(_chain_config(returns_file, str(tmp_path / "a")))
    b = pl.run_pipeline(_chain_config(returns_file, str(tmp_path / "b")))
    assert dumps(a.steps) == dumps(b.steps)
    ja = json.loads((tmp_path / "a" / "report.json").read_text())
    jb = json.loads((tmp_path / "b" / "report.json").read_text())
    ja.pop("wall_time"), jb.pop("wall_time")
    assert ja == jb


def test_pipeline_matches_piped_commands(capsys, tmp_path, returns_file):
    rep = pl.run_pipeline(_chain_config(returns_file))
    base = ["--input", str(returns_file), "--convention", "log-return"]
    code, g = run(capsys, "fit-garch", *base)
    assert code == 0
    (tmp_path / "g.json").write_text(g)
    code, e = run(capsys, "fit-evt", "--method", "gpd", "--garch", str(tmp_path / "g.json"),
                  "--threshold-quantile", "0.9")
    assert code == 0
    (tmp_path / "e.json").write_text(e)
    code, v = run(capsys, "var", "--method", "conditional", "--q", "0.99",
                  "--garch", str(tmp_path / "g.json"), "--gpd", str(tmp_path / "e.json"))
    assert code == 0
    assert g == dumps(rep.steps[1]["output"])
    assert e == dumps(rep.steps[2]["output"])
    assert v == dumps(rep.steps[3]["output"])


def test_pipeline_cli(capsys, tmp_path, prices):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": str(prices), "steps": [{"op": "load"}, {"op": "bad"}]}))
    code, out = run(capsys, "pipeline", "--config", str(cfg))
    d = json.loads(out)
    assert code == 2 and d["step"] == 1


def test_json_writer_round_trips_floats():
    vals = [0.1, 1 / 3, 2.0 ** -1074, 1e308, -0.0]
    assert json.loads(dumps(vals)) == vals
    assert dumps({"a": float("nan"), "b": np.int64(3), "c": np.array([1.5])}) == \
        '{"a": null, "b": 3, "c": [1.5]}'


def test_copula_fit_command(capsys, tmp_path):
    from tailkit import copula as cp
    s = cp.sample_copula(RngStream(12), cp.CopulaSpec("gumbel", 2.0), 800)
    path = write_csv(tmp_path / "uv.csv", ["a", "b"],
                     [(repr(float(a)), repr(float(b))) for a, b in zip(s.u, s.v)])
    code, out = run(capsys, "copula", "fit", "--family", "gumbel", "--input", str(path),
                    "--columns", "a,b")
    assert code == 0
    assert json.loads(out)["theta"] == pytest.approx(2.0, abs=0.25)
