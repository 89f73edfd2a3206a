import math

import numpy as np
import pytest
from scipy import stats

from tailkit import backtest as bt
from tailkit.garch import GarchSpec, simulate_garch
from tailkit.mc import RngStream


def test_violation_examples():
    var = np.full(5, 1.0)
    assert bt.violation_series(np.full(5, 0.5), var, 0.01).n_violations == 0
    assert bt.violation_series(var.copy(), var, 0.01).n_violations == 0
    v = bt.violation_series(np.array([0.0, 0.0, 2.0, 0.0, 0.0]), var, 0.01)
    assert v.indicators.tolist() == [0, 0, 1, 0, 0]
    with pytest.raises(ValueError):
        bt.violation_series(np.zeros(4), var, 0.01)


def test_kupiec_closed_forms():
    v = bt.violations_from_indicators(np.zeros(250), 0.01)
    res = bt.kupiec_uc(v)
    assert res.statistic == pytest.approx(-2 * 250 * math.log(0.99), abs=1e-12)
    assert res.rejects(0.05)
    hits = np.zeros(200)
    hits[:10] = 1
    exact = bt.kupiec_uc(bt.violations_from_indicators(hits, 0.05))
    assert exact.statistic == pytest.approx(0.0, abs=1e-12) and exact.p_value == pytest.approx(1.0)


def test_kupiec_matches_binomial_lr():
    hits = np.zeros(500)
    hits[:12] = 1
    res = bt.kupiec_uc(bt.violations_from_indicators(hits, 0.01))
    ll0 = stats.binom.logpmf(12, 500, 0.01)
    ll1 = stats.binom.logpmf(12, 500, 12 / 500)
    assert res.statistic == pytest.approx(2 * (ll1 - ll0), rel=1e-10)
    assert res.p_value == pytest.approx(stats.chi2.sf(res.statistic, 1), rel=1e-10)


def test_dq_matches_statsmodels_wald():
    import statsmodels.api as sm
    g = np.random.default_rng(4)
    var = 1.5 + 0.3 * g.standard_normal(600)
    hits = (g.random(600) < 0.05).astype(int)
    v = bt.violations_from_indicators(hits, 0.05, var)
    res = bt.em_dq(v, K=2)
    h = hits - 0.05
    z = (var - var.mean()) / var.std()
    X = np.column_stack([np.ones(598), h[1:-1], h[:-2], z[1:-1], z[:-2]])
    b = sm.OLS(h[2:], X).fit().params
    assert res.statistic == pytest.approx(b @ X.T @ X @ b / (0.05 * 0.95), rel=1e-9)
    assert res.dof == 5


def test_dq_errors():
    v = bt.violations_from_indicators(np.zeros(20), 0.01, np.linspace(1, 2, 20))
    with pytest.raises(ValueError):
        bt.em_dq(v, K=3)
    c = bt.violations_from_indicators(np.zeros(100), 0.01, np.ones(100))
    with pytest.raises(ValueError):
        bt.em_dq(c, K=1)


def test_dq_power_on_clustered_violations():
    spec = GarchSpec(0.0, 0.0, 0.05, 0.15, 0.8)
    rejections = 0
    reps = 30
    for k in range(reps):
        losses = simulate_garch(RngStream(300, k), spec, 1250).values
        x, path = bt.rolling_var(losses, 0.95, "historical", min_window=250)
        rejections += bt.em_dq(bt.violation_series(x, path, 0.05), K=1).rejects(0.05)
    assert rejections / reps > 0.5


def test_rolling_var_is_ex_ante():
    x = np.arange(1.0, 301.0)
    tail, path = bt.rolling_var(x, 0.99, "historical", min_window=250)
    assert tail.size == path.size == 50
    # VaR at position t uses only losses before t
    assert path[0] == np.sort(x[:250])[math.floor(250 * 0.99)]
    assert np.all(tail > path)


def test_result_json_fields():
    d = bt.kupiec_uc(bt.violations_from_indicators(np.zeros(250), 0.01)).to_dict()
    assert set(d) >= {"stat", "dof", "p", "reject"} and d["reject"]["0.05"]
