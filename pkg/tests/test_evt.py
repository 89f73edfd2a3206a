import math

import numpy as np
import pytest
from scipy import optimize, stats

from tailkit import evt
from tailkit.mc import RngStream


def test_block_maxima_examples():
    assert evt.block_maxima(np.arange(1.0, 11.0), 5).tolist() == [5, 10]
    assert evt.block_maxima(np.arange(1.0, 12.0), 5).tolist() == [5, 10]
    with pytest.raises(ValueError):
        evt.block_maxima(np.arange(10.0), 20)


@pytest.mark.parametrize("xi", [-0.3, 0.0, 0.25])
def test_gev_cdf_matches_scipy(xi):
    x = np.linspace(-2, 6, 41)
    # scipy's shape c is minus the tail index used here
    ref = stats.genextreme.cdf(x, -xi, loc=0.5, scale=1.3)
    assert np.allclose(evt.gev_cdf(x, xi, 0.5, 1.3), ref, atol=1e-12)
    p = np.array([0.01, 0.5, 0.99])
    assert np.allclose(evt.gev_ppf(p, xi, 0.5, 1.3), stats.genextreme.ppf(p, -xi, 0.5, 1.3), atol=1e-9)


def test_gev_loglik_matches_scipy(rng):
    m = stats.genextreme.rvs(-0.2, loc=1, scale=2, size=200, random_state=rng)
    assert evt.gev_loglik(m, 0.2, 1.0, 2.0) == pytest.approx(
        np.sum(stats.genextreme.logpdf(m, -0.2, 1.0, 2.0)), rel=1e-10)


def test_small_xi_likelihood_is_continuous(rng):
    m = rng.gumbel(size=100)
    for xi in (-1.1e-6, -0.9e-6, 0.9e-6, 1.1e-6):
        ref = np.sum(stats.genextreme.logpdf(m, -xi, 0.0, 1.0))
        assert evt.gev_loglik(m, xi, 0.0, 1.0) == pytest.approx(ref, rel=1e-9)


def test_fit_gev_gumbel_and_mle_agreement():
    g = np.random.default_rng(8)
    m = g.gumbel(2.0, 0.7, 500)
    fit = evt.fit_gev(m)
    lo, hi = fit.ci("xi")
    assert lo <= 0 <= hi
    c, loc, scale = stats.genextreme.fit(m, 0.0, loc=2.0, scale=0.7)
    # our optimum can only be as good or better than scipy's
    assert fit.loglik >= np.sum(stats.genextreme.logpdf(m, c, loc, scale)) - 1e-4
    assert fit.xi == pytest.approx(-c, abs=0.02)


def test_fit_gev_errors():
    with pytest.raises(ValueError):
        evt.fit_gev(np.full(50, 3.0))
    with pytest.raises(ValueError):
        evt.fit_gev(np.arange(10.0))


def test_return_level():
    fit = evt.GevFit(0.2, 0.0, 1.0, 0.0, {}, None, 30)
    u99 = evt.gev_ppf(0.99, 0.2, 0.0, 1.0)
    assert evt.return_level(fit, float(u99)) == pytest.approx(100.0, rel=1e-9)
    assert evt.return_level(fit, -5.0) == 1.0
    neg = evt.GevFit(-0.5, 0.0, 1.0, 0.0, {}, None, 30)
    with pytest.raises(ValueError):
        evt.return_level(neg, 3.0)


def test_gpd_loglik_matches_scipy(rng):
    y = stats.genpareto.rvs(0.3, scale=1.5, size=300, random_state=rng)
    assert evt.gpd_loglik(y, 0.3, 1.5) == pytest.approx(
        np.sum(stats.genpareto.logpdf(y, 0.3, scale=1.5)), rel=1e-10)
    assert evt.gpd_loglik(y, 1e-9, 1.5) == pytest.approx(
        np.sum(stats.expon.logpdf(y, scale=1.5)), rel=1e-7)


def test_fit_gpd_recovery():
    g = np.random.default_rng(4)
    y = stats.genpareto.rvs(0.2, scale=1.0, size=2000, random_state=g)
    x = np.concatenate([-g.random(500), y])
    fit = evt.fit_gpd(x, 0.0)
    assert fit.n_exceed == 2000
    assert abs(fit.xi - 0.2) <= 2 * fit.std_errors["xi"]
    assert abs(fit.beta - 1.0) <= 2 * fit.std_errors["beta"]
    ref = stats.genpareto.fit(y, floc=0.0)
    assert fit.xi == pytest.approx(ref[0], abs=5e-3)


def test_fit_gpd_exponential_and_errors():
    g = np.random.default_rng(5)
    e = g.exponential(size=2000)
    fit = evt.fit_gpd(e, 0.0)
    assert abs(fit.xi) <= 2 * fit.std_errors["xi"]
    with pytest.raises(ValueError):
        evt.fit_gpd(e, e.max())
    d = evt.GpdFit.from_dict(fit.to_dict())
    assert d.xi == fit.xi and d.data_digest == fit.data_digest


def test_fit_gpd_short_tail_flagged():
    g = np.random.default_rng(9)
    y = stats.genpareto.rvs(-0.8, scale=1.0, size=500, random_state=g)
    fit = evt.fit_gpd(y, 0.0)
    assert fit.flagged and fit.std_errors is None
    with pytest.raises(ValueError):
        fit.ci("xi")


def test_hill_examples():
    u = 2.0
    assert evt.hill_estimator(np.full(20, u * math.e), u).alpha_hat == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        evt.hill_estimator(np.array([1.0] + [5.0] * 20), 2.0)
    x = np.array([3.0, 4.0, 5.5, 7.0, 10.0, 12.0, 15.0, 20.0, 30.0, 50.0, 80.0])
    direct = x.size / np.sum(np.log(x / 2.5))
    assert evt.hill_estimator(x, 2.5).alpha_hat == pytest.approx(direct, rel=1e-14)


def test_hill_is_pareto_mle():
    x = stats.pareto.rvs(1.95, scale=1.0, size=5000, random_state=np.random.default_rng(1))
    h = evt.hill_estimator(x, 1.0 - 1e-12)
    ref = optimize.minimize_scalar(lambda a: -np.sum(stats.pareto.logpdf(x, a, scale=1.0 - 1e-12)),
                                   bounds=(0.5, 5), method="bounded", options={"xatol": 1e-10})
    assert h.alpha_hat == pytest.approx(ref.x, rel=1e-6)
    assert h.ci_low < 1.95 < h.ci_high


def test_mean_excess_curves():
    g = np.random.default_rng(12)
    e = g.exponential(0.5, 100_000)
    pts = evt.mean_excess_curve(e, np.linspace(0.1, 2.0, 10))
    assert all(abs(p.mean_excess - 0.5) < 0.05 for p in pts)
    y = stats.genpareto.rvs(0.25, scale=1.0, size=200_000, random_state=g)
    grid = np.linspace(0.05, 3.05, 13)
    pts = evt.mean_excess_curve(y, grid)
    slope = np.polyfit(grid, [p.mean_excess for p in pts], 1)[0]
    assert slope == pytest.approx(1 / 3, abs=0.05)
    with pytest.raises(ValueError):
        evt.mean_excess_curve(e, [e.max() + 1])
    tiny = evt.mean_excess_curve(np.arange(1.0, 11.0), [7.5])
    assert tiny[0].flagged and tiny[0].n_exceed == 3


def test_threshold_selection_mixture():
    g = np.random.default_rng(2)
    body = np.abs(g.standard_normal(8000)) * (2.0 / 2.5)
    body = body[body < 2.0]
    tail = stats.pareto.rvs(2.5, scale=2.0, size=2000, random_state=g)
    x = np.concatenate([body, tail])
    ch = evt.select_threshold_ks(x, min_tail=50)
    assert 1.5 < ch.u < 2.8


def test_threshold_selection_pure_pareto_median_rank():
    ranks = []
    for k in range(15):
        x = stats.pareto.rvs(1.95, size=10_000, random_state=np.random.default_rng(100 + k))
        ch = evt.select_threshold_ks(x, min_tail=50)
        ranks.append(np.mean(x < ch.u))
    assert np.median(ranks) < 0.10


def test_threshold_selection_errors():
    with pytest.raises(ValueError):
        evt.select_threshold_ks(np.arange(1.0, 81.0), min_tail=50)
