import math

import numpy as np
import pytest
import sympy as sp
from scipy import integrate, stats

from tailkit import copula as cp
from tailkit.mc import RngStream
from tailkit.series import kendall_tau

GRID = np.linspace(0.05, 0.95, 10)
U, V = np.meshgrid(GRID, GRID)

SPECS = [
    cp.CopulaSpec("independence"),
    cp.CopulaSpec("gaussian", 0.6),
    cp.CopulaSpec("gaussian", -0.4),
    cp.CopulaSpec("student_t", 0.5, 4.0),
    cp.CopulaSpec("clayton", 2.0),
    cp.CopulaSpec("gumbel", 2.0),
    cp.CopulaSpec("frank", 5.0),
    cp.CopulaSpec("frank", -3.0),
]


def _sympy_density(expr_c, theta):
    u, v = sp.symbols("u v", positive=True)
    dens = sp.diff(expr_c(u, v, theta), u, v)
    return sp.lambdify((u, v), dens, "numpy")


def _gumbel_c(u, v, t):
    return sp.exp(-((-sp.log(u)) ** t + (-sp.log(v)) ** t) ** (1 / t))


def _frank_c(u, v, t):
    return -sp.log(1 + (sp.exp(-t * u) - 1) * (sp.exp(-t * v) - 1) / (sp.exp(-t) - 1)) / t


def _clayton_c(u, v, t):
    return (u ** (-t) + v ** (-t) - 1) ** (-1 / t)


@pytest.mark.parametrize("maker,family,theta", [
    (_gumbel_c, "gumbel", 2.0), (_gumbel_c, "gumbel", 1.3),
    (_frank_c, "frank", 2.0), (_frank_c, "frank", -4.0), (_clayton_c, "clayton", 1.5),
])
def test_archimedean_density_symbolic(maker, family, theta):
    ref = _sympy_density(maker, sp.Float(theta))
    spec = cp.CopulaSpec(family, theta)
    assert np.allclose(cp.copula_density(spec, U, V), ref(U, V), rtol=1e-9)
    u, v = sp.symbols("u v", positive=True)
    cdf = sp.lambdify((u, v), maker(u, v, sp.Float(theta)), "numpy")
    assert np.allclose(cp.copula_cdf(spec, U, V), cdf(U, V), atol=1e-12)


def test_elliptical_against_scipy():
    g = cp.CopulaSpec("gaussian", 0.6)
    x, y = stats.norm.ppf(U), stats.norm.ppf(V)
    mvn = stats.multivariate_normal([0, 0], [[1, 0.6], [0.6, 1]])
    pts = np.dstack([x, y])
    dens = mvn.pdf(pts) / (stats.norm.pdf(x) * stats.norm.pdf(y))
    assert np.allclose(cp.copula_density(g, U, V), dens, rtol=1e-10)
    assert cp.copula_cdf(g, 0.3, 0.7) == pytest.approx(mvn.cdf([stats.norm.ppf(0.3), stats.norm.ppf(0.7)]), abs=1e-6)
    t = cp.CopulaSpec("student_t", 0.5, 4.0)
    a, b = stats.t.ppf(0.3, 4), stats.t.ppf(0.6, 4)
    mvt = stats.multivariate_t([0, 0], [[1, 0.5], [0.5, 1]], df=4)
    assert cp.copula_density(t, 0.3, 0.6) == pytest.approx(
        mvt.pdf([a, b]) / (stats.t.pdf(a, 4) * stats.t.pdf(b, 4)), rel=1e-10)
    assert cp.copula_cdf(t, 0.3, 0.6) == pytest.approx(mvt.cdf([a, b], random_state=0), abs=2e-4)


def test_examples():
    assert cp.copula_cdf(cp.CopulaSpec("independence"), 0.3, 0.5) == pytest.approx(0.15, abs=1e-15)
    G = np.linspace(0.02, 0.98, 20)
    uu, vv = np.meshgrid(G, G)
    assert np.max(np.abs(cp.copula_cdf(cp.CopulaSpec("gumbel", 1.0), uu, vv) - uu * vv)) < 1e-12
    assert np.max(np.abs(cp.copula_density(cp.CopulaSpec("frank", 1e-8), uu, vv) - 1)) < 1e-4
    assert np.allclose(cp.copula_density(cp.CopulaSpec("gaussian", 0.0), uu, vv), 1.0, atol=1e-12)


def test_frank_density_integrates_to_one():
    spec = cp.CopulaSpec("frank", 2.0)
    val, _ = integrate.dblquad(lambda v, u: float(cp.copula_density(spec, u, v)), 0, 1, 0, 1,
                               epsabs=1e-10)
    assert val == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.family}-{s.theta}")
def test_copula_axioms(spec):
    C = np.asarray(cp.copula_cdf(spec, U, V))
    assert np.all(C >= np.maximum(U + V - 1, 0) - 1e-9)
    assert np.all(C <= np.minimum(U, V) + 1e-9)
    assert np.allclose(cp.copula_cdf(spec, GRID, np.ones_like(GRID)), GRID, atol=1e-9)
    assert np.allclose(cp.copula_cdf(spec, np.zeros_like(GRID), GRID), 0, atol=1e-12)
    box = C[1:, 1:] - C[1:, :-1] - C[:-1, 1:] + C[:-1, :-1]
    assert np.all(box >= -1e-9)


def test_tau_inversion_examples():
    assert cp.fit_tau_inversion(0.5, "gumbel").theta == pytest.approx(2.0)
    assert cp.fit_tau_inversion(0.5, "clayton").theta == pytest.approx(2.0)
    assert cp.fit_tau_inversion(0.5, "gaussian").theta == pytest.approx(math.sin(math.pi / 4))
    f = cp.fit_tau_inversion(0.3, "frank")
    # Frank tau by quadrature of the Debye integral
    t = f.theta
    d1 = integrate.quad(lambda s: s / math.expm1(s), 0, t)[0] / t
    assert 1 - 4 / t * (1 - d1) == pytest.approx(0.3, abs=1e-10)


def test_pseudo_observations_examples():
    assert cp.pseudo_observations([3.0], [1.0]).u.tolist() == [0.5]
    p = cp.pseudo_observations(np.arange(5.0), np.arange(5.0))
    assert p.u == pytest.approx(np.arange(1, 6) / 6)
    assert np.all(cp.pseudo_observations(np.ones(7), np.arange(7.0)).u == 0.5)


def test_sampling_round_trip():
    s = RngStream(77)
    for spec in (cp.CopulaSpec("gaussian", 0.5), cp.CopulaSpec("clayton", 2.0),
                 cp.CopulaSpec("gumbel", 2.0), cp.CopulaSpec("frank", 5.0),
                 cp.CopulaSpec("student_t", 0.5, 5.0)):
        x = cp.sample_copula(s, spec, 4000)
        tau = kendall_tau(x.u, x.v)
        # var(tau_hat) is at most about 4/(9n) (1 - tau^2) x 2, a loose bound
        se = math.sqrt(2 * 4 / (9 * 4000))
        assert tau == pytest.approx(cp.kendall_tau_of(spec), abs=3 * se)
        back = cp.fit_tau_inversion(tau, spec.family, nu=spec.nu)
        assert back.theta == pytest.approx(spec.theta, rel=0.15)
    ind = cp.sample_copula(s, cp.CopulaSpec("gaussian", 0.0), 10_000)
    assert abs(kendall_tau(ind.u, ind.v)) < 0.03


def test_fit_cml():
    s = RngStream(5)
    x = cp.sample_copula(s, cp.CopulaSpec("gumbel", 2.0), 5000)
    assert cp.fit_cml(x, "gumbel").theta == pytest.approx(2.0, abs=0.15)
    ind = cp.sample_copula(s, cp.CopulaSpec("independence"), 3000)
    assert cp.fit_cml(ind, "gumbel").theta <= 1.05
    with pytest.raises(ValueError):
        cp.fit_cml(cp.pseudo_observations(np.arange(10.0), np.arange(10.0)), "gumbel")
    t = cp.sample_copula(s, cp.CopulaSpec("student_t", 0.6, 5.0), 2000)
    ft = cp.fit_cml(t, "student_t")
    assert ft.theta == pytest.approx(0.6, abs=0.05) and 3 <= ft.nu <= 30


def test_cml_beats_neighbours():
    x = cp.sample_copula(RngStream(8), cp.CopulaSpec("clayton", 1.5), 1500)
    fit = cp.fit_cml(x, "clayton")
    ll = lambda t: float(np.sum(np.log(cp.copula_density(cp.CopulaSpec("clayton", t), x.u, x.v))))
    assert fit.loglik == pytest.approx(ll(fit.theta), rel=1e-9)
    assert ll(fit.theta) >= max(ll(fit.theta * 0.98), ll(fit.theta * 1.02))


def test_tail_dependence():
    assert cp.tail_dependence(cp.CopulaSpec("independence")) == cp.TailDependence(0.0, 0.0)
    g = cp.tail_dependence(cp.CopulaSpec("gaussian", 0.5))
    assert (g.lambda_lower, g.lambda_upper) == (0.0, 0.0)
    gu = cp.tail_dependence(cp.CopulaSpec("gumbel", 2.0))
    assert gu.lambda_upper == pytest.approx(2 - math.sqrt(2)) and gu.lambda_lower == 0
    num = cp.tail_dependence(cp.CopulaSpec("gumbel", 2.0), "numeric")
    assert num.lambda_upper == pytest.approx(2 - math.sqrt(2), abs=1e-3)
    cl = cp.tail_dependence(cp.CopulaSpec("clayton", 2.0), "numeric")
    assert cl.converged and cl.lambda_lower == pytest.approx(2 ** -0.5, abs=1e-3)


def test_spec_validation_and_json():
    for bad in (("gaussian", 1.0), ("clayton", -1.0), ("gumbel", 0.5), ("frank", 0.0)):
        with pytest.raises(ValueError):
            cp.CopulaSpec(*bad)
    with pytest.raises(ValueError):
        cp.CopulaSpec("student_t", 0.3, 2.0)
    s = cp.CopulaSpec("student_t", 0.3, 6.0, -12.5)
    assert cp.CopulaSpec.from_dict(s.to_dict()) == s


def test_sample_margins_uniform():
    spec = cp.CopulaSpec("clayton", 3.0)
    passes = 0
    for k in range(100):
        x = cp.sample_copula(RngStream(40, k), spec, 500)
        passes += stats.kstest(x.v, "uniform").pvalue > 0.05
    assert passes >= 90
