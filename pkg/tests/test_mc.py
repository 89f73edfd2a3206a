import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tailkit.mc import (RngStream, box_muller, cholesky, estimate_pi, exponential_ppf,
                        mc_integrate, pareto_ppf, pi_from_points, sample_inverse_transform,
                        sample_mvnormal, sample_normal_box_muller, sample_uniform)


def test_uniform_moments(stream):
    u = sample_uniform(stream, 1_000_000)
    assert u.mean() == pytest.approx(0.5, abs=1e-3)
    assert u.std() == pytest.approx(math.sqrt(1 / 12), abs=1e-3)
    assert u.min() >= 0 and u.max() < 1
    with pytest.raises(ValueError):
        sample_uniform(stream, 10, 1.0, 1.0)


def test_streams_reproducible_and_distinct():
    a = RngStream(7, 3).uniform(100)
    b = RngStream(7, 3).uniform(100)
    c = RngStream(7, 4).uniform(100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    parent = RngStream(7)
    s1 = parent.substream(1).uniform(5)
    assert np.array_equal(s1, RngStream(7).substream(1).uniform(5))
    assert np.array_equal(parent.uniform(5), RngStream(7).uniform(5))


def test_box_muller_formula():
    assert box_muller(math.exp(-0.5), 0.0) == pytest.approx(1.0, abs=1e-15)
    assert box_muller(math.exp(-0.5), 0.25) == pytest.approx(0.0, abs=1e-15)


def test_box_muller_sample(stream):
    z = sample_normal_box_muller(stream, 1_000_000)
    assert z.mean() == pytest.approx(0.0, abs=0.004)
    assert z.std() == pytest.approx(1.0, abs=0.004)
    assert np.all(np.isfinite(z))


def test_inverse_transform_points():
    assert exponential_ppf(1 - math.exp(-1), 1.0) == pytest.approx(1.0, abs=1e-14)
    assert pareto_ppf(0.5, 1.0, 1.0) == pytest.approx(2.0, abs=1e-14)
    with pytest.raises(ValueError):
        pareto_ppf(0.5, -1.0)
    with pytest.raises(ValueError):
        exponential_ppf(0.5, 0.0)


def test_inverse_transform_sample(stream):
    x = sample_inverse_transform(stream, 1_000_000, "exponential", 2.0)
    assert x.mean() == pytest.approx(0.5, abs=0.002)
    p = sample_inverse_transform(stream, 10_000, "pareto", 3.0, 2.0)
    assert p.min() >= 2.0


def test_cholesky_examples():
    assert np.array_equal(cholesky(np.eye(3)), np.eye(3))
    assert np.allclose(cholesky([[4, 2], [2, 5]]), [[2, 0], [1, 2]], atol=1e-15)
    with pytest.raises(ValueError):
        cholesky([[1, 2], [2, 1]])
    with pytest.raises(ValueError):
        cholesky([[1, 0.5], [0.4, 1]])


@settings(max_examples=50)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_cholesky_round_trip(n, seed):
    g = np.random.default_rng(seed)
    L = np.tril(g.uniform(-1, 1, (n, n)))
    L[np.diag_indices(n)] = g.uniform(0.5, 2.0, n)
    assert np.allclose(cholesky(L @ L.T), L, atol=1e-10)


def test_mvnormal(stream):
    x = sample_mvnormal(stream, 100_000, np.eye(3))
    c = np.cov(x.T)
    assert np.max(np.abs(c - np.diag(np.diag(c)))) < 0.02
    cov = np.full((3, 3), 0.05) + np.eye(3) * 1.33
    y = sample_mvnormal(stream, 100_000, cov)
    assert np.max(np.abs(np.cov(y.T) - cov)) < 0.03
    with pytest.raises(ValueError):
        sample_mvnormal(stream, 10, [[1, 0.2], [0.1, 1]])


def test_pi_examples(stream):
    assert pi_from_points(np.array([0.0]), np.array([0.0])).value == 4.0
    est = estimate_pi(stream, 1_000_000)
    assert abs(est.value - math.pi) < 0.005
    a = estimate_pi(RngStream(1), 200_000).std_error
    b = estimate_pi(RngStream(1), 400_000).std_error
    assert b / a == pytest.approx(1 / math.sqrt(2), rel=0.02)


def test_pi_interval_coverage():
    hits = 0
    for k in range(100):
        e = estimate_pi(RngStream(99, k), 10_000)
        hits += abs(e.value - math.pi) <= 1.96 * e.std_error
    assert 90 <= hits <= 99


def test_integrate_constant(stream):
    e = mc_integrate(stream, lambda x: np.ones_like(x), (0.0, 1.0), 1000)
    assert e.value == 1.0 and e.std_error == 0.0
    e2 = mc_integrate(stream, lambda x: np.full(len(x), 2.0), [(0, 2), (0, 3)], 100)
    assert e2.value == 12.0 and e2.std_error == 0.0
    with pytest.raises(ValueError):
        mc_integrate(stream, np.exp, (1.0, 1.0), 10)


def test_integrate_exp(stream):
    n = 400_000
    e = mc_integrate(stream, np.exp, (0.0, 1.0), n)
    assert e.value == pytest.approx(math.e - 1, abs=4 * math.sqrt(0.2420356 / n))
    assert e.std_error == pytest.approx(math.sqrt(0.2420356 / n), rel=0.01)


def test_integrate_variance_constant():
    # the per-draw variance of e^U is (e^2 - 1)/2 - (e - 1)^2
    assert (math.e**2 - 1) / 2 - (math.e - 1) ** 2 == pytest.approx(0.2420356, abs=1e-7)
