"""Seeded random streams, samplers and plain Monte Carlo estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PD_RELATIVE_TOL = 1e-12


@dataclass
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    Streams with the same pair replay the same draws; different ``stream_id``
    values come from independent SeedSequence children. A stream carries
    mutable generator state, so do not share one across threads.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def substream(self, k: int) -> "RngStream":
        """Independent child stream; does not touch this stream's state."""
        child = RngStream(self.seed, self.stream_id)
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), int(k)))
        child.generator = np.random.Generator(np.random.PCG64(ss))
        return child

    def uniform(self, size) -> np.ndarray:
        return self.generator.random(size)

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n: int

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.std_error, "n": self.n}


def sample_uniform(stream: RngStream, n: int, a: float = 0.0, b: float = 1.0) -> np.ndarray:
    if not a < b:
        raise ValueError("need a < b")
    if n < 1:
        raise ValueError("n must be positive")
    return a + (b - a) * stream.uniform(n)


def box_muller(u1, u2) -> np.ndarray:
    """Cosine branch of the Box-Muller map; ``u1`` must lie in (0, 1]."""
    u1 = np.asarray(u1, dtype=float)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * np.asarray(u2, dtype=float))


def sample_normal_box_muller(stream: RngStream, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    u = stream.uniform((2, n))
    # generator yields [0, 1); shift to (0, 1] so the log is finite
    return box_muller(1.0 - u[0], u[1])


def exponential_ppf(u, rate: float) -> np.ndarray:
    if rate <= 0:
        raise ValueError("rate must be positive")
    return -np.log1p(-np.asarray(u, dtype=float)) / rate


def pareto_ppf(u, alpha: float, x_m: float = 1.0) -> np.ndarray:
    if alpha <= 0 or x_m <= 0:
        raise ValueError("alpha and x_m must be positive")
    return x_m * (1.0 - np.asarray(u, dtype=float)) ** (-1.0 / alpha)


def sample_inverse_transform(stream: RngStream, n: int, target: str, alpha: float,
                             x_m: float = 1.0) -> np.ndarray:
    """Draw from ``exponential`` (rate ``alpha``) or ``pareto`` (``alpha``, ``x_m``)."""
    if n < 1:
        raise ValueError("n must be positive")
    u = stream.uniform(n)
    if target == "exponential":
        return exponential_ppf(u, alpha)
    if target == "pareto":
        return pareto_ppf(u, alpha, x_m)
    raise ValueError(f"unknown target {target!r}")


def cholesky(matrix, sym_tol: float = 1e-10) -> np.ndarray:
    """Lower Cholesky factor by the column-wise Cholesky-Banachiewicz recursion.

    Raises ``ValueError`` for asymmetric input or when a pivot falls below
    ``1e-12 * max(diag)``.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > sym_tol * scale:
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    tol = PD_RELATIVE_TOL * float(np.max(np.diag(a), initial=0.0))
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if pivot <= tol or pivot <= 0:
            raise ValueError(f"matrix is not positive definite (pivot {j} = {pivot:.3g})")
        low[j, j] = math.sqrt(pivot)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def sample_mvnormal(stream: RngStream, n: int, cov) -> np.ndarray:
    """Rows of zero-mean normal vectors with covariance ``cov``."""
    low = cholesky(cov)
    z = stream.normal((n, low.shape[0]))
    return z @ low.T


def estimate_pi(stream: RngStream, n: int) -> McEstimate:
    if n < 1:
        raise ValueError("n must be positive")
    xy = stream.uniform((2, n)) * 2.0 - 1.0
    return pi_from_points(xy[0], xy[1])


def pi_from_points(x, y) -> McEstimate:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    n = x.size
    p = np.count_nonzero(x * x + y * y <= 1.0) / n
    return McEstimate(4.0 * p, 4.0 * math.sqrt(p * (1.0 - p) / n), n)


def mc_integrate(stream: RngStream, f: Callable[[np.ndarray], np.ndarray],
                 domain: Sequence[tuple[float, float]] | tuple[float, float], n: int) -> McEstimate:
    """Plain MC estimate of the integral of ``f`` over an axis-aligned box.

    ``domain`` is ``(lo, hi)`` for one dimension or a sequence of such pairs.
    In one dimension ``f`` receives a 1-d array of points, otherwise an
    ``(n, d)`` array.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    box = np.atleast_2d(np.asarray(domain, dtype=float))
    lo, hi = box[:, 0], box[:, 1]
    volume = float(np.prod(hi - lo))
    if not volume > 0 or not np.isfinite(volume):
        raise ValueError("domain must have finite positive volume")
    pts = lo + (hi - lo) * stream.uniform((n, box.shape[0]))
    if box.shape[0] == 1:
        pts = pts[:, 0]
    vals = np.broadcast_to(np.asarray(f(pts), dtype=float), (n,))
    mean = float(np.mean(vals))
    spread = float(np.std(vals, ddof=1))
    return McEstimate(volume * mean, volume * spread / math.sqrt(n), n)
