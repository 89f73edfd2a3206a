"""Return series ingestion, descriptive statistics and empirical distribution helpers."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats


class Convention(str, Enum):
    PRICE = "price"
    SIMPLE_RETURN = "simple-return"
    LOG_RETURN = "log-return"
    LOSS = "loss"


@dataclass(frozen=True)
class ReturnSeries:
    """Ordered numeric observations tagged with their sign convention.

    ``timestamps`` is optional; when given it must be strictly increasing and
    have the same length as ``values``.
    """

    values: np.ndarray
    convention: Convention = Convention.LOG_RETURN
    timestamps: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size < 1:
            raise ValueError("series must contain at least one observation")
        if not np.all(np.isfinite(values)):
            raise ValueError("series values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "convention", Convention(self.convention))
        if self.timestamps is not None:
            ts = tuple(str(t) for t in self.timestamps)
            if len(ts) != values.size:
                raise ValueError("timestamps and values differ in length")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.values.size

    def as_losses(self) -> "ReturnSeries":
        """Flip a return series into loss sign (positive = loss)."""
        if self.convention is Convention.LOSS:
            return self
        if self.convention is Convention.PRICE:
            raise ValueError("convert prices to returns before taking losses")
        return ReturnSeries(-self.values, Convention.LOSS, self.timestamps)

    def to_records(self) -> list[dict]:
        ts = self.timestamps or tuple(range(len(self)))
        return [{"t": t, "v": float(v)} for t, v in zip(ts, self.values)]

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    def to_csv(self, path) -> None:
        ts = self.timestamps or tuple(range(len(self)))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["timestamp", "value"])
            for t, v in zip(ts, self.values):
                writer.writerow([t, repr(float(v))])


def digest(values) -> str:
    """Short content hash used to track which data an estimate came from."""
    arr = np.ascontiguousarray(np.asarray(values, dtype=float))
    return hashlib.sha1(arr.tobytes()).hexdigest()[:16]


def _as_array(x) -> np.ndarray:
    if isinstance(x, ReturnSeries):
        return x.values
    return np.asarray(x, dtype=float).reshape(-1)


def load_csv(
    path,
    column: str | int,
    *,
    sep: str = ",",
    skip_bad: bool = False,
    time_column: str | int | None = None,
    convention: Convention | str = Convention.PRICE,
) -> ReturnSeries:
    """Read one numeric column of a headed CSV file.

    Rows whose cell does not parse as a float raise ``ValueError`` unless
    ``skip_bad`` is set, in which case they are dropped.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=sep)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        col = _resolve_column(header, column)
        tcol = None if time_column is None else _resolve_column(header, time_column)
        rows = list(reader)
        # trailing empty lines are file padding, interior ones are blank values
        while rows and not any(c.strip() for c in rows[-1]):
            rows.pop()
        values, stamps = [], []
        for lineno, row in enumerate(rows, start=2):
            cell = row[col].strip() if col < len(row) else ""
            try:
                v = float(cell)
                if not math.isfinite(v):
                    raise ValueError
            except ValueError:
                if skip_bad:
                    continue
                raise ValueError(f"{path}:{lineno}: non-numeric value {cell!r}") from None
            values.append(v)
            if tcol is not None:
                stamps.append(row[tcol].strip())
    if not values:
        raise ValueError(f"{path}: no usable rows in column {column!r}")
    return ReturnSeries(np.array(values), convention, tuple(stamps) if tcol is not None else None)


def _resolve_column(header: Sequence[str], column: str | int) -> int:
    if isinstance(column, int) or (isinstance(column, str) and column.isdigit() and column not in header):
        idx = int(column)
        if not 0 <= idx < len(header):
            raise KeyError(f"column index {idx} out of range")
        return idx
    try:
        return list(header).index(column)
    except ValueError:
        raise KeyError(f"missing column {column!r}; have {list(header)}") from None


def to_returns(series: ReturnSeries, mode: str = "log") -> ReturnSeries:
    if series.convention is not Convention.PRICE:
        raise ValueError("to_returns expects a price series")
    p = series.values
    if p.size < 2:
        raise ValueError("need at least two prices")
    ts = series.timestamps[1:] if series.timestamps else None
    if mode == "simple":
        return ReturnSeries(p[1:] / p[:-1] - 1.0, Convention.SIMPLE_RETURN, ts)
    if mode == "log":
        if np.any(p <= 0):
            raise ValueError("log returns need strictly positive prices")
        return ReturnSeries(np.log(p[1:] / p[:-1]), Convention.LOG_RETURN, ts)
    raise ValueError(f"unknown return mode {mode!r}")


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    std: float
    skewness: float | None = None
    kurtosis: float | None = None

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "std": self.std,
                "skewness": self.skewness, "kurtosis": self.kurtosis}


def moments(x) -> tuple[float, float]:
    """Skewness and raw kurtosis from population central moments."""
    x = _as_array(x)
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 <= 0 or m2 <= 1e-28 * max(1.0, float(np.mean(x * x))):
        raise ValueError("constant series has no skewness/kurtosis")
    return float(np.mean(d**3) / m2**1.5), float(np.mean(d**4) / m2**2)


def summary_stats(series, higher: bool = True) -> SummaryStats:
    x = _as_array(series)
    n = x.size
    if n < 2:
        raise ValueError("summary statistics need n >= 2")
    mean = float(np.mean(x))
    std = float(np.sqrt(np.sum((x - mean) ** 2) / (n - 1)))
    if not higher:
        return SummaryStats(n, mean, std)
    skew, kurt = moments(x)
    return SummaryStats(n, mean, std, skew if n >= 3 else None, kurt if n >= 4 else None)


def empirical_quantile(series, p: float) -> float:
    """Smallest observation x with empirical CDF(x) >= p."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    x = np.sort(_as_array(series))
    k = math.ceil(p * x.size - 1e-9)
    return float(x[max(k, 1) - 1])


def ecdf(sample, points) -> np.ndarray:
    s = np.sort(_as_array(sample))
    return np.searchsorted(s, np.asarray(points, dtype=float), side="right") / s.size


def mean_ranks(x) -> np.ndarray:
    """1-based ranks, ties receiving the average of the ranks they span."""
    return stats.rankdata(_as_array(x), method="average")


def kendall_tau(x, y) -> float:
    """Kendall tau-a: (concordant - discordant) / (n(n-1)/2), tied pairs count zero.

    scipy returns tau-b in O(n log n); the numerator is recovered from it and
    the tie counts, then normalised by all pairs.
    """
    x, y = _as_array(x), _as_array(y)
    n = x.size
    n0 = n * (n - 1) / 2
    tau_b = stats.kendalltau(x, y).statistic
    if not np.isfinite(tau_b):
        return 0.0
    tx = _tied_pairs(x)
    ty = _tied_pairs(y)
    s = tau_b * math.sqrt((n0 - tx) * (n0 - ty))
    return float(s / n0)


def _tied_pairs(x: np.ndarray) -> float:
    _, counts = np.unique(x, return_counts=True)
    return float(np.sum(counts * (counts - 1) / 2))


def spearman_rho(x, y) -> float:
    rx, ry = mean_ranks(x), mean_ranks(y)
    n = rx.size
    d = rx - ry
    return float(1.0 - 6.0 * np.sum(d * d) / (n * (n * n - 1)))


def pearson(x, y) -> float:
    x, y = _as_array(x), _as_array(y)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = np.sum(dx * dx), np.sum(dy * dy)
    if sxx == 0 or syy == 0:
        raise ValueError("Pearson correlation undefined for constant input")
    return float(np.sum(dx * dy) / math.sqrt(sxx * syy))


@dataclass(frozen=True)
class Correlations:
    pearson: float
    kendall: float
    spearman: float

    def to_dict(self) -> dict:
        return {"pearson": self.pearson, "kendall": self.kendall, "spearman": self.spearman}


def rank_correlations(x, y) -> Correlations:
    x, y = _as_array(x), _as_array(y)
    if x.size != y.size:
        raise ValueError("inputs differ in length")
    if x.size < 2:
        raise ValueError("need at least two pairs")
    return Correlations(pearson(x, y), kendall_tau(x, y), spearman_rho(x, y))
