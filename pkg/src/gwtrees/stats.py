"""Statistical machinery for comparing samplers against exact references."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from .errors import InsufficientSamples


@dataclass
class EmpiricalDist:
    counts: dict = field(default_factory=dict)
    total: int = 0

    def add(self, value, count: int = 1):
        self.counts[value] = self.counts.get(value, 0) + count
        self.total += count

    @classmethod
    def from_samples(cls, samples):
        d = cls()
        for s in samples:
            d.add(s)
        return d


def tvd(emp: EmpiricalDist, ref: dict) -> float:
    """Total variation distance: half the L1 gap over the union support."""
    if emp.total < 1:
        raise InsufficientSamples("empirical distribution is empty")
    keys = set(emp.counts) | set(ref)
    return 0.5 * sum(abs(emp.counts.get(k, 0) / emp.total - float(ref.get(k, 0)))
                     for k in keys)


def chi_square_uniform(counts) -> tuple:
    """Pearson statistic and p-value against the uniform expectation.

    The p-value is the chi-square survival function at c - 1 degrees of
    freedom, i.e. the regularized upper incomplete gamma Q((c-1)/2, x/2).
    """
    counts = list(counts)
    c = len(counts)
    total = sum(counts)
    if c < 2 or total < 10 * c:
        raise InsufficientSamples(
            f"need >= 2 cells and >= 10 samples per cell, got c={c}, total={total}")
    expected = total / c
    stat = sum((x - expected) ** 2 for x in counts) / expected
    p = float(gammaincc((c - 1) / 2.0, stat / 2.0))
    return stat, p


def fit_exponent(points) -> float:
    """Least-squares slope of log(mean) against log(n)."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(n <= 0 or m <= 0 for n, m in pts):
        raise ValueError("points must be positive")
    xs = np.log([n for n, _ in pts])
    ys = np.log([m for _, m in pts])
    return float(np.polyfit(xs, ys, 1)[0])


def mean_ci(samples) -> tuple:
    """Sample mean with a 1.96-sigma normal half-width.

    A single sample yields half-width 0 by convention (degenerate).
    """
    arr = np.asarray(list(samples), dtype=float)
    if arr.size == 0:
        raise InsufficientSamples("no samples")
    mean = float(arr.mean())
    if arr.size == 1:
        return mean, 0.0
    half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    return mean, half
