"""Statistics helpers, with an independent incomplete-gamma cross-check."""

import math

import pytest

from gwtrees.errors import InsufficientSamples
from gwtrees.stats import EmpiricalDist, chi_square_uniform, fit_exponent, mean_ci, tvd


def test_tvd_examples():
    e = EmpiricalDist.from_samples([2, 2, 3, 3])
    assert tvd(e, {2: 0.5, 3: 0.5}) == 0.0
    assert tvd(e, {7: 1.0}) == 1.0
    e2 = EmpiricalDist.from_samples([2, 3])
    assert tvd(e2, {2: 1.0}) == 0.5


def test_tvd_symmetry_and_range():
    a = EmpiricalDist.from_samples([1, 1, 2, 3])
    b = EmpiricalDist.from_samples([1, 2, 2, 4])
    pa = {k: v / a.total for k, v in a.counts.items()}
    pb = {k: v / b.total for k, v in b.counts.items()}
    assert abs(tvd(a, pb) - tvd(b, pa)) < 1e-15
    assert 0.0 <= tvd(a, pb) <= 1.0


def test_chi_square_examples():
    stat, p = chi_square_uniform([100, 100, 100])
    assert stat == 0.0 and p == 1.0
    stat, p = chi_square_uniform([30, 10])
    assert abs(stat - 10.0) < 1e-12
    assert abs(p - 0.0015654) < 2e-5


def test_chi_square_monotone_in_statistic():
    last = 1.1
    for skew in range(0, 60, 10):
        _, p = chi_square_uniform([100 + skew, 100 - skew])
        assert p < last or skew == 0
        last = p


def test_chi_square_guards():
    with pytest.raises(InsufficientSamples):
        chi_square_uniform([100])
    with pytest.raises(InsufficientSamples):
        chi_square_uniform([5, 5])


def _gamma_q_reference(a, x, eps=1e-12):
    """Regularized upper incomplete gamma via series / continued fraction."""
    if x < a + 1.0:
        # lower series, then complement
        term = 1.0 / a
        total = term
        k = a
        while True:
            k += 1.0
            term *= x / k
            total += term
            if abs(term) < abs(total) * eps:
                break
        p = total * math.exp(-x + a * math.log(x) - math.lgamma(a))
        return 1.0 - p
    # Lentz continued fraction for the upper function
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


@pytest.mark.parametrize("cells,counts", [
    (2, [30, 10]),
    (5, [120, 80, 95, 105, 100]),
    (14, [110] * 7 + [95] * 7),
    (3, [40, 30, 50]),
])
def test_p_value_against_reference_implementation(cells, counts):
    stat, p = chi_square_uniform(counts)
    ref = _gamma_q_reference((cells - 1) / 2.0, stat / 2.0)
    assert abs(p - ref) <= 1e-8 * max(ref, 1e-12)


def test_fit_exponent_exact_grids():
    pts_sqrt = [(n, math.sqrt(n)) for n in (10, 100, 1000, 10_000)]
    assert abs(fit_exponent(pts_sqrt) - 0.5) < 1e-9
    pts_lin = [(n, float(n)) for n in (10, 100, 1000)]
    assert abs(fit_exponent(pts_lin) - 1.0) < 1e-9
    pts_scaled = [(n, 7.3 * math.sqrt(n)) for n in (10, 100, 1000)]
    assert abs(fit_exponent(pts_scaled) - 0.5) < 1e-9
    with pytest.raises(ValueError):
        fit_exponent([(10, 1.0), (100, 2.0)])


def test_mean_ci():
    m, h = mean_ci([3.0, 3.0, 3.0])
    assert m == 3.0 and h == 0.0
    m, h = mean_ci([0, 1] * 5000)
    assert abs(m - 0.5) < 0.02 and h > 0
    assert mean_ci([4.2]) == (4.2, 0.0)  # degenerate single sample
    with pytest.raises(InsufficientSamples):
        mean_ci([])
